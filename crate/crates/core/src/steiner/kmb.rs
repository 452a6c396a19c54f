//! Metric-closure MST heuristic for Steiner trees (factor 2).

use super::{closure_edges_to_tree, normalized, Host, SteinerSolution};
use crate::metric::EdgeSubgraph;

/// Approximate Steiner tree on `terminals`, which must lie in the host.
///
/// MST of the terminal closure, expanded into host routes, re-spanned and
/// pruned of non-terminal leaves. Ties break toward lower point ids.
pub fn steiner_approx(host: &Host<'_>, terminals: &[usize]) -> SteinerSolution {
    let terms = normalized(terminals);
    debug_assert!(terms.iter().all(|&t| host.contains(t)));
    if terms.len() <= 1 {
        return SteinerSolution::from_edges(EdgeSubgraph::default());
    }
    let m = host.metric();
    let k = terms.len();
    let mut in_tree = vec![false; k];
    let mut best = vec![f64::INFINITY; k];
    let mut parent = vec![0usize; k];
    let mut closure = Vec::with_capacity(k - 1);
    in_tree[0] = true;
    for j in 1..k {
        best[j] = m.dist(terms[0], terms[j]);
    }
    for _ in 1..k {
        let mut pick = usize::MAX;
        for j in 0..k {
            if !in_tree[j] && (pick == usize::MAX || best[j] < best[pick]) {
                pick = j;
            }
        }
        in_tree[pick] = true;
        closure.push((terms[parent[pick]], terms[pick]));
        for j in 0..k {
            if !in_tree[j] {
                let d = m.dist(terms[pick], terms[j]);
                if d < best[j] {
                    best[j] = d;
                    parent[j] = pick;
                }
            }
        }
    }
    SteinerSolution::from_edges(closure_edges_to_tree(host, &closure, &terms))
}
