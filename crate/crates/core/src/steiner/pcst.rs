//! Rooted prize-collecting Steiner tree by primal-dual growth and pruning
//! (Goemans–Williamson), followed by optimal pruning of the resulting tree.

use std::collections::{BTreeMap, BTreeSet};

use super::{normalized, prune_leaves, steiner_approx, tree_adjacency, Host, PcstSolution};
use crate::metric::EdgeSubgraph;

struct Component {
    members: Vec<usize>,
    grown: f64,
    penalty: f64,
    has_root: bool,
    active: bool,
}

/// Approximate rooted PCST. Keys of `penalties` are terminal points; the
/// root and every terminal must lie in the host.
///
/// Returns the cheapest of: the pruned primal-dual tree, serving nothing,
/// and a fresh Steiner tree over the root and the primal-dual served set.
pub fn pcst_approx(host: &Host<'_>, penalties: &BTreeMap<usize, f64>, root: usize) -> PcstSolution {
    debug_assert!(host.contains(root));
    debug_assert!(penalties.keys().all(|&t| host.contains(t)));
    let grown = primal_dual_tree(host, penalties, root);
    let pruned = strong_prune(&grown, root, penalties);
    let mut best = PcstSolution::from_tree(pruned, root, penalties);

    let nothing = PcstSolution::from_tree(EdgeSubgraph::default(), root, penalties);
    if nothing.total_cost < best.total_cost {
        best = nothing;
    }

    let mut keep = best.served.clone();
    keep.push(root);
    let keep = normalized(&keep);
    let respanned = steiner_approx(host, &keep).tree_edges;
    let respanned = strong_prune(&respanned, root, penalties);
    let candidate = PcstSolution::from_tree(respanned, root, penalties);
    if candidate.total_cost < best.total_cost {
        best = candidate;
    }
    best
}

/// Grows duals until no component is active, then applies the classical
/// reverse-deactivation pruning to the component of the root.
fn primal_dual_tree(
    host: &Host<'_>,
    penalties: &BTreeMap<usize, f64>,
    root: usize,
) -> EdgeSubgraph {
    let verts = host.vertices();
    let nv = verts.len();
    let index = |v: usize| verts.binary_search(&v).expect("vertex in host");
    let edges: Vec<(usize, usize, f64)> = host
        .edges()
        .into_iter()
        .map(|(u, v, w)| (index(u), index(v), w))
        .collect();
    let root_i = index(root);

    let mut comp_of: Vec<usize> = (0..nv).collect();
    let mut comps: Vec<Component> = (0..nv)
        .map(|i| {
            let penalty = penalties.get(&verts[i]).copied().unwrap_or(0.0);
            Component {
                members: vec![i],
                grown: 0.0,
                penalty,
                has_root: i == root_i,
                active: i != root_i && penalty > 0.0,
            }
        })
        .collect();
    let mut load = vec![0.0f64; nv];
    let mut forest: Vec<usize> = Vec::new();
    let mut deactivated: Vec<Vec<usize>> = (0..nv)
        .filter(|&i| i != root_i && !comps[i].active)
        .map(|i| vec![i])
        .collect();

    let limit = 4 * nv + edges.len() + 8;
    for _ in 0..limit {
        if !comps.iter().any(|c| c.active) {
            break;
        }
        let mut step = f64::INFINITY;
        let mut event: Option<(bool, usize)> = None;
        for (ci, c) in comps.iter().enumerate() {
            if c.active && !c.members.is_empty() {
                let left = (c.penalty - c.grown).max(0.0);
                if left < step {
                    step = left;
                    event = Some((false, ci));
                }
            }
        }
        for (ei, &(a, b, w)) in edges.iter().enumerate() {
            let (ca, cb) = (comp_of[a], comp_of[b]);
            if ca == cb {
                continue;
            }
            let rate = comps[ca].active as u8 + comps[cb].active as u8;
            if rate == 0 {
                continue;
            }
            let slack = (w - load[a] - load[b]).max(0.0);
            let t = slack / rate as f64;
            if t < step {
                step = t;
                event = Some((true, ei));
            }
        }
        let Some((is_edge, which)) = event else { break };
        for c in comps.iter_mut().filter(|c| c.active) {
            c.grown += step;
            for &v in &c.members {
                load[v] += step;
            }
        }
        if is_edge {
            let (a, b, _) = edges[which];
            let (keep, gone) = (comp_of[a].min(comp_of[b]), comp_of[a].max(comp_of[b]));
            forest.push(which);
            let moved = std::mem::take(&mut comps[gone].members);
            for &v in &moved {
                comp_of[v] = keep;
            }
            let (g_grown, g_pen, g_root) =
                (comps[gone].grown, comps[gone].penalty, comps[gone].has_root);
            comps[gone].active = false;
            let k = &mut comps[keep];
            k.members.extend(moved);
            k.members.sort_unstable();
            k.grown += g_grown;
            k.penalty += g_pen;
            k.has_root |= g_root;
            k.active = !k.has_root && k.grown < k.penalty;
            if !k.has_root && !k.active {
                deactivated.push(k.members.clone());
            }
        } else {
            comps[which].active = false;
            deactivated.push(comps[which].members.clone());
        }
    }

    // Tree of the root's component.
    let root_comp = comp_of[root_i];
    let mut tree: BTreeSet<usize> = forest
        .into_iter()
        .filter(|&ei| comp_of[edges[ei].0] == root_comp)
        .collect();
    for set in deactivated.iter().rev() {
        if set.binary_search(&root_i).is_ok() {
            continue;
        }
        let crossing: Vec<usize> = tree
            .iter()
            .copied()
            .filter(|&ei| {
                let (a, b, _) = edges[ei];
                set.binary_search(&a).is_ok() != set.binary_search(&b).is_ok()
            })
            .collect();
        if crossing.len() == 1 {
            tree.retain(|&ei| {
                let (a, b, _) = edges[ei];
                set.binary_search(&a).is_err() && set.binary_search(&b).is_err()
            });
        }
    }
    tree.into_iter()
        .map(|ei| {
            let (a, b, w) = edges[ei];
            (verts[a], verts[b], w)
        })
        .collect()
}

/// Optimal pruning of a tree hanging from `root`: keeps a child subtree iff
/// its net worth (penalties saved minus edges paid) exceeds the connecting edge.
fn strong_prune(
    tree: &EdgeSubgraph,
    root: usize,
    penalties: &BTreeMap<usize, f64>,
) -> EdgeSubgraph {
    if tree.is_empty() {
        return EdgeSubgraph::default();
    }
    let adj = tree_adjacency(tree);
    if !adj.contains_key(&root) {
        return EdgeSubgraph::default();
    }
    let weight = |u: usize, v: usize| {
        tree.iter()
            .find(|&(a, b, _)| (a, b) == (u.min(v), u.max(v)))
            .map(|e| e.2)
            .expect("tree edge")
    };
    // Post-order over the rooted tree.
    let mut order = Vec::new();
    let mut parent: BTreeMap<usize, usize> = BTreeMap::new();
    let mut stack = vec![root];
    let mut seen = BTreeSet::from([root]);
    while let Some(v) = stack.pop() {
        order.push(v);
        for &c in &adj[&v] {
            if seen.insert(c) {
                parent.insert(c, v);
                stack.push(c);
            }
        }
    }
    let mut worth: BTreeMap<usize, f64> = BTreeMap::new();
    let mut kept: EdgeSubgraph = EdgeSubgraph::default();
    let mut keep_child: BTreeSet<usize> = BTreeSet::new();
    for &v in order.iter().rev() {
        let mut value = penalties.get(&v).copied().unwrap_or(0.0);
        for &c in &adj[&v] {
            if parent.get(&c) == Some(&v) {
                let net = worth[&c] - weight(v, c);
                if net > 0.0 {
                    value += net;
                    keep_child.insert(c);
                }
            }
        }
        worth.insert(v, value);
    }
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        for &c in &adj[&v] {
            if parent.get(&c) == Some(&v) && keep_child.contains(&c) {
                kept.insert(v, c, weight(v, c));
                stack.push(c);
            }
        }
    }
    let mut keep: Vec<usize> = penalties.keys().copied().collect();
    keep.push(root);
    prune_leaves(&kept, &normalized(&keep))
}
