//! Exact Steiner and prize-collecting Steiner trees by subset dynamic
//! programming over terminal sets (Dreyfus–Wagner).

use std::collections::BTreeMap;

use super::{closure_edges_to_tree, normalized, Host, PcstSolution, SteinerError, SteinerSolution};
use crate::metric::EdgeSubgraph;

/// Largest terminal count accepted by the public exact solvers.
pub const EXACT_TERMINAL_CAP: usize = 10;

/// `dp[S][v]` = cheapest tree spanning terminal subset `S` plus vertex `v`.
struct Table {
    verts: Vec<usize>,
    terms: Vec<usize>,
    dp: Vec<f64>,
    via: Vec<u32>,
    split: Vec<u32>,
}

impl Table {
    fn build(host: &Host<'_>, terms: &[usize]) -> Self {
        let m = host.metric();
        let verts = host.vertices();
        let nv = verts.len();
        let k = terms.len();
        let full = 1usize << k;
        let mut dp = vec![f64::INFINITY; full * nv];
        let mut via = vec![u32::MAX; full * nv];
        let mut split = vec![0u32; full * nv];
        for (i, &t) in terms.iter().enumerate() {
            let s = 1 << i;
            for (vi, &v) in verts.iter().enumerate() {
                dp[s * nv + vi] = m.dist(t, v);
            }
        }
        let mut g = vec![f64::INFINITY; nv];
        let mut g_split = vec![0u32; nv];
        for s in 1..full {
            if s.count_ones() < 2 {
                continue;
            }
            let low = s & s.wrapping_neg();
            let rest = s ^ low;
            for vi in 0..nv {
                g[vi] = f64::INFINITY;
                // Enumerate subsets containing the lowest bit, ascending.
                let mut sub_rest = 0usize;
                loop {
                    let a = low | sub_rest;
                    if a != s {
                        let b = s ^ a;
                        let c = dp[a * nv + vi] + dp[b * nv + vi];
                        if c < g[vi] {
                            g[vi] = c;
                            g_split[vi] = a as u32;
                        }
                    }
                    if sub_rest == rest {
                        break;
                    }
                    sub_rest = (sub_rest.wrapping_sub(rest)) & rest;
                }
            }
            for vi in 0..nv {
                let v = verts[vi];
                let mut best = f64::INFINITY;
                let mut arg = 0usize;
                for ui in 0..nv {
                    let c = g[ui] + m.dist(verts[ui], v);
                    if c < best {
                        best = c;
                        arg = ui;
                    }
                }
                dp[s * nv + vi] = best;
                via[s * nv + vi] = arg as u32;
                split[s * nv + vi] = g_split[arg];
            }
        }
        Self {
            verts,
            terms: terms.to_vec(),
            dp,
            via,
            split,
        }
    }

    fn index(&self, v: usize) -> usize {
        self.verts.binary_search(&v).expect("vertex in host")
    }

    fn cost(&self, s: usize, v: usize) -> f64 {
        if s == 0 {
            return 0.0;
        }
        self.dp[s * self.verts.len() + self.index(v)]
    }

    fn closure_edges(&self, s: usize, v: usize, out: &mut Vec<(usize, usize)>) {
        if s == 0 {
            return;
        }
        if s.count_ones() == 1 {
            let t = self.terms[s.trailing_zeros() as usize];
            if t != v {
                out.push((t, v));
            }
            return;
        }
        let nv = self.verts.len();
        let vi = self.index(v);
        let u = self.verts[self.via[s * nv + vi] as usize];
        let a = self.split[s * nv + vi] as usize;
        if u != v {
            out.push((u, v));
        }
        self.closure_edges(a, u, out);
        self.closure_edges(s ^ a, u, out);
    }
}

/// Exact Steiner tree on at most [`EXACT_TERMINAL_CAP`] terminals.
pub fn steiner_exact(
    host: &Host<'_>,
    terminals: &[usize],
) -> Result<SteinerSolution, SteinerError> {
    steiner_exact_capped(host, terminals, EXACT_TERMINAL_CAP)
}

/// [`steiner_exact`] with a caller-chosen terminal cap.
pub fn steiner_exact_capped(
    host: &Host<'_>,
    terminals: &[usize],
    cap: usize,
) -> Result<SteinerSolution, SteinerError> {
    let terms = normalized(terminals);
    if terms.len() > cap {
        return Err(SteinerError::TooManyTerminals {
            got: terms.len(),
            cap,
        });
    }
    host.check(&terms)?;
    if terms.len() <= 1 {
        return Ok(SteinerSolution::from_edges(EdgeSubgraph::default()));
    }
    let table = Table::build(host, &terms[1..]);
    let mut closure = Vec::new();
    table.closure_edges((1 << (terms.len() - 1)) - 1, terms[0], &mut closure);
    Ok(SteinerSolution::from_edges(closure_edges_to_tree(
        host, &closure, &terms,
    )))
}

/// Exact prize-collecting Steiner tree rooted at `root`; `penalties` maps
/// each terminal point to the price of leaving it unserved.
pub fn pcst_exact(
    host: &Host<'_>,
    penalties: &BTreeMap<usize, f64>,
    root: usize,
) -> Result<PcstSolution, SteinerError> {
    let terms: Vec<usize> = penalties.keys().copied().collect();
    if terms.len() > EXACT_TERMINAL_CAP {
        return Err(SteinerError::TooManyTerminals {
            got: terms.len(),
            cap: EXACT_TERMINAL_CAP,
        });
    }
    host.check(&terms)?;
    host.check(&[root])?;
    let pens: Vec<f64> = penalties.values().copied().collect();
    let table = Table::build(host, &terms);
    let full = 1usize << terms.len();
    let mut best = f64::INFINITY;
    let mut best_set = 0usize;
    for s in 0..full {
        let penalty: f64 = (0..terms.len())
            .filter(|i| s & (1 << i) == 0)
            .map(|i| pens[i])
            .sum();
        let c = table.cost(s, root) + penalty;
        if c < best {
            best = c;
            best_set = s;
        }
    }
    let mut closure = Vec::new();
    table.closure_edges(best_set, root, &mut closure);
    let mut keep: Vec<usize> = (0..terms.len())
        .filter(|i| best_set & (1 << i) != 0)
        .map(|i| terms[i])
        .collect();
    keep.push(root);
    let keep = normalized(&keep);
    Ok(PcstSolution::from_tree(
        closure_edges_to_tree(host, &closure, &keep),
        root,
        penalties,
    ))
}
