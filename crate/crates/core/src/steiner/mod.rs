//! Steiner tree and prize-collecting Steiner tree solvers.
//!
//! Every solver works over a [`Host`]: either the source graph of a metric,
//! or the complete graph on a subset of its points weighted by distance.

mod exact;
mod kmb;
mod pcst;

pub use exact::{pcst_exact, steiner_exact, steiner_exact_capped, EXACT_TERMINAL_CAP};
pub use kmb::steiner_approx;
pub use pcst::pcst_approx;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{EdgeSubgraph, MetricSpace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteinerError {
    #[error("{got} terminals exceed the exact-solver cap of {cap}")]
    TooManyTerminals { got: usize, cap: usize },
    #[error("point {0} is not part of the host")]
    NotInHost(usize),
}

/// The graph a solver may route through.
#[derive(Debug, Clone, Copy)]
pub struct Host<'a> {
    metric: &'a MetricSpace,
    subset: Option<&'a [usize]>,
}

impl<'a> Host<'a> {
    /// The source graph itself.
    pub fn graph(metric: &'a MetricSpace) -> Self {
        Self {
            metric,
            subset: None,
        }
    }

    /// Complete graph on `points` (sorted, deduplicated) with metric weights.
    pub fn points(metric: &'a MetricSpace, points: &'a [usize]) -> Self {
        debug_assert!(points.windows(2).all(|w| w[0] < w[1]));
        Self {
            metric,
            subset: Some(points),
        }
    }

    pub fn metric(&self) -> &'a MetricSpace {
        self.metric
    }

    pub fn vertices(&self) -> Vec<usize> {
        match self.subset {
            Some(p) => p.to_vec(),
            None => (0..self.metric.n()).collect(),
        }
    }

    pub fn contains(&self, v: usize) -> bool {
        match self.subset {
            Some(p) => p.binary_search(&v).is_ok(),
            None => v < self.metric.n(),
        }
    }

    /// Host edges `(u, v, w)` with `u < v`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        match self.subset {
            Some(p) => {
                let mut out = Vec::new();
                for (i, &u) in p.iter().enumerate() {
                    for &v in &p[i + 1..] {
                        out.push((u, v, self.metric.dist(u, v)));
                    }
                }
                out
            }
            None => {
                let mut out: Vec<_> = self
                    .metric
                    .graph()
                    .edges
                    .iter()
                    .map(|&(u, v, w)| (u.min(v), u.max(v), w))
                    .collect();
                out.sort_by_key(|e| (e.0, e.1));
                out
            }
        }
    }

    /// Host edges on a shortest route from `u` to `v`.
    pub fn route(&self, u: usize, v: usize) -> Vec<(usize, usize, f64)> {
        if u == v {
            return Vec::new();
        }
        match self.subset {
            Some(_) => vec![(u, v, self.metric.dist(u, v))],
            None => self
                .metric
                .shortest_path(u, v)
                .windows(2)
                .map(|e| {
                    (
                        e[0],
                        e[1],
                        self.metric.edge_weight(e[0], e[1]).expect("path edge"),
                    )
                })
                .collect(),
        }
    }

    fn check(&self, pts: &[usize]) -> Result<(), SteinerError> {
        match pts.iter().find(|&&p| !self.contains(p)) {
            Some(&p) => Err(SteinerError::NotInHost(p)),
            None => Ok(()),
        }
    }
}

/// A tree connecting a terminal set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteinerSolution {
    pub tree_edges: EdgeSubgraph,
    pub cost: f64,
}

impl SteinerSolution {
    fn from_edges(tree_edges: EdgeSubgraph) -> Self {
        let cost = tree_edges.total_weight();
        Self { tree_edges, cost }
    }
}

/// A rooted tree plus the terminals it serves; the rest pay their penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcstSolution {
    pub tree_edges: EdgeSubgraph,
    pub served: Vec<usize>,
    pub tree_cost: f64,
    pub penalty_cost: f64,
    pub total_cost: f64,
}

impl PcstSolution {
    /// Builds a solution from a tree touching `root`; every terminal on the
    /// tree (or at the root) counts as served.
    pub fn from_tree(
        tree_edges: EdgeSubgraph,
        root: usize,
        penalties: &BTreeMap<usize, f64>,
    ) -> Self {
        let mut on_tree = tree_edges.vertices();
        on_tree.push(root);
        on_tree.sort_unstable();
        on_tree.dedup();
        let mut served = Vec::new();
        let mut penalty_cost = 0.0;
        for (&t, &p) in penalties {
            if on_tree.binary_search(&t).is_ok() {
                served.push(t);
            } else {
                penalty_cost += p;
            }
        }
        let tree_cost = tree_edges.total_weight();
        Self {
            tree_edges,
            served,
            tree_cost,
            penalty_cost,
            total_cost: tree_cost + penalty_cost,
        }
    }
}

/// Penalty standing in for "must serve": larger than any tree in the graph.
pub fn infinite_penalty(metric: &MetricSpace) -> f64 {
    metric.graph().total_weight().max(metric.d_max()) * 10.0 + 1.0
}

/// Sorted, deduplicated copy of a point list.
pub(crate) fn normalized(points: &[usize]) -> Vec<usize> {
    let mut v = points.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut c = x;
        while self.parent[c] != r {
            let next = self.parent[c];
            self.parent[c] = r;
            c = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        let (lo, hi) = (ra.min(rb), ra.max(rb));
        self.parent[hi] = lo;
        true
    }
}

/// Minimum spanning forest of an edge set; ties by `(weight, u, v)`.
pub(crate) fn minimum_spanning_forest(edges: &EdgeSubgraph) -> EdgeSubgraph {
    let mut list: Vec<_> = edges.iter().collect();
    list.sort_by(|a, b| a.2.total_cmp(&b.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let max_v = list.iter().map(|e| e.0.max(e.1)).max().map_or(0, |m| m + 1);
    let mut ds = DisjointSets::new(max_v);
    list.into_iter()
        .filter(|&(u, v, _)| ds.union(u, v))
        .collect()
}

/// Repeatedly strips leaves that are not in `keep`.
pub(crate) fn prune_leaves(tree: &EdgeSubgraph, keep: &[usize]) -> EdgeSubgraph {
    let mut edges: BTreeMap<(usize, usize), f64> =
        tree.iter().map(|(u, v, w)| ((u, v), w)).collect();
    loop {
        let mut degree: BTreeMap<usize, usize> = BTreeMap::new();
        for &(u, v) in edges.keys() {
            *degree.entry(u).or_default() += 1;
            *degree.entry(v).or_default() += 1;
        }
        let leaves: Vec<usize> = degree
            .iter()
            .filter(|&(v, &d)| d == 1 && keep.binary_search(v).is_err())
            .map(|(&v, _)| v)
            .collect();
        if leaves.is_empty() {
            break;
        }
        edges.retain(|&(u, v), _| {
            leaves.binary_search(&u).is_err() && leaves.binary_search(&v).is_err()
        });
    }
    edges.into_iter().map(|((u, v), w)| (u, v, w)).collect()
}

/// Expands closure edges into host routes, then reduces the union to a tree
/// spanning `keep` (sorted) with no removable leaves.
pub(crate) fn closure_edges_to_tree(
    host: &Host<'_>,
    closure: &[(usize, usize)],
    keep: &[usize],
) -> EdgeSubgraph {
    let mut union = EdgeSubgraph::default();
    for &(u, v) in closure {
        for (a, b, w) in host.route(u, v) {
            union.insert(a, b, w);
        }
    }
    let forest = minimum_spanning_forest(&union);
    prune_leaves(&forest, keep)
}

/// Adjacency of a tree, children sorted ascending.
pub(crate) fn tree_adjacency(tree: &EdgeSubgraph) -> BTreeMap<usize, Vec<usize>> {
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (u, v, _) in tree.iter() {
        adj.entry(u).or_default().push(v);
        adj.entry(v).or_default().push(u);
    }
    for list in adj.values_mut() {
        list.sort_unstable();
    }
    adj
}

/// Depth-first closed tour of the component of `tree` containing `start`,
/// visiting children in ascending id order; returns the waypoint sequence
/// beginning and ending at `start`.
pub fn dfs_tour(tree: &EdgeSubgraph, start: usize) -> Vec<usize> {
    let adj = tree_adjacency(tree);
    let mut walk = vec![start];
    fn visit(
        v: usize,
        parent: Option<usize>,
        adj: &BTreeMap<usize, Vec<usize>>,
        walk: &mut Vec<usize>,
    ) {
        if let Some(children) = adj.get(&v) {
            for &c in children {
                if Some(c) == parent {
                    continue;
                }
                walk.push(c);
                visit(c, Some(v), adj, walk);
                walk.push(v);
            }
        }
    }
    visit(start, None, &adj, &mut walk);
    walk
}

/// Whether `tree` is acyclic and connects every point of `required`.
pub fn is_tree_connecting(tree: &EdgeSubgraph, required: &[usize]) -> bool {
    let req = normalized(required);
    let vertices = tree.vertices();
    if vertices.is_empty() {
        return req.len() <= 1;
    }
    if tree.len() + 1 != vertices.len() {
        return false;
    }
    let adj = tree_adjacency(tree);
    let mut seen = std::collections::BTreeSet::new();
    let mut stack = vec![vertices[0]];
    seen.insert(vertices[0]);
    while let Some(v) = stack.pop() {
        for &c in &adj[&v] {
            if seen.insert(c) {
                stack.push(c);
            }
        }
    }
    seen.len() == vertices.len() && req.iter().all(|r| seen.contains(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::WeightedGraph;

    #[test]
    fn dfs_tour_visits_each_edge_twice() {
        let tree: EdgeSubgraph = [(0, 1, 1.0), (0, 2, 1.0), (2, 3, 1.0)]
            .into_iter()
            .collect();
        assert_eq!(dfs_tour(&tree, 0), vec![0, 1, 0, 2, 3, 2, 0]);
        assert_eq!(dfs_tour(&EdgeSubgraph::default(), 4), vec![4]);
    }

    #[test]
    fn prune_removes_steiner_leaves_only() {
        let tree: EdgeSubgraph = [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)]
            .into_iter()
            .collect();
        let pruned = prune_leaves(&tree, &[0, 2]);
        assert_eq!(pruned.len(), 2);
        assert!(!pruned.contains(2, 3));
    }

    #[test]
    fn tree_connectivity_check() {
        let tree: EdgeSubgraph = [(0, 1, 1.0), (1, 2, 1.0)].into_iter().collect();
        assert!(is_tree_connecting(&tree, &[0, 2]));
        assert!(!is_tree_connecting(&tree, &[0, 5]));
        let cyc: EdgeSubgraph = [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]
            .into_iter()
            .collect();
        assert!(!is_tree_connecting(&cyc, &[0]));
    }

    #[test]
    fn point_host_uses_direct_edges() {
        let m = MetricSpace::build(WeightedGraph::new(3, vec![(0, 1, 1.0), (1, 2, 2.0)])).unwrap();
        let pts = [0, 2];
        let host = Host::points(&m, &pts);
        assert_eq!(host.edges(), vec![(0, 2, 3.0)]);
        assert_eq!(host.route(0, 2), vec![(0, 2, 3.0)]);
        assert!(!host.contains(1));
    }
}
