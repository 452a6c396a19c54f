//! Finite metric spaces induced by weighted graphs, balls, perforated balls,
//! and the edge-part measure of a subgraph inside a shape.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tolerance;

/// Undirected weighted simple graph on nodes `0..node_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    #[serde(rename = "nodes")]
    pub node_count: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("edge ({0}, {1}) has non-positive or non-finite weight {2}")]
    BadWeight(usize, usize, f64),
    #[error("parallel edge between {0} and {1}")]
    ParallelEdge(usize, usize),
    #[error("graph is disconnected: node {0} unreachable from node 0")]
    Disconnected(usize),
}

impl WeightedGraph {
    pub fn new(node_count: usize, edges: Vec<(usize, usize, f64)>) -> Self {
        Self { node_count, edges }
    }

    /// Checks every structural invariant, connectivity included.
    pub fn validate(&self) -> Result<(), GraphError> {
        if self.node_count == 0 {
            return Err(GraphError::Empty);
        }
        let mut seen = BTreeMap::new();
        for &(u, v, w) in &self.edges {
            if u >= self.node_count || v >= self.node_count {
                return Err(GraphError::NodeOutOfRange(u, v, self.node_count));
            }
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(GraphError::BadWeight(u, v, w));
            }
            if seen.insert(edge_key(u, v), ()).is_some() {
                return Err(GraphError::ParallelEdge(u.min(v), u.max(v)));
            }
        }
        let adj = self.adjacency();
        let mut reached = vec![false; self.node_count];
        let mut stack = vec![0];
        reached[0] = true;
        while let Some(u) = stack.pop() {
            for &(x, _) in &adj[u] {
                if !reached[x] {
                    reached[x] = true;
                    stack.push(x);
                }
            }
        }
        if let Some(missing) = reached.iter().position(|r| !r) {
            return Err(GraphError::Disconnected(missing));
        }
        Ok(())
    }

    /// Adjacency lists sorted by neighbour id.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(u, v, w) in &self.edges {
            if u < self.node_count && v < self.node_count {
                adj[u].push((v, w));
                adj[v].push((u, w));
            }
        }
        for list in &mut adj {
            list.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        }
        adj
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }
}

/// Normalized key of an undirected edge.
pub fn edge_key(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

/// All-pairs shortest-path metric of a connected weighted graph.
#[derive(Debug, Clone)]
pub struct MetricSpace {
    n: usize,
    dist: Vec<f64>,
    d_min: f64,
    graph: WeightedGraph,
    adj: Vec<Vec<(usize, f64)>>,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapItem(0.0, source));
    while let Some(HeapItem(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(x, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[x] {
                dist[x] = nd;
                heap.push(HeapItem(nd, x));
            }
        }
    }
    dist
}

impl MetricSpace {
    /// Builds the shortest-path metric; rejects invalid or disconnected graphs.
    pub fn build(graph: WeightedGraph) -> Result<Self, GraphError> {
        graph.validate()?;
        let n = graph.node_count;
        let adj = graph.adjacency();
        let mut dist = vec![0.0; n * n];
        for s in 0..n {
            let row = dijkstra(&adj, s);
            dist[s * n..(s + 1) * n].copy_from_slice(&row);
        }
        // Dijkstra can differ in the last ulp between directions.
        for u in 0..n {
            for v in (u + 1)..n {
                let d = dist[u * n + v].min(dist[v * n + u]);
                dist[u * n + v] = d;
                dist[v * n + u] = d;
            }
        }
        let d_min = dist
            .iter()
            .copied()
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min);
        let d_min = if d_min.is_finite() { d_min } else { 1.0 };
        Ok(Self {
            n,
            dist,
            d_min,
            graph,
            adj,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dist(&self, u: usize, v: usize) -> f64 {
        self.dist[u * self.n + v]
    }

    /// Smallest positive pairwise distance (1.0 on a single point).
    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn d_max(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Largest over smallest positive pairwise distance.
    pub fn aspect_ratio(&self) -> f64 {
        if self.n < 2 {
            1.0
        } else {
            self.d_max() / self.d_min
        }
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn neighbours(&self, u: usize) -> &[(usize, f64)] {
        &self.adj[u]
    }

    /// Lowest level ever used in level arithmetic: `⌊log₂ d_min⌋ − 1`.
    pub fn min_level(&self) -> i32 {
        tolerance::floor_log2(self.d_min) - 1
    }

    /// Lexicographically smallest shortest path from `u` to `v`, both ends included.
    pub fn shortest_path(&self, u: usize, v: usize) -> Vec<usize> {
        let mut path = vec![u];
        let mut cur = u;
        while cur != v && path.len() <= self.n {
            let target = self.dist(cur, v);
            let next = self.adj[cur]
                .iter()
                .find(|&&(x, w)| (w + self.dist(x, v) - target).abs() <= tolerance::scaled(target))
                .map(|&(x, _)| x)
                .expect("a shortest path always has a first edge");
            path.push(next);
            cur = next;
        }
        path
    }

    /// Weight of the graph edge `(u, v)`, if present.
    pub fn edge_weight(&self, u: usize, v: usize) -> Option<f64> {
        self.adj
            .get(u)?
            .binary_search_by(|probe| probe.0.cmp(&v))
            .ok()
            .map(|i| self.adj[u][i].1)
    }

    /// Closed ball `{u : dist(v, u) ≤ r}` as an ascending point list.
    pub fn ball_points(&self, v: usize, r: f64) -> Vec<usize> {
        (0..self.n)
            .filter(|&u| self.dist(v, u) <= r + tolerance::eps())
            .collect()
    }

    /// Sum of `dist` along consecutive waypoints.
    pub fn walk_length(&self, walk: &[usize]) -> f64 {
        walk.windows(2).map(|p| self.dist(p[0], p[1])).sum()
    }

    /// Node sequence actually traversed when following `walk` hop by hop
    /// along shortest paths.
    pub fn expand_walk(&self, walk: &[usize]) -> Vec<usize> {
        let mut out: Vec<usize> = walk.first().copied().into_iter().collect();
        for hop in walk.windows(2) {
            if hop[0] != hop[1] {
                out.extend(self.shortest_path(hop[0], hop[1]).into_iter().skip(1));
            }
        }
        out
    }

    /// Graph edges along the shortest-path expansion of every waypoint hop.
    pub fn walk_edges(&self, walk: &[usize]) -> EdgeSubgraph {
        let mut g = EdgeSubgraph::default();
        for hop in walk.windows(2) {
            if hop[0] == hop[1] {
                continue;
            }
            let path = self.shortest_path(hop[0], hop[1]);
            for e in path.windows(2) {
                let w = self
                    .edge_weight(e[0], e[1])
                    .expect("shortest-path hops are graph edges");
                g.insert(e[0], e[1], w);
            }
        }
        g
    }
}

/// Deduplicated set of weighted undirected edges.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeSubgraph {
    edges: BTreeMap<(usize, usize), f64>,
}

impl EdgeSubgraph {
    pub fn insert(&mut self, u: usize, v: usize, w: f64) {
        self.edges.insert(edge_key(u, v), w);
    }

    pub fn extend(&mut self, other: &EdgeSubgraph) {
        for (&(u, v), &w) in &other.edges {
            self.edges.insert((u, v), w);
        }
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        self.edges.contains_key(&edge_key(u, v))
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(u, v), &w)| (u, v, w))
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.values().sum()
    }

    /// Endpoints touched by at least one edge, ascending.
    pub fn vertices(&self) -> Vec<usize> {
        let mut vs: Vec<usize> = self.edges.keys().flat_map(|&(u, v)| [u, v]).collect();
        vs.sort_unstable();
        vs.dedup();
        vs
    }
}

impl FromIterator<(usize, usize, f64)> for EdgeSubgraph {
    fn from_iter<I: IntoIterator<Item = (usize, usize, f64)>>(iter: I) -> Self {
        let mut g = EdgeSubgraph::default();
        for (u, v, w) in iter {
            g.insert(u, v, w);
        }
        g
    }
}

/// A metric shape whose edge parts can be measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Ball {
        center: usize,
        radius: f64,
    },
    PerforatedBall {
        center: usize,
        radius: f64,
        rho: f64,
    },
}

impl Shape {
    pub fn center(&self) -> usize {
        match *self {
            Shape::Ball { center, .. } | Shape::PerforatedBall { center, .. } => center,
        }
    }

    pub fn radius(&self) -> f64 {
        match *self {
            Shape::Ball { radius, .. } | Shape::PerforatedBall { radius, .. } => radius,
        }
    }

    pub fn perforate(&self, rho: f64) -> Shape {
        Shape::PerforatedBall {
            center: self.center(),
            radius: self.radius(),
            rho,
        }
    }
}

/// Finite union of closed intervals on the real line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IntervalSet {
    parts: Vec<(f64, f64)>,
}

impl IntervalSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `[a, b]`; empty when `a > b`.
    pub fn add(&mut self, a: f64, b: f64) {
        if a > b {
            return;
        }
        self.parts.push((a, b));
        self.parts.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(self.parts.len());
        for &(s, e) in &self.parts {
            match merged.last_mut() {
                Some(last) if s <= last.1 => last.1 = last.1.max(e),
                _ => merged.push((s, e)),
            }
        }
        self.parts = merged;
    }

    pub fn length(&self) -> f64 {
        self.parts.iter().map(|(a, b)| b - a).sum()
    }

    pub fn parts(&self) -> &[(f64, f64)] {
        &self.parts
    }

    /// Set difference, dropping boundary points.
    pub fn subtract(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        for &(a, b) in &self.parts {
            let mut pieces = vec![(a, b)];
            for &(c, d) in &other.parts {
                let mut next = Vec::new();
                for (s, e) in pieces {
                    if d <= s || c >= e {
                        next.push((s, e));
                        continue;
                    }
                    if c > s {
                        next.push((s, c));
                    }
                    if d < e {
                        next.push((d, e));
                    }
                }
                pieces = next;
            }
            out.extend(pieces);
        }
        let mut set = IntervalSet::new();
        for (s, e) in out {
            set.add(s, e);
        }
        set
    }
}

/// Positions on edge `(u, x)` of weight `w` within distance `r` of node `z`,
/// using the position distance `min(dist(z,u) + t, dist(z,x) + w − t)`.
pub fn edge_positions_near(
    m: &MetricSpace,
    u: usize,
    x: usize,
    w: f64,
    z: usize,
    r: f64,
) -> IntervalSet {
    let mut set = IntervalSet::new();
    let from_u = r - m.dist(z, u);
    if from_u >= 0.0 {
        set.add(0.0, from_u.min(w));
    }
    let from_x = r - m.dist(z, x);
    if from_x >= 0.0 {
        set.add((w - from_x).max(0.0), w);
    }
    set
}

/// Part of edge `(u, x)` claimed by the closed ball: the whole edge if both
/// endpoints are inside, a prefix of length `r − dist(center, endpoint)` from
/// the single inside endpoint, and nothing otherwise.
pub fn ball_edge_part(
    m: &MetricSpace,
    center: usize,
    r: f64,
    u: usize,
    x: usize,
    w: f64,
) -> IntervalSet {
    let tol = tolerance::eps();
    let du = m.dist(center, u);
    let dx = m.dist(center, x);
    let u_in = du <= r + tol;
    let x_in = dx <= r + tol;
    let mut set = IntervalSet::new();
    match (u_in, x_in) {
        (true, true) => set.add(0.0, w),
        (true, false) => set.add(0.0, (r - du).clamp(0.0, w)),
        (false, true) => set.add(w - (r - dx).clamp(0.0, w), w),
        (false, false) => {}
    }
    set
}

/// Positions on an edge removed by perforation: within `r / rho` of any node.
pub fn perforation_holes(m: &MetricSpace, u: usize, x: usize, w: f64, hole: f64) -> IntervalSet {
    let mut holes = IntervalSet::new();
    for z in 0..m.n() {
        for &(a, b) in edge_positions_near(m, u, x, w, z, hole).parts() {
            holes.add(a, b);
        }
    }
    holes
}

/// Positions on edge `(u, x)` of weight `w` that belong to `shape`.
pub fn shape_edge_part(m: &MetricSpace, shape: &Shape, u: usize, x: usize, w: f64) -> IntervalSet {
    match *shape {
        Shape::Ball { center, radius } => ball_edge_part(m, center, radius, u, x, w),
        Shape::PerforatedBall {
            center,
            radius,
            rho,
        } => {
            let part = ball_edge_part(m, center, radius, u, x, w);
            if part.length() == 0.0 {
                return part;
            }
            part.subtract(&perforation_holes(m, u, x, w, radius / rho))
        }
    }
}

/// Total weight of the edge parts of `g` lying in `shape`.
pub fn shape_edge_measure(m: &MetricSpace, g: &EdgeSubgraph, shape: &Shape) -> f64 {
    g.iter()
        .map(|(u, x, w)| shape_edge_part(m, shape, u, x, w).length())
        .sum()
}

/// Weight of the graph edge parts claimed by both shapes.
pub fn shapes_overlap(m: &MetricSpace, a: &Shape, b: &Shape) -> f64 {
    m.graph()
        .edges
        .iter()
        .map(|&(u, x, w)| {
            let pa = shape_edge_part(m, a, u, x, w);
            let pb = shape_edge_part(m, b, u, x, w);
            pa.length() - pa.subtract(&pb).length()
        })
        .sum()
}

/// Ball measure computed purely from position intervals; agrees with the
/// endpoint rule whenever no edge with both endpoints inside leaves the ball.
pub fn ball_measure_by_intervals(m: &MetricSpace, g: &EdgeSubgraph, center: usize, r: f64) -> f64 {
    g.iter()
        .map(|(u, x, w)| edge_positions_near(m, u, x, w, center, r).length())
        .sum()
}

/// True when some edge of `g` has both endpoints in the ball but an interior
/// point outside it.
pub fn has_escaping_edge(m: &MetricSpace, g: &EdgeSubgraph, center: usize, r: f64) -> bool {
    g.iter().any(|(u, x, w)| {
        let du = m.dist(center, u);
        let dx = m.dist(center, x);
        du <= r && dx <= r && (r - du) + (r - dx) < w
    })
}

/// `measure(Ball) ≤ measure(PerforatedBall) + 2·r·n²/rho`.
pub fn perforation_gap_bound_check(
    m: &MetricSpace,
    g: &EdgeSubgraph,
    v: usize,
    r: f64,
    rho: f64,
) -> bool {
    let ball = shape_edge_measure(
        m,
        g,
        &Shape::Ball {
            center: v,
            radius: r,
        },
    );
    let perf = shape_edge_measure(
        m,
        g,
        &Shape::PerforatedBall {
            center: v,
            radius: r,
            rho,
        },
    );
    let n = m.n() as f64;
    ball <= perf + 2.0 * r * n * n / rho + tolerance::scaled(ball)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn path_graph() -> MetricSpace {
        MetricSpace::build(WeightedGraph::new(3, vec![(0, 1, 1.0), (1, 2, 2.0)])).unwrap()
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, integer: bool) -> WeightedGraph {
        let mut edges = Vec::new();
        let mut keys = std::collections::BTreeSet::new();
        let weight = |rng: &mut ChaCha8Rng| {
            if integer {
                rng.gen_range(1..=9) as f64
            } else {
                rng.gen_range(0.1..10.0)
            }
        };
        for v in 1..n {
            let u = rng.gen_range(0..v);
            keys.insert((u, v));
            edges.push((u, v, weight(rng)));
        }
        for _ in 0..n {
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            if u != v && keys.insert(edge_key(u, v)) {
                edges.push((u, v, weight(rng)));
            }
        }
        WeightedGraph::new(n, edges)
    }

    /// Floyd-style relaxation to a fixpoint, independent of Dijkstra.
    fn relaxation_oracle(g: &WeightedGraph) -> Vec<Vec<f64>> {
        let n = g.node_count;
        let mut d = vec![vec![f64::INFINITY; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = 0.0;
        }
        for &(u, v, w) in &g.edges {
            d[u][v] = d[u][v].min(w);
            d[v][u] = d[v][u].min(w);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if d[i][k] + d[k][j] < d[i][j] {
                        d[i][j] = d[i][k] + d[k][j];
                    }
                }
            }
        }
        d
    }

    #[test]
    fn path_graph_distances() {
        let m = path_graph();
        assert_eq!(m.dist(0, 2), 3.0);
        assert_eq!(m.d_min(), 1.0);
        assert_eq!(m.shortest_path(0, 2), vec![0, 1, 2]);
    }

    #[test]
    fn single_node_metric() {
        let m = MetricSpace::build(WeightedGraph::new(1, vec![])).unwrap();
        assert_eq!(m.n(), 1);
        assert_eq!(m.dist(0, 0), 0.0);
        assert_eq!(m.d_min(), 1.0);
    }

    #[test]
    fn rejects_bad_graphs() {
        let disconnected = WeightedGraph::new(3, vec![(0, 1, 1.0)]);
        assert_eq!(
            MetricSpace::build(disconnected).unwrap_err(),
            GraphError::Disconnected(2)
        );
        assert!(matches!(
            MetricSpace::build(WeightedGraph::new(2, vec![(0, 1, 0.0)])),
            Err(GraphError::BadWeight(..))
        ));
        assert!(matches!(
            MetricSpace::build(WeightedGraph::new(2, vec![(0, 0, 1.0)])),
            Err(GraphError::SelfLoop(0))
        ));
        assert!(matches!(
            MetricSpace::build(WeightedGraph::new(2, vec![(0, 1, 1.0), (1, 0, 2.0)])),
            Err(GraphError::ParallelEdge(0, 1))
        ));
        assert!(matches!(
            MetricSpace::build(WeightedGraph::new(2, vec![(0, 5, 1.0)])),
            Err(GraphError::NodeOutOfRange(..))
        ));
    }

    #[test]
    fn matches_relaxation_oracle_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let g = random_graph(&mut rng, 8, true);
            let oracle = relaxation_oracle(&g);
            let m = MetricSpace::build(g).unwrap();
            for (u, row) in oracle.iter().enumerate() {
                for (v, &d) in row.iter().enumerate() {
                    assert_eq!(m.dist(u, v), d);
                }
            }
        }
    }

    #[test]
    fn metric_axioms_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for n in [2, 5, 17, 64] {
            let m = MetricSpace::build(random_graph(&mut rng, n, false)).unwrap();
            for u in 0..n {
                assert_eq!(m.dist(u, u), 0.0);
                for v in 0..n {
                    assert_eq!(m.dist(u, v), m.dist(v, u));
                    for w in 0..n {
                        assert!(m.dist(u, w) <= m.dist(u, v) + m.dist(v, w) + 1e-9);
                    }
                }
            }
            assert!(m.d_min() > 0.0);
        }
    }

    #[test]
    fn shortest_path_realizes_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let m = MetricSpace::build(random_graph(&mut rng, 9, false)).unwrap();
            for u in 0..9 {
                for v in 0..9 {
                    let p = m.shortest_path(u, v);
                    assert_eq!(*p.last().unwrap(), v);
                    let len: f64 = p
                        .windows(2)
                        .map(|e| m.edge_weight(e[0], e[1]).unwrap())
                        .sum();
                    assert!((len - m.dist(u, v)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn ball_points_examples() {
        let m = path_graph();
        assert_eq!(m.ball_points(0, 1.0), vec![0, 1]);
        assert_eq!(m.ball_points(2, 0.0), vec![2]);
    }

    #[test]
    fn ball_points_matches_scan_at_median_radius() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            let m = MetricSpace::build(random_graph(&mut rng, 10, false)).unwrap();
            let mut all: Vec<f64> = (0..10)
                .flat_map(|u| (0..10).map(move |v| (u, v)))
                .map(|(u, v)| m.dist(u, v))
                .collect();
            all.sort_by(f64::total_cmp);
            let r = all[all.len() / 2];
            for v in 0..10 {
                let scan: Vec<usize> = (0..10).filter(|&u| m.dist(v, u) <= r).collect();
                assert_eq!(m.ball_points(v, r), scan);
            }
        }
    }

    #[test]
    fn edge_measure_examples() {
        let m = path_graph();
        let g: EdgeSubgraph = [(1, 2, 2.0)].into_iter().collect();
        let ball = Shape::Ball {
            center: 0,
            radius: 2.0,
        };
        assert_eq!(shape_edge_measure(&m, &g, &ball), 1.0);
        let zero = Shape::Ball {
            center: 1,
            radius: 0.0,
        };
        assert_eq!(shape_edge_measure(&m, &g, &zero), 0.0);
        let perf_zero = Shape::PerforatedBall {
            center: 1,
            radius: 0.0,
            rho: 4.0,
        };
        assert_eq!(shape_edge_measure(&m, &g, &perf_zero), 0.0);
    }

    #[test]
    fn ball_measure_agrees_with_interval_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut checked = 0;
        while checked < 100 {
            let n = rng.gen_range(2..9);
            let m = MetricSpace::build(random_graph(&mut rng, n, false)).unwrap();
            let g: EdgeSubgraph = m
                .graph()
                .edges
                .iter()
                .copied()
                .filter(|_| rng.gen_bool(0.7))
                .collect();
            let v = rng.gen_range(0..n);
            let r = rng.gen_range(0.0..m.d_max() * 1.2);
            if has_escaping_edge(&m, &g, v, r) {
                continue;
            }
            let endpoint_rule = shape_edge_measure(
                &m,
                &g,
                &Shape::Ball {
                    center: v,
                    radius: r,
                },
            );
            let intervals = ball_measure_by_intervals(&m, &g, v, r);
            assert!(
                (endpoint_rule - intervals).abs() <= 1e-9,
                "{endpoint_rule} vs {intervals}"
            );
            checked += 1;
        }
    }

    #[test]
    fn perforation_gap_examples() {
        let m = path_graph();
        let full: EdgeSubgraph = m.graph().edges.iter().copied().collect();
        for v in 0..3 {
            for r in [0.0, 0.5, 1.0, 2.5, 3.0, 7.0] {
                assert!(perforation_gap_bound_check(&m, &full, v, r, 4.0));
            }
        }
        assert!(perforation_gap_bound_check(
            &m,
            &EdgeSubgraph::default(),
            0,
            3.0,
            4.0
        ));
    }

    #[test]
    fn perforation_gap_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        for _ in 0..200 {
            let n = rng.gen_range(2..9);
            let m = MetricSpace::build(random_graph(&mut rng, n, false)).unwrap();
            let g: EdgeSubgraph = m
                .graph()
                .edges
                .iter()
                .copied()
                .filter(|_| rng.gen_bool(0.6))
                .collect();
            let v = rng.gen_range(0..n);
            let r = rng.gen_range(0.0..m.d_max() * 1.5);
            let rho = rng.gen_range(1.01..50.0);
            assert!(perforation_gap_bound_check(&m, &g, v, r, rho));
        }
    }

    #[test]
    fn interval_set_subtract() {
        let mut a = IntervalSet::new();
        a.add(0.0, 10.0);
        let mut h = IntervalSet::new();
        h.add(0.0, 1.0);
        h.add(9.0, 10.0);
        h.add(4.0, 5.0);
        assert_eq!(a.subtract(&h).length(), 7.0);
    }

    proptest! {
        #[test]
        fn ball_monotone_in_radius(seed in 0u64..500, r1 in 0.0f64..20.0, extra in 0.0f64..20.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..8);
            let m = MetricSpace::build(random_graph(&mut rng, n, false)).unwrap();
            let g: EdgeSubgraph = m.graph().edges.iter().copied().collect();
            let v = rng.gen_range(0..n);
            let r2 = r1 + extra;
            let p1 = m.ball_points(v, r1);
            let p2 = m.ball_points(v, r2);
            prop_assert!(p1.iter().all(|u| p2.contains(u)));
            let m1 = shape_edge_measure(&m, &g, &Shape::Ball { center: v, radius: r1 });
            let m2 = shape_edge_measure(&m, &g, &Shape::Ball { center: v, radius: r2 });
            prop_assert!(m1 <= m2 + 1e-9);
        }

        #[test]
        fn perforated_never_exceeds_ball(seed in 0u64..500, r in 0.0f64..20.0, rho in 1.01f64..100.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..8);
            let m = MetricSpace::build(random_graph(&mut rng, n, false)).unwrap();
            let g: EdgeSubgraph = m.graph().edges.iter().copied().collect();
            let v = rng.gen_range(0..n);
            let ball = shape_edge_measure(&m, &g, &Shape::Ball { center: v, radius: r });
            let perf = shape_edge_measure(&m, &g, &Shape::PerforatedBall { center: v, radius: r, rho });
            prop_assert!(perf <= ball + 1e-12);
        }

        #[test]
        fn disjoint_balls_claim_disjoint_parts(seed in 0u64..500, f1 in 0.0f64..1.0, f2 in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..8);
            let m = MetricSpace::build(random_graph(&mut rng, n, false)).unwrap();
            let g: EdgeSubgraph = m.graph().edges.iter().copied().collect();
            let v1 = rng.gen_range(0..n);
            let v2 = rng.gen_range(0..n);
            let d = m.dist(v1, v2);
            prop_assume!(d > 0.0);
            let r1 = f1 * d * 0.999;
            let r2 = (d * 0.999 - r1) * f2;
            let b1 = shape_edge_measure(&m, &g, &Shape::Ball { center: v1, radius: r1 });
            let b2 = shape_edge_measure(&m, &g, &Shape::Ball { center: v2, radius: r2 });
            prop_assert!(b1 + b2 <= g.total_weight() + 1e-9);
            for (u, x, w) in g.iter() {
                let p1 = ball_edge_part(&m, v1, r1, u, x, w);
                let p2 = ball_edge_part(&m, v2, r2, u, x, w);
                let overlap = p1.length() - p1.subtract(&p2).length();
                prop_assert!(overlap <= 1e-9);
            }
        }
    }
    #[test]
    fn overlap_of_two_balls() {
        let m = path_graph();
        let a = Shape::Ball {
            center: 0,
            radius: 1.5,
        };
        let b = Shape::Ball {
            center: 2,
            radius: 2.0,
        };
        assert_eq!(shapes_overlap(&m, &a, &b), 0.5);
        let c = Shape::Ball {
            center: 2,
            radius: 0.5,
        };
        assert_eq!(shapes_overlap(&m, &a, &c), 0.0);
        // Touching at a single position is not an overlap.
        let d = Shape::Ball {
            center: 2,
            radius: 1.5,
        };
        assert_eq!(shapes_overlap(&m, &a, &d), 0.0);
    }
}
