//! Seeded random instances.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::instance::{DeadlineRequest, DelayFunction, DelayRequest, Instance, Mode, Requests};
use crate::metric::WeightedGraph;

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub n_points: usize,
    pub n_requests: usize,
    pub mode: Mode,
    /// Inclusive edge weight range.
    pub weight_range: (f64, f64),
    /// Releases fall in `[0, horizon]`.
    pub horizon: f64,
    /// Extra edges added on top of a random spanning tree.
    pub extra_edges: usize,
    /// Integer weights, times on a quarter grid and dyadic slopes, so that
    /// every quantity the engines and oracles compute is exact in `f64`.
    pub quantized: bool,
}

impl GenParams {
    pub fn new(n_points: usize, n_requests: usize, mode: Mode) -> Self {
        Self {
            n_points,
            n_requests,
            mode,
            weight_range: (1.0, 8.0),
            horizon: 20.0,
            extra_edges: n_points / 2,
            quantized: false,
        }
    }

    pub fn quantized(mut self) -> Self {
        self.quantized = true;
        self
    }
}

struct Draw {
    rng: ChaCha8Rng,
    quantized: bool,
}

impl Draw {
    fn weight(&mut self, (lo, hi): (f64, f64)) -> f64 {
        if self.quantized {
            let lo = lo.ceil().max(1.0) as i64;
            let hi = (hi.floor() as i64).max(lo);
            self.rng.gen_range(lo..=hi) as f64
        } else if hi > lo {
            self.rng.gen_range(lo..=hi)
        } else {
            lo
        }
    }

    /// Time in `[0, span]`; a multiple of 1/4 when quantized.
    fn time(&mut self, span: f64) -> f64 {
        if self.quantized {
            let steps = (span * 4.0).floor().max(0.0) as i64;
            self.rng.gen_range(0..=steps) as f64 / 4.0
        } else {
            self.rng.gen_range(0.0..=span.max(0.0))
        }
    }

    fn slope(&mut self, allow_flat: bool) -> f64 {
        if self.quantized {
            let choices: &[f64] = if allow_flat {
                &[0.0, 0.5, 1.0, 2.0, 4.0]
            } else {
                &[0.5, 1.0, 2.0, 4.0]
            };
            *choices.choose(&mut self.rng).expect("nonempty")
        } else if allow_flat && self.rng.gen_bool(0.2) {
            0.0
        } else {
            self.rng.gen_range(0.25..=3.0)
        }
    }

    fn delay(&mut self, release: f64, horizon: f64) -> DelayFunction {
        let pieces = self.rng.gen_range(0..=2);
        let mut bp = vec![(release, 0.0)];
        for _ in 0..pieces {
            let (t, y) = *bp.last().expect("nonempty");
            let gap = if self.quantized {
                self.time(horizon / 4.0).max(0.25)
            } else {
                self.time(horizon / 4.0).max(0.05)
            };
            let slope = self.slope(true);
            bp.push((t + gap, y + slope * gap));
        }
        DelayFunction {
            breakpoints: bp,
            final_slope: self.slope(false),
        }
    }
}

fn random_graph(draw: &mut Draw, params: &GenParams) -> WeightedGraph {
    let n = params.n_points.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut draw.rng);
    let mut keys = BTreeSet::new();
    let mut edges = Vec::new();
    for i in 1..n {
        let u = order[draw.rng.gen_range(0..i)];
        let v = order[i];
        keys.insert((u.min(v), u.max(v)));
        edges.push((u.min(v), u.max(v), draw.weight(params.weight_range)));
    }
    let max_edges = n * (n - 1) / 2;
    let mut attempts = 0;
    while keys.len() < max_edges
        && edges.len() < n - 1 + params.extra_edges
        && attempts < 20 * (params.extra_edges + 1)
    {
        attempts += 1;
        let u = draw.rng.gen_range(0..n);
        let v = draw.rng.gen_range(0..n);
        if u != v && keys.insert((u.min(v), u.max(v))) {
            edges.push((u.min(v), u.max(v), draw.weight(params.weight_range)));
        }
    }
    WeightedGraph::new(n, edges)
}

/// Deterministic in `seed`; always a valid instance on a connected graph.
pub fn generate(seed: u64, params: &GenParams) -> Instance {
    let mut draw = Draw {
        rng: ChaCha8Rng::seed_from_u64(seed),
        quantized: params.quantized,
    };
    let graph = random_graph(&mut draw, params);
    let n = graph.node_count;
    let server_start = draw.rng.gen_range(0..n);
    let horizon = params.horizon;
    let requests = match params.mode {
        Mode::Deadline => Requests::Deadline(
            (0..params.n_requests)
                .map(|i| {
                    let point = draw.rng.gen_range(0..n);
                    let release = draw.time(horizon);
                    let window = draw.time(horizon * 0.4);
                    DeadlineRequest {
                        id: i as u64,
                        point,
                        release,
                        deadline: release + window,
                    }
                })
                .collect(),
        ),
        Mode::Delay => Requests::Delay(
            (0..params.n_requests)
                .map(|i| {
                    let point = draw.rng.gen_range(0..n);
                    let release = draw.time(horizon);
                    DelayRequest {
                        id: i as u64,
                        point,
                        release,
                        delay: draw.delay(release, horizon),
                    }
                })
                .collect(),
        ),
    };
    Instance {
        graph,
        server_start,
        requests,
    }
}

/// Star with one or two spokes of length 1 and five to nine spokes of
/// length 6 to 8, server on the hub. Requests come in bursts: one on a short
/// spoke that falls due first, then four or more on distinct long spokes.
/// Integer weights and quarter-grid times throughout.
pub fn star_bursts(seed: u64, mode: Mode, n_requests: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let short = rng.gen_range(1..=2);
    let long = rng.gen_range(5..=9);
    let mut edges: Vec<(usize, usize, f64)> = (1..=short).map(|v| (0, v, 1.0)).collect();
    edges.extend((short + 1..=short + long).map(|v| (0, v, rng.gen_range(6..=8) as f64)));
    let long_legs: Vec<usize> = (short + 1..=short + long).collect();
    let quarter = |rng: &mut ChaCha8Rng, lo: i64, hi: i64| rng.gen_range(lo..=hi) as f64 / 4.0;
    // (point, release, window or slope)
    let mut drawn: Vec<(usize, f64, f64)> = Vec::new();
    let mut t = 0.0;
    while drawn.len() < n_requests {
        let near = rng.gen_range(1..=short);
        drawn.push((near, t, quarter(&mut rng, 1, 4)));
        let k = rng.gen_range(4..=long).min(n_requests - drawn.len());
        for &leg in long_legs.choose_multiple(&mut rng, k) {
            drawn.push((leg, t, quarter(&mut rng, 5, 24)));
        }
        t += quarter(&mut rng, 8, 32);
    }
    let requests = match mode {
        Mode::Deadline => Requests::Deadline(
            drawn
                .iter()
                .enumerate()
                .map(|(i, &(point, release, window))| DeadlineRequest {
                    id: i as u64,
                    point,
                    release,
                    deadline: release + window,
                })
                .collect(),
        ),
        // Steep delay on the short spoke, shallow on the long ones.
        Mode::Delay => Requests::Delay(
            drawn
                .iter()
                .enumerate()
                .map(|(i, &(point, release, _))| DelayRequest {
                    id: i as u64,
                    point,
                    release,
                    delay: DelayFunction::linear(
                        release,
                        if point <= short {
                            *[2.0, 4.0, 8.0].choose(&mut rng).expect("nonempty")
                        } else {
                            *[0.125, 0.25, 0.5].choose(&mut rng).expect("nonempty")
                        },
                    ),
                })
                .collect(),
        ),
    };
    Instance {
        graph: WeightedGraph::new(1 + short + long, edges),
        server_start: 0,
        requests,
    }
}
