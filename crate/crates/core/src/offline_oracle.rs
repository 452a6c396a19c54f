//! Exact offline optimum for small instances, with a timed walk trace.
//!
//! Deadlines: a visiting order is feasible iff serving each request at the
//! latest release seen so far meets its deadline, so completion time depends
//! only on the visited set and a DP over (visited set, last request) is
//! exact. Delay: every batch can be shifted back to the latest release among
//! its members without raising any delay, so batches happen at release times
//! and a DP over (release index, position, served set) is exact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, InstanceError, Mode};
use crate::metric::{EdgeSubgraph, MetricSpace};

pub const DEADLINE_REQUEST_CAP: usize = 12;
pub const DELAY_REQUEST_CAP: usize = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("{got} requests exceed the oracle cap of {cap}")]
    TooManyRequests { got: usize, cap: usize },
    #[error("no feasible schedule meets every deadline")]
    Infeasible,
}

/// One instantaneous move of the optimal server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptEvent {
    pub time: f64,
    pub from: usize,
    pub to: usize,
    /// Node sequence along a shortest path from `from` to `to`.
    pub walk: Vec<usize>,
    pub served: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptTrace {
    pub mode: Mode,
    pub server_start: usize,
    pub movement_cost: f64,
    pub delay_cost: f64,
    pub total_cost: f64,
    pub events: Vec<OptEvent>,
    /// `(request id, service time)`, ascending by id.
    pub service_times: Vec<(u64, f64)>,
}

impl OptTrace {
    /// Server position after every event at time `≤ t`.
    pub fn position_at(&self, t: f64) -> usize {
        self.events
            .iter()
            .take_while(|e| e.time <= t)
            .last()
            .map_or(self.server_start, |e| e.to)
    }

    pub fn service_time(&self, id: u64) -> Option<f64> {
        self.service_times
            .binary_search_by_key(&id, |x| x.0)
            .ok()
            .map(|i| self.service_times[i].1)
    }

    /// Graph edges traversed by events whose time lies in `[t1, t2]`.
    pub fn edges_during(&self, m: &MetricSpace, t1: f64, t2: f64) -> EdgeSubgraph {
        let mut g = EdgeSubgraph::default();
        for e in self.events.iter().filter(|e| e.time >= t1 && e.time <= t2) {
            for hop in e.walk.windows(2) {
                let w = m
                    .edge_weight(hop[0], hop[1])
                    .expect("trace walks follow graph edges");
                g.insert(hop[0], hop[1], w);
            }
        }
        g
    }

    /// All traversed edges.
    pub fn all_edges(&self, m: &MetricSpace) -> EdgeSubgraph {
        self.edges_during(m, f64::NEG_INFINITY, f64::INFINITY)
    }
}

/// Convenience wrapper for [`OptTrace::edges_during`].
pub fn opt_edges_during(trace: &OptTrace, m: &MetricSpace, t1: f64, t2: f64) -> EdgeSubgraph {
    trace.edges_during(m, t1, t2)
}

fn event(m: &MetricSpace, time: f64, from: usize, to: usize, served: Vec<u64>) -> OptEvent {
    OptEvent {
        time,
        from,
        to,
        walk: m.shortest_path(from, to),
        served,
    }
}

/// Minimum-movement schedule meeting every deadline.
pub fn opt_deadline(inst: &Instance) -> Result<OptTrace, OracleError> {
    let reqs = inst.deadline_requests()?;
    let k = reqs.len();
    if k > DEADLINE_REQUEST_CAP {
        return Err(OracleError::TooManyRequests {
            got: k,
            cap: DEADLINE_REQUEST_CAP,
        });
    }
    let m = inst.metric()?;
    let s = inst.server_start;
    if k == 0 {
        return Ok(OptTrace {
            mode: Mode::Deadline,
            server_start: s,
            movement_cost: 0.0,
            delay_cost: 0.0,
            total_cost: 0.0,
            events: vec![],
            service_times: vec![],
        });
    }
    let full = 1usize << k;
    let mut latest = vec![f64::NEG_INFINITY; full];
    for mask in 1..full {
        let low = mask.trailing_zeros() as usize;
        latest[mask] = latest[mask & (mask - 1)].max(reqs[low].release);
    }
    let mut cost = vec![f64::INFINITY; full * k];
    let mut parent = vec![usize::MAX; full * k];
    for j in 0..k {
        if reqs[j].release <= reqs[j].deadline {
            cost[(1 << j) * k + j] = m.dist(s, reqs[j].point);
        }
    }
    for mask in 1..full {
        for last in 0..k {
            let c = cost[mask * k + last];
            if !c.is_finite() {
                continue;
            }
            for j in 0..k {
                if mask & (1 << j) != 0 || latest[mask].max(reqs[j].release) > reqs[j].deadline {
                    continue;
                }
                let next = mask | (1 << j);
                let nc = c + m.dist(reqs[last].point, reqs[j].point);
                if nc < cost[next * k + j] {
                    cost[next * k + j] = nc;
                    parent[next * k + j] = last;
                }
            }
        }
    }
    let last = (0..k)
        .filter(|&j| cost[(full - 1) * k + j].is_finite())
        .min_by(|&a, &b| cost[(full - 1) * k + a].total_cmp(&cost[(full - 1) * k + b]))
        .ok_or(OracleError::Infeasible)?;
    let best = cost[(full - 1) * k + last];
    let mut order = vec![last];
    let mut mask = full - 1;
    let mut cur = last;
    while parent[mask * k + cur] != usize::MAX {
        let p = parent[mask * k + cur];
        mask ^= 1 << cur;
        order.push(p);
        cur = p;
    }
    order.reverse();
    let mut events = Vec::with_capacity(k);
    let mut time = f64::NEG_INFINITY;
    let mut pos = s;
    let mut service_times = Vec::with_capacity(k);
    for &j in &order {
        time = time.max(reqs[j].release);
        events.push(event(&m, time, pos, reqs[j].point, vec![reqs[j].id]));
        service_times.push((reqs[j].id, time));
        pos = reqs[j].point;
    }
    service_times.sort_by_key(|x| x.0);
    Ok(OptTrace {
        mode: Mode::Deadline,
        server_start: s,
        movement_cost: best,
        delay_cost: 0.0,
        total_cost: best,
        events,
        service_times,
    })
}

/// Minimum movement plus delay.
pub fn opt_delay(inst: &Instance) -> Result<OptTrace, OracleError> {
    let reqs = inst.delay_requests()?;
    let k = reqs.len();
    if k > DELAY_REQUEST_CAP {
        return Err(OracleError::TooManyRequests {
            got: k,
            cap: DELAY_REQUEST_CAP,
        });
    }
    let m = inst.metric()?;
    let n = m.n();
    let s = inst.server_start;
    let full = 1usize << k;
    let mut times: Vec<f64> = reqs.iter().map(|r| r.release).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let nt = times.len();

    // walk[p][S][j]: shortest walk from point p through every request of S, ending at j ∈ S.
    let mut walk = vec![f64::INFINITY; n * full * k.max(1)];
    let idx = |p: usize, set: usize, j: usize| (p * full + set) * k + j;
    for p in 0..n {
        for j in 0..k {
            walk[idx(p, 1 << j, j)] = m.dist(p, reqs[j].point);
        }
        for set in 1..full {
            for j in 0..k {
                let c = walk[idx(p, set, j)];
                if set & (1 << j) == 0 || !c.is_finite() {
                    continue;
                }
                for x in 0..k {
                    if set & (1 << x) != 0 {
                        continue;
                    }
                    let nc = c + m.dist(reqs[j].point, reqs[x].point);
                    let slot = idx(p, set | (1 << x), x);
                    if nc < walk[slot] {
                        walk[slot] = nc;
                    }
                }
            }
        }
    }

    // best[t][p][S]: minimum cost before the batch at times[t], at point p, having served S.
    let released: Vec<usize> = times
        .iter()
        .map(|&t| {
            (0..k)
                .filter(|&j| reqs[j].release <= t)
                .fold(0, |acc, j| acc | (1 << j))
        })
        .collect();
    let state = |t: usize, p: usize, set: usize| (t * n + p) * full + set;
    let mut best = vec![f64::INFINITY; (nt + 1) * n * full];
    let mut back: Vec<(usize, usize, usize)> = vec![(usize::MAX, 0, 0); (nt + 1) * n * full];
    best[state(0, s, 0)] = 0.0;
    for t in 0..nt {
        let delays: Vec<f64> = reqs.iter().map(|r| r.delay.eval(times[t])).collect();
        for p in 0..n {
            for set in 0..full {
                let c = best[state(t, p, set)];
                if !c.is_finite() {
                    continue;
                }
                let avail = released[t] & !set;
                let mut batch = avail;
                loop {
                    // Enumerates every subset of `avail`, including the empty one.
                    if batch == 0 {
                        let slot = state(t + 1, p, set);
                        if c < best[slot] {
                            best[slot] = c;
                            back[slot] = (p, set, usize::MAX);
                        }
                    } else {
                        let delay: f64 = (0..k)
                            .filter(|j| batch & (1 << j) != 0)
                            .map(|j| delays[j])
                            .sum();
                        for j in 0..k {
                            if batch & (1 << j) == 0 {
                                continue;
                            }
                            let nc = c + walk[idx(p, batch, j)] + delay;
                            let slot = state(t + 1, reqs[j].point, set | batch);
                            if nc < best[slot] {
                                best[slot] = nc;
                                back[slot] = (p, set, j);
                            }
                        }
                    }
                    if batch == 0 {
                        break;
                    }
                    batch = (batch - 1) & avail;
                }
            }
        }
    }
    let (end, total) = (0..n)
        .map(|p| (p, best[state(nt, p, full - 1)]))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .filter(|x| x.1.is_finite())
        .unwrap_or((s, 0.0));

    // Rebuild batches, then each batch's visiting order.
    let mut batches: Vec<(usize, usize, usize, usize)> = Vec::new();
    let (mut p, mut set) = (end, full - 1);
    for t in (0..nt).rev() {
        let (pp, ps, last) = back[state(t + 1, p, set)];
        if last != usize::MAX {
            batches.push((t, pp, set ^ ps, last));
        }
        p = pp;
        set = ps;
    }
    batches.reverse();
    let mut events = Vec::new();
    let mut service_times = Vec::new();
    let mut movement = 0.0;
    let mut delay_cost = 0.0;
    for (t, from, batch, last) in batches {
        let mut order = vec![last];
        let mut rest = batch ^ (1 << last);
        let mut cur = last;
        while rest != 0 {
            let target = walk[idx(from, rest | (1 << cur), cur)];
            let prev = (0..k)
                .filter(|&x| rest & (1 << x) != 0)
                .find(|&x| {
                    let c = walk[idx(from, rest, x)] + m.dist(reqs[x].point, reqs[cur].point);
                    (c - target).abs() <= crate::tolerance::scaled(target)
                })
                .expect("walk table is consistent");
            order.push(prev);
            rest ^= 1 << prev;
            cur = prev;
        }
        order.reverse();
        let mut pos = from;
        for j in order {
            movement += m.dist(pos, reqs[j].point);
            delay_cost += reqs[j].delay.eval(times[t]);
            events.push(event(&m, times[t], pos, reqs[j].point, vec![reqs[j].id]));
            service_times.push((reqs[j].id, times[t]));
            pos = reqs[j].point;
        }
    }
    service_times.sort_by_key(|x| x.0);
    debug_assert!((movement + delay_cost - total).abs() <= crate::tolerance::scaled(total));
    Ok(OptTrace {
        mode: Mode::Delay,
        server_start: s,
        movement_cost: movement,
        delay_cost,
        total_cost: total,
        events,
        service_times,
    })
}

/// Dispatches on the instance mode.
pub fn opt(inst: &Instance) -> Result<OptTrace, OracleError> {
    match inst.mode() {
        Mode::Deadline => opt_deadline(inst),
        Mode::Delay => opt_delay(inst),
    }
}

/// Whether the instance fits the oracle caps.
pub fn within_caps(inst: &Instance) -> bool {
    inst.requests.len()
        <= match inst.mode() {
            Mode::Deadline => DEADLINE_REQUEST_CAP,
            Mode::Delay => DELAY_REQUEST_CAP,
        }
}
