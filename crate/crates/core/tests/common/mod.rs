//! Brute-force reference solvers and the seeded suites shared by the
//! integration tests.

#![allow(dead_code)]

use metric_serve::generate::{generate, star_bursts, GenParams};
use metric_serve::instance::{DelayRequest, Instance, Mode};
use metric_serve::metric::MetricSpace;

/// `n = 2 + seed mod 9`, `m = 1 + seed mod max_requests`; even seeds quantized.
pub fn params(seed: u64, mode: Mode, max_requests: u64) -> GenParams {
    let mut p = GenParams::new(
        2 + (seed % 9) as usize,
        1 + (seed % max_requests) as usize,
        mode,
    );
    p.quantized = seed.is_multiple_of(2);
    p
}

pub fn deadline_instance(seed: u64, max_requests: u64) -> Instance {
    generate(seed, &params(seed, Mode::Deadline, max_requests))
        .normalize_deadlines()
        .unwrap()
}

pub fn delay_instance(seed: u64, max_requests: u64) -> Instance {
    generate(seed, &params(seed, Mode::Delay, max_requests))
}

/// Burst instances within the oracle caps: 8 to 12 deadline requests.
pub fn deadline_bursts(seed: u64) -> Instance {
    star_bursts(seed, Mode::Deadline, 8 + (seed % 5) as usize)
        .normalize_deadlines()
        .unwrap()
}

/// Burst instances at the delay oracle cap.
pub fn delay_bursts(seed: u64) -> Instance {
    star_bursts(seed, Mode::Delay, 8)
}

/// Quantized deadline instance on a short horizon, so windows overlap.
pub fn small_deadline(seed: u64, n: usize, k: usize) -> Instance {
    let mut p = GenParams::new(n, k, Mode::Deadline).quantized();
    p.horizon = 8.0;
    generate(seed, &p)
}

pub fn small_delay(seed: u64, n: usize, k: usize) -> Instance {
    let mut p = GenParams::new(n, k, Mode::Delay).quantized();
    p.horizon = 8.0;
    generate(seed, &p)
}

pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, k - 1);
            out.push(q);
        }
    }
    out
}

/// Cheapest order visiting every request inside its window, waiting as
/// needed. `None` when no order is feasible.
pub fn deadline_by_permutation(inst: &Instance) -> Option<f64> {
    let reqs = inst.deadline_requests().unwrap();
    let m = inst.metric().unwrap();
    let mut best: Option<f64> = None;
    for perm in permutations(reqs.len()) {
        let mut t = f64::NEG_INFINITY;
        let mut pos = inst.server_start;
        let mut cost = 0.0;
        let mut ok = true;
        for j in perm {
            t = t.max(reqs[j].release);
            if t > reqs[j].deadline {
                ok = false;
                break;
            }
            cost += m.dist(pos, reqs[j].point);
            pos = reqs[j].point;
        }
        if ok && best.is_none_or(|b| cost < b) {
            best = Some(cost);
        }
    }
    best
}

/// Every visiting order combined with every nondecreasing assignment of
/// release times as service times.
pub fn delay_by_batches(inst: &Instance) -> f64 {
    let reqs = inst.delay_requests().unwrap();
    if reqs.is_empty() {
        return 0.0;
    }
    let m = inst.metric().unwrap();
    let mut times: Vec<f64> = reqs.iter().map(|r| r.release).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut best = f64::INFINITY;
    for perm in permutations(reqs.len()) {
        assign(
            &perm,
            0,
            0,
            inst.server_start,
            0.0,
            &times,
            reqs,
            &m,
            &mut best,
        );
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn assign(
    perm: &[usize],
    i: usize,
    min_t: usize,
    pos: usize,
    acc: f64,
    times: &[f64],
    reqs: &[DelayRequest],
    m: &MetricSpace,
    best: &mut f64,
) {
    if i == perm.len() {
        *best = best.min(acc);
        return;
    }
    let r = &reqs[perm[i]];
    for ti in min_t..times.len() {
        if times[ti] < r.release {
            continue;
        }
        let c = acc + m.dist(pos, r.point) + r.delay.eval(times[ti]);
        assign(perm, i + 1, ti, r.point, c, times, reqs, m, best);
    }
}
