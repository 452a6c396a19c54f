//! Online service with delay.
//!
//! Pending requests accumulate delay; a service pays for it either by
//! touring a prize-collecting Steiner tree or by raising per-request
//! investment counters. A level `ℓ` becomes critical once the residual delay
//! of requests with adjusted level at most `ℓ` reaches `2^ℓ`; the engine then
//! runs a service of level `ℓ + 3` for the maximal critical level.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{DelayFunction, DelayRequest, Instance, InstanceError};
use crate::level::{adjusted_level, Level};
use crate::metric::MetricSpace;
use crate::steiner::{dfs_tour, pcst_approx, Host, PcstSolution};
use crate::tolerance::{self, pow2};

/// Forwarding budget factor: τ is the first time the PCST cost reaches `6 · 2^ℓ`.
pub const FORWARD_BUDGET: f64 = 6.0;
/// Per-service cost bound factor: `c(σ) ≤ 39 · 2^ℓ(σ)`.
pub const SERVICE_COST_FACTOR: f64 = 39.0;
/// Services allowed at a single instant before the run is declared stuck.
pub const CASCADE_LIMIT: usize = 10_000;
/// Services allowed over a whole run.
pub const SERVICE_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DelayOptions {
    /// Restrict PCST hosts and relocation targets to released request points
    /// and the start.
    pub request_regime: bool,
    /// Stop with [`DelayError::HorizonExhausted`] if requests are still
    /// pending past this time.
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelayError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("horizon reached with {} requests pending", .0.unserved.len())]
    HorizonExhausted(Box<DelayTrace>),
    #[error("more than {CASCADE_LIMIT} services at time {0}")]
    CascadeLimit(f64),
    #[error("more than {SERVICE_LIMIT} services")]
    ServiceLimit,
    #[error("level {level} is not critical at time {time}")]
    NotCritical { level: i32, time: f64 },
    #[error("request {id} released at {release} after the clock reached {now}")]
    ReleasedInPast { id: u64, release: f64, now: f64 },
}

/// `(y(t) − ctr)₊`.
pub fn residual_delay(delay: &DelayFunction, counter: f64, t: f64) -> f64 {
    (delay.eval(t) - counter).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub id: u64,
    pub point: usize,
    /// Level (not adjusted) at the service time.
    pub level: Level,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayService {
    pub id: usize,
    /// Service time λ(σ).
    pub time: f64,
    /// The critical level that triggered the service.
    pub critical_level: i32,
    pub level: i32,
    pub start: usize,
    pub triggers: Vec<TriggerRecord>,
    pub primary: bool,
    pub relocation: Option<usize>,
    pub relocation_distance: f64,
    pub eligible: Vec<u64>,
    pub served: Vec<u64>,
    pub upgraded: Vec<u64>,
    /// μ(σ) = τ.
    pub forwarding_time: f64,
    /// Counter raises zeroing residual delay at λ(σ).
    pub reset: Vec<(u64, f64)>,
    /// Counter raises paying for unserved eligible requests up to τ.
    pub invest: Vec<(u64, f64)>,
    /// Counter values right before the service, for eligible requests.
    pub counters_before: Vec<(u64, f64)>,
    pub waypoints: Vec<usize>,
    pub walk: Vec<usize>,
    pub tree_cost: f64,
    pub pcst_cost: f64,
    pub movement: f64,
    pub counter_cost: f64,
    pub cost: f64,
    pub end: usize,
    /// `max_i trd_i / 2^{i+1}` right before the service.
    pub trd_ratio_before: f64,
    /// The same ratio after the final move.
    pub trd_ratio_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayOutcome {
    pub id: u64,
    pub point: usize,
    pub release: f64,
    pub service_time: f64,
    pub serving_service: usize,
    pub delay_cost: f64,
    pub counter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    HorizonExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayTrace {
    pub status: RunStatus,
    pub movement_cost: f64,
    pub delay_cost: f64,
    pub total_cost: f64,
    /// Σ of all counter raises; with movement this upper-bounds the total.
    pub counter_cost: f64,
    pub server_start: usize,
    pub min_level: i32,
    pub services: Vec<DelayService>,
    pub requests: Vec<DelayOutcome>,
    pub unserved: Vec<u64>,
}

#[derive(Debug, Clone)]
struct Pending {
    req: DelayRequest,
    level: Level,
    ctr: f64,
}

impl Pending {
    fn residual(&self, t: f64) -> f64 {
        residual_delay(&self.req.delay, self.ctr, t)
    }
}

/// Engine state. Requests become visible only through [`DelayEngine::release`].
#[derive(Debug)]
pub struct DelayEngine<'m> {
    metric: &'m MetricSpace,
    opts: DelayOptions,
    min_level: i32,
    server_start: usize,
    server: usize,
    now: f64,
    pending: BTreeMap<u64, Pending>,
    released_points: BTreeSet<usize>,
    services: Vec<DelayService>,
    outcomes: Vec<DelayOutcome>,
}

impl<'m> DelayEngine<'m> {
    pub fn new(metric: &'m MetricSpace, server_start: usize, opts: DelayOptions) -> Self {
        Self {
            metric,
            opts,
            min_level: metric.min_level(),
            server_start,
            server: server_start,
            now: f64::NEG_INFINITY,
            pending: BTreeMap::new(),
            released_points: BTreeSet::from([server_start]),
            services: Vec::new(),
            outcomes: Vec::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn server(&self) -> usize {
        self.server
    }

    pub fn has_pending(&self) -> bool {
        !self.pending.is_empty()
    }

    pub fn services(&self) -> &[DelayService] {
        &self.services
    }

    pub fn release(&mut self, req: DelayRequest) -> Result<(), DelayError> {
        if req.release < self.now {
            return Err(DelayError::ReleasedInPast {
                id: req.id,
                release: req.release,
                now: self.now,
            });
        }
        self.now = req.release;
        self.released_points.insert(req.point);
        self.pending.insert(
            req.id,
            Pending {
                req,
                level: Level::Bottom,
                ctr: 0.0,
            },
        );
        Ok(())
    }

    /// Moves the clock forward; time never runs backwards.
    pub fn advance_to(&mut self, t: f64) {
        self.now = self.now.max(t);
    }

    fn alevel(&self, p: &Pending) -> i32 {
        adjusted_level(p.level, self.metric.dist(self.server, p.req.point)).clamp_to(self.min_level)
    }

    fn candidate_levels(&self) -> BTreeSet<i32> {
        self.pending.values().map(|p| self.alevel(p)).collect()
    }

    /// Total residual delay at `t` of pending requests with adjusted level ≤ `level`.
    pub fn total_residual(&self, level: i32, t: f64) -> f64 {
        self.pending
            .values()
            .filter(|p| self.alevel(p) <= level)
            .map(|p| p.residual(t))
            .sum()
    }

    /// Largest critical level at the current time.
    pub fn max_critical(&self) -> Option<i32> {
        let t = self.now;
        self.candidate_levels()
            .into_iter()
            .rev()
            .find(|&l| tolerance::ge(self.total_residual(l, t), pow2(l)))
    }

    /// `max_i trd_i(now) / 2^{i+1}` over all levels.
    pub fn max_trd_ratio(&self) -> f64 {
        let t = self.now;
        self.candidate_levels()
            .into_iter()
            .map(|l| self.total_residual(l, t) / pow2(l + 1))
            .fold(0.0, f64::max)
    }

    /// Earliest time in `[now, until]` at which some level becomes critical,
    /// with the level that crosses first. Between kinks every `trd_ℓ` is
    /// linear, so each crossing is an exact linear solve.
    pub fn next_crossing(&self, until: f64) -> Option<(f64, i32)> {
        let from = self.now;
        let mut bounds: Vec<f64> = vec![from];
        for p in self.pending.values() {
            bounds.extend(p.req.delay.breakpoints_between(from, until));
            if p.ctr > 0.0 {
                let k = p.req.delay.inverse(p.ctr);
                if k > from && k < until {
                    bounds.push(k);
                }
            }
        }
        bounds.sort_by(f64::total_cmp);
        bounds.dedup();
        bounds.push(until);
        let levels = self.candidate_levels();
        for seg in bounds.windows(2) {
            let (s0, s1) = (seg[0], seg[1]);
            if s1 < s0 {
                continue;
            }
            let mid = if s1.is_finite() {
                0.5 * (s0 + s1)
            } else {
                s0 + 1.0
            };
            let mut best: Option<(f64, i32)> = None;
            for &l in &levels {
                let mut v0 = 0.0;
                let mut slope = 0.0;
                for p in self.pending.values().filter(|p| self.alevel(p) <= l) {
                    v0 += p.residual(s0);
                    if p.req.delay.eval(mid) > p.ctr {
                        slope += p.req.delay.slope_after(s0);
                    }
                }
                let target = pow2(l);
                let hit = if v0 >= target {
                    Some(s0)
                } else if slope > 0.0 {
                    let t = s0 + (target - v0) / slope;
                    (t <= s1).then_some(t.max(s0))
                } else {
                    None
                };
                if let Some(t) = hit {
                    if best.is_none_or(|(bt, _)| t < bt) {
                        best = Some((t, l));
                    }
                }
            }
            if best.is_some() {
                return best;
            }
        }
        None
    }

    fn host_points(&self) -> Vec<usize> {
        self.released_points.iter().copied().collect()
    }

    /// Per-point penalties `Σ (y_q(t') − ctr_q)₊` over `eligible`.
    fn penalties(&self, eligible: &[u64], t: f64) -> BTreeMap<usize, f64> {
        let mut pens = BTreeMap::new();
        for id in eligible {
            let p = &self.pending[id];
            *pens.entry(p.req.point).or_insert(0.0) += p.residual(t);
        }
        pens
    }

    /// Forwarding time: the first `t' ≥ now` at which the PCST cost reaches
    /// the budget, or at which the PCST solution already serves every
    /// eligible point. Candidate times are scanned in ascending order and
    /// the first satisfying segment is bisected.
    fn forwarding_time(
        &self,
        host: &Host<'_>,
        eligible: &[u64],
        budget: f64,
    ) -> (f64, PcstSolution) {
        let root = self.server;
        let points: BTreeSet<usize> = eligible
            .iter()
            .map(|id| self.pending[id].req.point)
            .collect();
        let check = |t: f64| -> (bool, PcstSolution) {
            let sol = pcst_approx(host, &self.penalties(eligible, t), root);
            let all_served = points
                .iter()
                .all(|p| *p == root || sol.served.binary_search(p).is_ok());
            (tolerance::ge(sol.total_cost, budget) || all_served, sol)
        };
        let t0 = self.now;
        let mut candidates: Vec<f64> = vec![t0];
        for id in eligible {
            let p = &self.pending[id];
            candidates.extend(p.req.delay.breakpoints_between(t0, f64::INFINITY));
            let k = p.req.delay.inverse(p.ctr);
            if k > t0 {
                candidates.push(k);
            }
        }
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();
        let mut lo = f64::NAN;
        let mut hit: Option<(f64, PcstSolution)> = None;
        for &c in &candidates {
            let (ok, sol) = check(c);
            if ok {
                hit = Some((c, sol));
                break;
            }
            lo = c;
        }
        if hit.is_none() {
            let slopes: f64 = eligible
                .iter()
                .map(|id| self.pending[id].req.delay.final_slope)
                .sum();
            let step = (budget / slopes).max(tolerance::eps());
            for k in 0..200 {
                let c = lo + step * pow2(k);
                let (ok, sol) = check(c);
                if ok {
                    hit = Some((c, sol));
                    break;
                }
                lo = c;
            }
        }
        let (mut hi, mut sol) =
            hit.expect("penalties grow without bound, so the forwarding time exists");
        if lo.is_nan() {
            return (hi, sol);
        }
        for _ in 0..200 {
            if hi - lo <= tolerance::scaled(hi) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let (ok, s) = check(mid);
            if ok {
                hi = mid;
                sol = s;
            } else {
                lo = mid;
            }
        }
        (hi, sol)
    }

    /// Runs a service for critical level `level` at the current time.
    pub fn on_critical(&mut self, critical: i32) -> Result<&DelayService, DelayError> {
        let m = self.metric;
        let t = self.now;
        let a = self.server;
        if !tolerance::ge(self.total_residual(critical, t), pow2(critical)) {
            return Err(DelayError::NotCritical {
                level: critical,
                time: t,
            });
        }
        let trd_ratio_before = self.max_trd_ratio();
        let level = critical + 3;

        let triggers: Vec<TriggerRecord> = self
            .pending
            .values()
            .filter(|p| self.alevel(p) <= critical)
            .filter_map(|p| {
                let residual = p.residual(t);
                tolerance::gt(residual, 0.0).then_some(TriggerRecord {
                    id: p.req.id,
                    point: p.req.point,
                    level: p.level,
                    residual,
                })
            })
            .collect();
        let primary = triggers.iter().all(|q| q.level < Level::At(level - 4));

        let host_points = self.host_points();
        let mut relocation = None;
        if primary {
            let radius = pow2(level - 8);
            let threshold = pow2(level - 4);
            let candidates: Vec<usize> = if self.opts.request_regime {
                host_points.clone()
            } else {
                (0..m.n()).collect()
            };
            let mut best = f64::NEG_INFINITY;
            for c in candidates {
                let mass: f64 = triggers
                    .iter()
                    .filter(|q| tolerance::le(m.dist(c, q.point), radius))
                    .map(|q| q.residual)
                    .sum();
                if tolerance::gt(mass, threshold) && mass > best {
                    best = mass;
                    relocation = Some(c);
                }
            }
            // Only reachable at the clamped bottom levels, where the residual
            // sits on the server's own point: staying put is the same move.
            if relocation == Some(a) {
                relocation = None;
            }
        }

        let eligible: Vec<u64> = self
            .pending
            .values()
            .filter(|p| self.alevel(p) <= level)
            .map(|p| p.req.id)
            .collect();
        let counters_before: Vec<(u64, f64)> = eligible
            .iter()
            .map(|id| (*id, self.pending[id].ctr))
            .collect();
        let mut reset = Vec::new();
        for id in &eligible {
            let p = self
                .pending
                .get_mut(id)
                .expect("eligible requests are pending");
            let y = p.req.delay.eval(t);
            if y > p.ctr {
                reset.push((*id, y - p.ctr));
                p.ctr = y;
            }
        }

        let host = if self.opts.request_regime {
            Host::points(m, &host_points)
        } else {
            Host::graph(m)
        };
        let (tau, sol) = self.forwarding_time(&host, &eligible, FORWARD_BUDGET * pow2(level));

        let served_points: BTreeSet<usize> = sol
            .served
            .iter()
            .copied()
            .chain(std::iter::once(a))
            .collect();
        let mut waypoints = dfs_tour(&sol.tree_edges, a);
        let tour_length = m.walk_length(&waypoints);
        let sid = self.services.len();
        let mut served = Vec::new();
        let mut upgraded = Vec::new();
        let mut invest = Vec::new();
        for id in &eligible {
            let point = self.pending[id].req.point;
            if served_points.contains(&point) {
                let p = self
                    .pending
                    .remove(id)
                    .expect("eligible requests are pending");
                self.outcomes.push(DelayOutcome {
                    id: *id,
                    point,
                    release: p.req.release,
                    service_time: t,
                    serving_service: sid,
                    delay_cost: p.req.delay.eval(t),
                    counter: p.ctr,
                });
                served.push(*id);
            } else {
                let p = self
                    .pending
                    .get_mut(id)
                    .expect("eligible requests are pending");
                let y = p.req.delay.eval(tau);
                if y > p.ctr {
                    invest.push((*id, y - p.ctr));
                    p.ctr = y;
                }
                p.level = Level::At(level + 1);
                upgraded.push(*id);
            }
        }

        let relocation_distance = relocation.map_or(0.0, |b| m.dist(a, b));
        if let Some(b) = relocation {
            waypoints.push(b);
            self.server = b;
        }
        let movement = tour_length + relocation_distance;
        let counter_cost: f64 = reset.iter().chain(&invest).map(|x| x.1).sum();
        let trd_ratio_after = self.max_trd_ratio();
        self.services.push(DelayService {
            id: sid,
            time: t,
            critical_level: critical,
            level,
            start: a,
            triggers,
            primary,
            relocation,
            relocation_distance,
            eligible,
            served,
            upgraded,
            forwarding_time: tau,
            reset,
            invest,
            counters_before,
            walk: m.expand_walk(&waypoints),
            waypoints,
            tree_cost: sol.tree_cost,
            pcst_cost: sol.total_cost,
            movement,
            counter_cost,
            cost: movement + counter_cost,
            end: self.server,
            trd_ratio_before,
            trd_ratio_after,
        });
        Ok(self.services.last().expect("just pushed"))
    }

    pub fn finish(mut self, status: RunStatus) -> DelayTrace {
        self.outcomes.sort_by_key(|o| o.id);
        let movement_cost: f64 = self.services.iter().map(|s| s.movement).sum();
        let delay_cost: f64 = self.outcomes.iter().map(|o| o.delay_cost).sum();
        DelayTrace {
            status,
            movement_cost,
            delay_cost,
            total_cost: movement_cost + delay_cost,
            counter_cost: self.services.iter().map(|s| s.counter_cost).sum(),
            server_start: self.server_start,
            min_level: self.min_level,
            services: self.services,
            requests: self.outcomes,
            unserved: self.pending.keys().copied().collect(),
        }
    }
}

/// Alternates critical-event detection and services until every request is
/// served, or the horizon passes with requests still pending.
pub fn run_delay(inst: &Instance, opts: DelayOptions) -> Result<DelayTrace, DelayError> {
    let reqs = inst.delay_requests()?;
    let metric = inst.metric()?;
    let mut order: Vec<&DelayRequest> = reqs.iter().collect();
    order.sort_by(|a, b| a.release.total_cmp(&b.release).then(a.id.cmp(&b.id)));
    let horizon = opts.horizon.unwrap_or(f64::INFINITY);
    let mut engine = DelayEngine::new(&metric, inst.server_start, opts);
    let mut next = 0;
    let mut total = 0usize;
    if let Some(first) = order.first() {
        engine.advance_to(first.release);
    }
    loop {
        while next < order.len() && order[next].release <= engine.now() {
            engine.release(order[next].clone())?;
            next += 1;
        }
        let mut cascade = 0;
        while let Some(l) = engine.max_critical() {
            engine.on_critical(l)?;
            cascade += 1;
            total += 1;
            if cascade > CASCADE_LIMIT {
                return Err(DelayError::CascadeLimit(engine.now()));
            }
            if total > SERVICE_LIMIT {
                return Err(DelayError::ServiceLimit);
            }
        }
        let until = order.get(next).map_or(f64::INFINITY, |r| r.release);
        if !engine.has_pending() {
            if next == order.len() {
                return Ok(engine.finish(RunStatus::Complete));
            }
            engine.advance_to(until);
            continue;
        }
        match engine.next_crossing(until.min(horizon)) {
            Some((t, l)) if t < until => {
                if t > horizon {
                    break;
                }
                engine.advance_to(t);
                let l = engine.max_critical().unwrap_or(l);
                engine.on_critical(l)?;
                total += 1;
                if total > SERVICE_LIMIT {
                    return Err(DelayError::ServiceLimit);
                }
            }
            _ => {
                if until > horizon {
                    break;
                }
                engine.advance_to(until);
            }
        }
    }
    Err(DelayError::HorizonExhausted(Box::new(
        engine.finish(RunStatus::HorizonExhausted),
    )))
}

/// One violated property of a delay trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayViolation {
    pub service: Option<usize>,
    pub request: Option<u64>,
    pub what: String,
}

/// Post-hoc checks: no level exceeds twice its critical threshold at service
/// boundaries, relocations stay within their distance window, each service
/// costs at most `39 · 2^ℓ`, every request is served no earlier than its
/// release, and movement matches the recorded walk.
pub fn audit_delay(inst: &Instance, trace: &DelayTrace) -> Result<Vec<DelayViolation>, DelayError> {
    let reqs = inst.delay_requests()?;
    let m = inst.metric()?;
    let mut out = Vec::new();
    let outcomes: BTreeMap<u64, &DelayOutcome> = trace.requests.iter().map(|o| (o.id, o)).collect();
    for r in reqs {
        match outcomes.get(&r.id) {
            None if trace.status == RunStatus::Complete => out.push(DelayViolation {
                service: None,
                request: Some(r.id),
                what: "never served".into(),
            }),
            Some(o) if !tolerance::ge(o.service_time, r.release) => out.push(DelayViolation {
                service: Some(o.serving_service),
                request: Some(r.id),
                what: format!("served at {} before release {}", o.service_time, r.release),
            }),
            _ => {}
        }
    }
    let mut position = trace.server_start;
    for s in &trace.services {
        let mut bad = |what: String| {
            out.push(DelayViolation {
                service: Some(s.id),
                request: None,
                what,
            })
        };
        if s.start != position {
            bad(format!(
                "starts at {} but server was at {}",
                s.start, position
            ));
        }
        position = s.end;
        for (name, ratio) in [("before", s.trd_ratio_before), ("after", s.trd_ratio_after)] {
            if !tolerance::le(ratio, 1.0) {
                bad(format!(
                    "trd_i exceeds 2^(i+1) {name} the service (ratio {ratio})"
                ));
            }
        }
        if let Some(b) = s.relocation {
            let d = m.dist(s.start, b);
            let lo = pow2(s.level - 5) - pow2(s.level - 8);
            let hi = pow2(s.level - 3) + pow2(s.level - 8);
            if !(tolerance::ge(d, lo) && tolerance::le(d, hi)) {
                bad(format!("relocation distance {d} outside [{lo}, {hi}]"));
            }
            if !s.primary {
                bad("non-primary service relocated".into());
            }
        }
        let bound = SERVICE_COST_FACTOR * pow2(s.level);
        if !tolerance::le(s.cost, bound) {
            bad(format!(
                "cost {} exceeds 39·2^{} = {}",
                s.cost, s.level, bound
            ));
        }
        let walked = m.walk_length(&s.waypoints);
        if (walked - s.movement).abs() > tolerance::scaled(walked) {
            bad(format!(
                "movement {} differs from walk length {}",
                s.movement, walked
            ));
        }
        let eligible: BTreeSet<u64> = s.eligible.iter().copied().collect();
        if !s
            .served
            .iter()
            .chain(&s.upgraded)
            .all(|q| eligible.contains(q))
            || !s.triggers.iter().all(|q| eligible.contains(&q.id))
        {
            bad("served, upgraded or trigger request outside the eligible set".into());
        }
        if s.forwarding_time < s.time {
            bad("forwarding time precedes the service".into());
        }
    }
    Ok(out)
}
