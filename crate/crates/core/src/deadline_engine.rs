//! Online service with deadlines.
//!
//! Every pending request carries a level. When a pending request reaches its
//! deadline the engine runs a service: it picks a service level from the
//! trigger's adjusted level, collects the eligible requests, grows a Steiner
//! tree over them by increasing deadline under a budget, tours the tree,
//! upgrades the eligible requests it left behind and, for primary services,
//! moves the server onto the trigger.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{DeadlineRequest, Instance, InstanceError};
use crate::level::{adjusted_level, Level};
use crate::metric::MetricSpace;
use crate::steiner::{dfs_tour, steiner_approx, Host};
use crate::tolerance::{self, pow2};

/// Tree budget factor: the loop stops once the tree costs `4 · 2^ℓ`.
pub const TREE_BUDGET: f64 = 4.0;
/// Per-service movement bound factor: `c(σ) ≤ 21 · 2^ℓ(σ)`.
pub const SERVICE_COST_FACTOR: f64 = 21.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeadlineOptions {
    /// Route Steiner trees only through released request points and the start.
    pub request_regime: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeadlineError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("deadlines must be pairwise distinct; normalize the instance first")]
    TiedDeadlines,
    #[error("request {0} is not pending")]
    NotPending(u64),
    #[error("request {id} released at {release} after the clock reached {now}")]
    ReleasedInPast { id: u64, release: f64, now: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadlineService {
    pub id: usize,
    /// Service time λ(σ): the trigger's deadline.
    pub time: f64,
    pub level: i32,
    /// Server position when the service starts.
    pub start: usize,
    pub trigger: u64,
    pub trigger_point: usize,
    pub trigger_level: Level,
    pub trigger_alevel: Level,
    pub primary: bool,
    pub eligible: Vec<u64>,
    pub served: Vec<u64>,
    pub upgraded: Vec<u64>,
    /// μ(σ): latest deadline among served requests.
    pub forwarding_time: f64,
    /// Waypoints: start, trigger, tree tour, trigger, start, and the trigger
    /// again when primary.
    pub waypoints: Vec<usize>,
    /// Node sequence traversed along shortest paths.
    pub walk: Vec<usize>,
    pub tree_cost: f64,
    pub cost: f64,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadlineOutcome {
    pub id: u64,
    pub point: usize,
    pub release: f64,
    pub deadline: f64,
    pub service_time: f64,
    pub serving_service: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadlineTrace {
    pub total_cost: f64,
    pub server_start: usize,
    pub min_level: i32,
    pub services: Vec<DeadlineService>,
    pub requests: Vec<DeadlineOutcome>,
}

#[derive(Debug, Clone)]
struct Pending {
    req: DeadlineRequest,
    level: Level,
}

/// Engine state. Requests become visible only through [`DeadlineEngine::release`].
#[derive(Debug)]
pub struct DeadlineEngine<'m> {
    metric: &'m MetricSpace,
    opts: DeadlineOptions,
    min_level: i32,
    server_start: usize,
    server: usize,
    now: f64,
    pending: BTreeMap<u64, Pending>,
    released_points: BTreeSet<usize>,
    services: Vec<DeadlineService>,
    outcomes: Vec<DeadlineOutcome>,
}

impl<'m> DeadlineEngine<'m> {
    pub fn new(metric: &'m MetricSpace, server_start: usize, opts: DeadlineOptions) -> Self {
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

    pub fn server(&self) -> usize {
        self.server
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn pending_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.pending.keys().copied()
    }

    pub fn level_of(&self, id: u64) -> Option<Level> {
        self.pending.get(&id).map(|p| p.level)
    }

    pub fn services(&self) -> &[DeadlineService] {
        &self.services
    }

    pub fn release(&mut self, req: DeadlineRequest) -> Result<(), DeadlineError> {
        if req.release < self.now {
            return Err(DeadlineError::ReleasedInPast {
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
            },
        );
        Ok(())
    }

    /// Earliest pending deadline as `(deadline, id)`.
    pub fn next_deadline(&self) -> Option<(f64, u64)> {
        self.pending
            .values()
            .map(|p| (p.req.deadline, p.req.id))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
    }

    fn alevel(&self, p: &Pending) -> Level {
        adjusted_level(p.level, self.metric.dist(self.server, p.req.point))
    }

    /// Runs the service triggered by the deadline of pending request `id`.
    pub fn on_deadline(&mut self, id: u64) -> Result<&DeadlineService, DeadlineError> {
        let trig = self
            .pending
            .get(&id)
            .ok_or(DeadlineError::NotPending(id))?
            .clone();
        let m = self.metric;
        let a = self.server;
        let now = trig.req.deadline;
        self.now = self.now.max(now);
        let trigger_alevel = self.alevel(&trig);
        let primary = trigger_alevel != trig.level;
        let level = trigger_alevel.clamp_to(self.min_level) + 3;

        let mut eligible: Vec<&Pending> = self
            .pending
            .values()
            .filter(|p| self.alevel(p) <= Level::At(level))
            .collect();
        eligible.sort_by(|x, y| {
            x.req
                .deadline
                .total_cmp(&y.req.deadline)
                .then(x.req.id.cmp(&y.req.id))
        });

        let host_points: Vec<usize> = self.released_points.iter().copied().collect();
        let host = if self.opts.request_regime {
            Host::points(m, &host_points)
        } else {
            Host::graph(m)
        };
        let budget = TREE_BUDGET * pow2(level);
        let mut served_ids: BTreeSet<u64> = BTreeSet::from([id]);
        let mut points: BTreeSet<usize> = BTreeSet::from([trig.req.point]);
        let mut tree = steiner_approx(&host, &[trig.req.point]);
        for p in &eligible {
            served_ids.insert(p.req.id);
            points.insert(p.req.point);
            tree = steiner_approx(&host, &points.iter().copied().collect::<Vec<_>>());
            if tolerance::ge(tree.cost, budget) {
                break;
            }
        }

        let q = trig.req.point;
        let mut waypoints = vec![a];
        waypoints.extend(dfs_tour(&tree.tree_edges, q));
        waypoints.push(a);
        if primary {
            waypoints.push(q);
        }
        let cost = m.walk_length(&waypoints);
        let end = if primary { q } else { a };

        let sid = self.services.len();
        let eligible_ids: Vec<u64> = eligible.iter().map(|p| p.req.id).collect();
        let upgraded: Vec<u64> = eligible_ids
            .iter()
            .copied()
            .filter(|i| !served_ids.contains(i))
            .collect();
        let forwarding_time = served_ids
            .iter()
            .map(|i| self.pending[i].req.deadline)
            .fold(f64::NEG_INFINITY, f64::max);
        for i in &served_ids {
            let p = self.pending.remove(i).expect("served requests are pending");
            self.outcomes.push(DeadlineOutcome {
                id: p.req.id,
                point: p.req.point,
                release: p.req.release,
                deadline: p.req.deadline,
                service_time: now,
                serving_service: sid,
            });
        }
        for i in &upgraded {
            self.pending
                .get_mut(i)
                .expect("upgraded requests are pending")
                .level = Level::At(level + 1);
        }
        self.server = end;
        self.services.push(DeadlineService {
            id: sid,
            time: now,
            level,
            start: a,
            trigger: id,
            trigger_point: q,
            trigger_level: trig.level,
            trigger_alevel,
            primary,
            eligible: eligible_ids,
            served: served_ids.into_iter().collect(),
            upgraded,
            forwarding_time,
            walk: m.expand_walk(&waypoints),
            waypoints,
            tree_cost: tree.cost,
            cost,
            end,
        });
        Ok(self.services.last().expect("just pushed"))
    }

    pub fn finish(mut self) -> DeadlineTrace {
        self.outcomes.sort_by_key(|o| o.id);
        DeadlineTrace {
            total_cost: self.services.iter().map(|s| s.cost).sum(),
            server_start: self.server_start,
            min_level: self.min_level,
            services: self.services,
            requests: self.outcomes,
        }
    }
}

/// Replays the instance as a chronological event stream: releases before
/// deadlines at equal times, deadlines by `(time, id)`.
pub fn run_deadline(
    inst: &Instance,
    opts: DeadlineOptions,
) -> Result<DeadlineTrace, DeadlineError> {
    let reqs = inst.deadline_requests()?;
    if !inst.has_distinct_deadlines() {
        return Err(DeadlineError::TiedDeadlines);
    }
    let metric = inst.metric()?;
    let mut order: Vec<&DeadlineRequest> = reqs.iter().collect();
    order.sort_by(|a, b| a.release.total_cmp(&b.release).then(a.id.cmp(&b.id)));
    let mut engine = DeadlineEngine::new(&metric, inst.server_start, opts);
    let mut next = 0;
    loop {
        let release = order.get(next).map(|r| r.release);
        match (release, engine.next_deadline()) {
            (None, None) => break,
            (Some(r), Some((d, _))) if r <= d => {
                engine.release(order[next].clone())?;
                next += 1;
            }
            (Some(_), None) => {
                engine.release(order[next].clone())?;
                next += 1;
            }
            (_, Some((_, id))) => {
                engine.on_deadline(id)?;
            }
        }
    }
    Ok(engine.finish())
}

/// One violated property of a deadline trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeadlineViolation {
    pub service: Option<usize>,
    pub request: Option<u64>,
    pub what: String,
}

/// Post-hoc checks: every request served inside its window, costs equal
/// walk lengths and stay within `21 · 2^ℓ`, eligible sets lie in the service
/// ball, served sets are subsets of eligible sets containing the trigger.
pub fn audit_deadline(
    inst: &Instance,
    trace: &DeadlineTrace,
) -> Result<Vec<DeadlineViolation>, DeadlineError> {
    let reqs = inst.deadline_requests()?;
    let m = inst.metric()?;
    let mut out = Vec::new();
    let by_id: BTreeMap<u64, &DeadlineRequest> = reqs.iter().map(|r| (r.id, r)).collect();
    let outcomes: BTreeMap<u64, &DeadlineOutcome> =
        trace.requests.iter().map(|o| (o.id, o)).collect();
    for r in reqs {
        match outcomes.get(&r.id) {
            None => out.push(DeadlineViolation {
                service: None,
                request: Some(r.id),
                what: "never served".into(),
            }),
            Some(o) => {
                if !(tolerance::ge(o.service_time, r.release)
                    && tolerance::le(o.service_time, r.deadline))
                {
                    out.push(DeadlineViolation {
                        service: Some(o.serving_service),
                        request: Some(r.id),
                        what: format!(
                            "served at {} outside [{}, {}]",
                            o.service_time, r.release, r.deadline
                        ),
                    });
                }
            }
        }
    }
    let mut position = trace.server_start;
    for s in &trace.services {
        let mut bad = |what: String| {
            out.push(DeadlineViolation {
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
        let walked = m.walk_length(&s.waypoints);
        if (walked - s.cost).abs() > tolerance::scaled(walked) {
            bad(format!(
                "cost {} differs from walk length {}",
                s.cost, walked
            ));
        }
        let bound = SERVICE_COST_FACTOR * pow2(s.level);
        if !tolerance::le(s.cost, bound) {
            bad(format!(
                "cost {} exceeds 21·2^{} = {}",
                s.cost, s.level, bound
            ));
        }
        let eligible: BTreeSet<u64> = s.eligible.iter().copied().collect();
        if !s.served.iter().all(|q| eligible.contains(q)) || !s.served.contains(&s.trigger) {
            bad("served set is not a subset of the eligible set containing the trigger".into());
        }
        for q in &s.eligible {
            if let Some(r) = by_id.get(q) {
                if !tolerance::le(m.dist(s.start, r.point), pow2(s.level)) {
                    bad(format!(
                        "eligible request {q} lies outside Ball(a, 2^{})",
                        s.level
                    ));
                }
            }
        }
        if s.end != if s.primary { s.trigger_point } else { s.start } {
            bad("final position does not match the primary flag".into());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::Requests;
    use crate::metric::WeightedGraph;

    fn path_instance(reqs: Vec<DeadlineRequest>) -> Instance {
        Instance {
            graph: WeightedGraph::new(3, vec![(0, 1, 1.0), (1, 2, 2.0)]),
            server_start: 0,
            requests: Requests::Deadline(reqs),
        }
    }

    fn req(id: u64, point: usize, release: f64, deadline: f64) -> DeadlineRequest {
        DeadlineRequest {
            id,
            point,
            release,
            deadline,
        }
    }

    #[test]
    fn empty_instance_costs_nothing() {
        let trace = run_deadline(&path_instance(vec![]), DeadlineOptions::default()).unwrap();
        assert_eq!(trace.total_cost, 0.0);
        assert!(trace.services.is_empty());
    }

    #[test]
    fn lone_far_request() {
        let inst = path_instance(vec![req(0, 2, 0.0, 10.0)]);
        let trace = run_deadline(&inst, DeadlineOptions::default()).unwrap();
        assert_eq!(trace.services.len(), 1);
        let s = &trace.services[0];
        assert_eq!(s.trigger_alevel, Level::At(2));
        assert!(s.primary);
        assert_eq!(s.level, 5);
        assert_eq!(s.served, vec![0]);
        assert_eq!(s.cost, 9.0);
        assert_eq!(s.end, 2);
        assert_eq!(s.time, 10.0);
        assert_eq!(trace.total_cost, 9.0);
        assert!(audit_deadline(&inst, &trace).unwrap().is_empty());
    }

    #[test]
    fn collocated_request_is_free() {
        let inst = path_instance(vec![req(0, 0, 1.0, 2.0)]);
        let trace = run_deadline(&inst, DeadlineOptions::default()).unwrap();
        let s = &trace.services[0];
        assert!(!s.primary);
        assert_eq!(s.trigger_alevel, Level::Bottom);
        assert_eq!(
            s.level,
            MetricSpace::build(inst.graph.clone()).unwrap().min_level() + 3
        );
        assert_eq!(s.cost, 0.0);
    }

    #[test]
    fn shared_point_served_together() {
        let inst = path_instance(vec![req(0, 2, 0.0, 5.0), req(1, 2, 0.0, 6.0)]);
        let trace = run_deadline(&inst, DeadlineOptions::default()).unwrap();
        assert_eq!(trace.services.len(), 1);
        assert_eq!(trace.services[0].served, vec![0, 1]);
        assert_eq!(trace.requests[1].service_time, 5.0);
    }

    #[test]
    fn budget_break_upgrades_leftovers() {
        // Server at the hub of a star: one short spoke, five spokes of 8.
        let mut edges = vec![(0, 1, 1.0)];
        edges.extend((2..7).map(|v| (0, v, 8.0)));
        let inst = Instance {
            graph: WeightedGraph::new(7, edges),
            server_start: 0,
            requests: Requests::Deadline(
                (0..6)
                    .map(|i| req(i, i as usize + 1, 0.0, i as f64 + 1.0))
                    .collect(),
            ),
        };
        let trace = run_deadline(&inst, DeadlineOptions::default()).unwrap();
        assert_eq!(trace.services.len(), 2);
        let s = &trace.services[0];
        assert_eq!((s.level, s.primary), (3, true));
        assert_eq!(s.eligible, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(s.served, vec![0, 1, 2, 3, 4]);
        assert_eq!(s.upgraded, vec![5]);
        assert_eq!(s.tree_cost, 33.0);
        assert_eq!(s.cost, 1.0 + 66.0 + 1.0 + 1.0);
        assert_eq!(s.forwarding_time, 5.0);
        let t = &trace.services[1];
        assert_eq!(t.trigger_level, Level::At(4));
        assert_eq!(t.trigger_alevel, Level::At(4));
        assert!(!t.primary);
        assert_eq!(t.level, 7);
        assert_eq!(t.cost, 18.0);
        assert!(audit_deadline(&inst, &trace).unwrap().is_empty());
    }

    #[test]
    fn rejects_tied_deadlines() {
        let inst = path_instance(vec![req(0, 1, 0.0, 3.0), req(1, 2, 0.0, 3.0)]);
        assert_eq!(
            run_deadline(&inst, DeadlineOptions::default()),
            Err(DeadlineError::TiedDeadlines)
        );
        let norm = inst.normalize_deadlines().unwrap();
        assert!(run_deadline(&norm, DeadlineOptions::default()).is_ok());
    }
}
