use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::cylinders::{
    build_certified_cylinders, build_primary_cylinders, level_disjointness,
    perforate_and_partition, primary_role, rho_certified, rho_deadline_primary, rho_delay_primary,
    Cylinder, CylinderKind, LevelVerdict, PrimaryRole,
};
use super::{classify, AnalysisError, Classification, RunTrace};
use crate::instance::{DelayFunction, Instance, Mode};
use crate::metric::MetricSpace;
use crate::offline_oracle::OptTrace;
use crate::steiner::{steiner_exact, Host, EXACT_TERMINAL_CAP};
use crate::tolerance::{ceil_log2, pow2};

/// Absolute slack allowed on every reported inequality.
pub const CHECK_TOL: f64 = 1e-7;

const CHARGE_CHECKS: &[&str] = &[
    "far_primary_intersection",
    "far_primary_perforated",
    "primary_charge",
    "primary_perforated_charge",
    "certified_intersection",
    "certified_perforated",
    "certified_charge",
    "certified_perforated_charge",
    "certified_steiner_bridge",
    "level_charge_sum",
    "level_delay_charge_sum",
    "class_charge_sum",
    "class_delay_charge_sum",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Le,
    Lt,
    Eq,
}

/// One evaluated inequality `lhs <relation> rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub service: Option<usize>,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
    pub pass: bool,
}

impl Check {
    pub fn new(name: &str, service: Option<usize>, lhs: f64, relation: Relation, rhs: f64) -> Self {
        // Empty float sums are -0.0.
        let (lhs, rhs) = (lhs + 0.0, rhs + 0.0);
        let pass = match relation {
            Relation::Le => lhs <= rhs + CHECK_TOL,
            Relation::Lt => lhs < rhs,
            Relation::Eq => (lhs - rhs).abs() <= CHECK_TOL,
        };
        Self {
            name: name.to_string(),
            service,
            lhs,
            relation,
            rhs,
            pass,
        }
    }

    /// Charge inequalities compare against the optimum; everything else is
    /// a structural property of the online trace.
    pub fn is_structural(&self) -> bool {
        !CHARGE_CHECKS.contains(&self.name.as_str())
    }

    pub fn slack(&self) -> f64 {
        match self.relation {
            Relation::Le | Relation::Lt => self.rhs - self.lhs,
            Relation::Eq => -(self.lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceCharge {
    pub service: usize,
    pub level: i32,
    pub kind: CylinderKind,
    pub role: Option<PrimaryRole>,
    pub intersection: Option<f64>,
    pub perforated_intersection: Option<f64>,
    pub pdchg: Option<f64>,
    pub cdchg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub kind: CylinderKind,
    pub rho: f64,
    pub class_count: usize,
    /// Owners per class.
    pub classes: Vec<Vec<usize>>,
    pub overlapping: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargeReport {
    pub mode: Mode,
    pub n: usize,
    pub opt_movement: Option<f64>,
    pub opt_delay: Option<f64>,
    pub classification: Classification,
    pub cylinders: Vec<Cylinder>,
    pub charges: Vec<ServiceCharge>,
    pub disjointness: Vec<LevelVerdict>,
    pub partitions: Vec<PartitionReport>,
    pub checks: Vec<Check>,
}

impl ChargeReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn structural_failures(&self) -> impl Iterator<Item = &Check> {
        self.failures().filter(|c| c.is_structural())
    }

    pub fn checks_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a Check> {
        self.checks.iter().filter(move |c| c.name == name)
    }
}

/// Runs every structural audit on `trace`, and with `opt` also every charge
/// inequality and the aggregate bounds against the optimum's costs.
pub fn charge_report(
    inst: &Instance,
    trace: &RunTrace,
    opt: Option<&OptTrace>,
) -> Result<ChargeReport, AnalysisError> {
    let mode = inst.mode();
    if trace.mode() != mode {
        return Err(AnalysisError::ModeMismatch {
            what: "run trace",
            expected: mode,
            found: trace.mode(),
        });
    }
    if let Some(o) = opt {
        if o.mode != mode {
            return Err(AnalysisError::ModeMismatch {
                what: "optimum trace",
                expected: mode,
                found: o.mode,
            });
        }
    }
    if !trace.is_complete() {
        return Err(AnalysisError::Incomplete);
    }
    let m = inst.metric()?;
    let n = m.n();
    let cls = classify(trace);
    let views = trace.views();
    let primary = build_primary_cylinders(inst, &m, trace, opt)?;
    let certified = build_certified_cylinders(&m, trace, &cls);
    let mut checks = Vec::new();

    for (&c, list) in &cls.certifiers_of {
        checks.push(Check::new(
            "certified_once",
            Some(c),
            list.len() as f64,
            Relation::Eq,
            1.0,
        ));
    }
    let (gap_lo, gap_hi) = match mode {
        Mode::Deadline => (4.0, 4.0),
        Mode::Delay => (4.0, 5.0),
    };
    for (&s, &c) in &cls.certifier {
        let gap = (views[s].level - views[c].level) as f64;
        checks.push(Check::new(
            "certification_gap_min",
            Some(s),
            gap_lo,
            Relation::Le,
            gap,
        ));
        checks.push(Check::new(
            "certification_gap_max",
            Some(s),
            gap,
            Relation::Le,
            gap_hi,
        ));
    }
    for &o in &cls.orphans {
        if views[o].qualifying.is_some_and(|(_, l)| !l.is_bottom()) {
            checks.push(Check::new("witness_count", Some(o), 0.0, Relation::Eq, 1.0));
        }
    }

    let windows = request_windows(inst);
    for c in &certified {
        let Some(ptime) = c.start else { continue };
        match mode {
            Mode::Deadline => {
                for q in &views[c.owner].served {
                    let (r, d) = windows[q];
                    checks.push(Check::new(
                        "certified_window_start",
                        Some(c.owner),
                        ptime,
                        Relation::Le,
                        r,
                    ));
                    checks.push(Check::new(
                        "certified_window_end",
                        Some(c.owner),
                        d,
                        Relation::Le,
                        c.end,
                    ));
                }
            }
            Mode::Delay => {
                for q in &views[c.owner].eligible {
                    checks.push(Check::new(
                        "release_after_ptime",
                        Some(c.owner),
                        ptime,
                        Relation::Lt,
                        windows[q].0,
                    ));
                }
            }
        }
    }

    let disjointness = level_disjointness(
        &m,
        &primary
            .iter()
            .chain(&certified)
            .copied()
            .collect::<Vec<_>>(),
    );
    for v in &disjointness {
        checks.push(Check::new(
            "level_disjoint",
            None,
            v.overlapping.len() as f64,
            Relation::Eq,
            0.0,
        ));
    }

    let rho_primary = match mode {
        Mode::Deadline => rho_deadline_primary(n),
        Mode::Delay => rho_delay_primary(n),
    };
    let rho_cert = rho_certified(n);
    let mut partitions = Vec::new();
    for (kind, cyls, rho) in [
        (CylinderKind::Primary, &primary, rho_primary),
        (CylinderKind::Certified, &certified, rho_cert),
    ] {
        let p = perforate_and_partition(&m, cyls, rho);
        checks.push(Check::new(
            "partition_class_count",
            None,
            p.class_count() as f64,
            Relation::Eq,
            (ceil_log2(rho) + 1) as f64,
        ));
        checks.push(Check::new(
            "partition_disjoint",
            None,
            p.overlapping.len() as f64,
            Relation::Eq,
            0.0,
        ));
        partitions.push(PartitionReport {
            kind,
            rho,
            class_count: p.class_count(),
            classes: p
                .classes
                .iter()
                .map(|cl| cl.iter().map(|c| c.owner).collect())
                .collect(),
            overlapping: p.overlapping,
        });
    }

    let mut charges = Vec::new();
    for v in views.iter().filter(|v| v.primary) {
        let role = primary_role(&m, trace, v.id, opt);
        if role == Some(PrimaryRole::Near) {
            charges.push(ServiceCharge {
                service: v.id,
                level: v.level,
                kind: CylinderKind::Primary,
                role,
                intersection: None,
                perforated_intersection: None,
                pdchg: None,
                cdchg: None,
            });
        }
    }
    let (opt_movement, opt_delay) = match opt {
        None => {
            for c in primary.iter().chain(&certified) {
                charges.push(ServiceCharge {
                    service: c.owner,
                    level: c.level,
                    kind: c.kind,
                    role: primary_role(&m, trace, c.owner, None),
                    intersection: None,
                    perforated_intersection: None,
                    pdchg: None,
                    cdchg: None,
                });
            }
            (None, None)
        }
        Some(o) => {
            let ctx = Ctx {
                m: &m,
                inst,
                trace,
                opt: o,
                n,
            };
            for c in &primary {
                charges.push(ctx.primary_charge(c, rho_primary, &mut checks));
            }
            for c in &certified {
                charges.push(ctx.certified_charge(c, rho_cert, &mut checks));
            }
            aggregate_checks(&charges, &partitions, o, &mut checks);
            (Some(o.movement_cost), Some(o.delay_cost))
        }
    };
    charges.sort_by_key(|c| (c.service, c.kind));

    Ok(ChargeReport {
        mode,
        n,
        opt_movement,
        opt_delay,
        classification: cls,
        cylinders: primary.into_iter().chain(certified).collect(),
        charges,
        disjointness,
        partitions,
        checks,
    })
}

fn request_windows(inst: &Instance) -> BTreeMap<u64, (f64, f64)> {
    match (inst.deadline_requests(), inst.delay_requests()) {
        (Ok(r), _) => r.iter().map(|q| (q.id, (q.release, q.deadline))).collect(),
        (_, Ok(r)) => r
            .iter()
            .map(|q| (q.id, (q.release, f64::INFINITY)))
            .collect(),
        _ => BTreeMap::new(),
    }
}

struct Ctx<'a> {
    m: &'a MetricSpace,
    inst: &'a Instance,
    trace: &'a RunTrace,
    opt: &'a OptTrace,
    n: usize,
}

impl Ctx<'_> {
    /// Measures `c` and its perforation, recording the perforation gap bound.
    fn measure(&self, c: &Cylinder, rho: f64, checks: &mut Vec<Check>) -> (f64, f64) {
        let int = c.intersection(self.m, self.opt);
        let perf = c.perforate(rho).intersection(self.m, self.opt);
        let n = self.n as f64;
        checks.push(Check::new(
            "perforation_gap",
            Some(c.owner),
            int - perf,
            Relation::Le,
            2.0 * c.shape.radius() * n * n / rho,
        ));
        (int, perf)
    }

    /// Unserved by the optimum before `t`: served at `t` or later.
    fn opt_pending_at(&self, id: u64, t: f64) -> bool {
        self.opt.service_time(id).is_none_or(|s| s >= t)
    }

    fn delay_fn(&self, id: u64) -> &DelayFunction {
        let reqs = self.inst.delay_requests().expect("delay mode");
        &reqs
            .iter()
            .find(|q| q.id == id)
            .expect("request in instance")
            .delay
    }

    fn primary_charge(&self, c: &Cylinder, rho: f64, checks: &mut Vec<Check>) -> ServiceCharge {
        let (int, perf) = self.measure(c, rho, checks);
        let l = c.level;
        let s = Some(c.owner);
        let mut pdchg = None;
        match self.trace {
            RunTrace::Deadline(_) => {
                checks.push(Check::new(
                    "far_primary_intersection",
                    s,
                    pow2(l - 6),
                    Relation::Le,
                    int,
                ));
                checks.push(Check::new(
                    "far_primary_perforated",
                    s,
                    pow2(l - 7),
                    Relation::Le,
                    perf,
                ));
            }
            RunTrace::Delay(t) => {
                let svc = &t.services[c.owner];
                let p: f64 = svc
                    .triggers
                    .iter()
                    .filter(|q| self.opt_pending_at(q.id, svc.time))
                    .map(|q| q.residual)
                    .sum();
                checks.push(Check::new(
                    "primary_charge",
                    s,
                    pow2(l - 8),
                    Relation::Le,
                    int + p,
                ));
                checks.push(Check::new(
                    "primary_perforated_charge",
                    s,
                    pow2(l - 9),
                    Relation::Le,
                    perf + p,
                ));
                pdchg = Some(p);
            }
        }
        ServiceCharge {
            service: c.owner,
            level: l,
            kind: CylinderKind::Primary,
            role: primary_role(self.m, self.trace, c.owner, Some(self.opt)),
            intersection: Some(int),
            perforated_intersection: Some(perf),
            pdchg,
            cdchg: None,
        }
    }

    fn certified_charge(&self, c: &Cylinder, rho: f64, checks: &mut Vec<Check>) -> ServiceCharge {
        let (int, perf) = self.measure(c, rho, checks);
        let l = c.level;
        let s = Some(c.owner);
        let mut cdchg = None;
        let bridge_points: BTreeSet<usize> = match self.trace {
            RunTrace::Deadline(t) => {
                checks.push(Check::new(
                    "certified_intersection",
                    s,
                    pow2(l - 1),
                    Relation::Le,
                    int,
                ));
                checks.push(Check::new(
                    "certified_perforated",
                    s,
                    pow2(l - 2),
                    Relation::Le,
                    perf,
                ));
                let svc = &t.services[c.owner];
                let points: BTreeMap<u64, usize> =
                    t.requests.iter().map(|o| (o.id, o.point)).collect();
                svc.served.iter().map(|q| points[q]).collect()
            }
            RunTrace::Delay(t) => {
                let svc = &t.services[c.owner];
                let before: BTreeMap<u64, f64> = svc.counters_before.iter().copied().collect();
                let x: f64 = svc
                    .eligible
                    .iter()
                    .filter(|&&q| self.opt_pending_at(q, svc.forwarding_time))
                    .map(|&q| {
                        let f = self.delay_fn(q);
                        (f.eval(svc.forwarding_time) - f.eval(svc.time).max(before[&q])).max(0.0)
                    })
                    .sum();
                checks.push(Check::new(
                    "certified_charge",
                    s,
                    pow2(l),
                    Relation::Le,
                    2.0 * int + x,
                ));
                checks.push(Check::new(
                    "certified_perforated_charge",
                    s,
                    pow2(l - 1),
                    Relation::Le,
                    2.0 * perf + x,
                ));
                cdchg = Some(x);
                let visited: BTreeSet<usize> = self
                    .opt
                    .events
                    .iter()
                    .filter(|e| e.time >= c.start_time() && e.time <= c.end)
                    .flat_map(|e| e.walk.iter().copied().chain([e.to]))
                    .collect();
                let points: BTreeMap<u64, usize> =
                    t.requests.iter().map(|o| (o.id, o.point)).collect();
                svc.eligible
                    .iter()
                    .map(|q| points[q])
                    .filter(|p| visited.contains(p))
                    .collect()
            }
        };
        let terms: Vec<usize> = bridge_points.into_iter().collect();
        if terms.len() <= EXACT_TERMINAL_CAP {
            if let Ok(st) = steiner_exact(&Host::graph(self.m), &terms) {
                checks.push(Check::new(
                    "certified_steiner_bridge",
                    s,
                    st.cost,
                    Relation::Le,
                    2.0 * int,
                ));
            }
        }
        ServiceCharge {
            service: c.owner,
            level: l,
            kind: CylinderKind::Certified,
            role: None,
            intersection: Some(int),
            perforated_intersection: Some(perf),
            pdchg: None,
            cdchg,
        }
    }
}

/// Disjoint cylinders charge disjoint pieces of the optimum: per level and
/// per perforated class the measured movement stays below the optimum's
/// movement and the delay charges below its delay.
fn aggregate_checks(
    charges: &[ServiceCharge],
    partitions: &[PartitionReport],
    opt: &OptTrace,
    checks: &mut Vec<Check>,
) {
    let lookup: BTreeMap<(CylinderKind, usize), &ServiceCharge> = charges
        .iter()
        .filter(|c| c.intersection.is_some())
        .map(|c| ((c.kind, c.service), c))
        .collect();
    let dchg = |c: &ServiceCharge| c.pdchg.or(c.cdchg).unwrap_or(0.0);
    let mut by_level: BTreeMap<(CylinderKind, i32), Vec<&ServiceCharge>> = BTreeMap::new();
    for c in lookup.values() {
        by_level.entry((c.kind, c.level)).or_default().push(c);
    }
    for group in by_level.values() {
        let moved: f64 = group.iter().filter_map(|c| c.intersection).sum();
        let delayed: f64 = group.iter().map(|c| dchg(c)).sum();
        checks.push(Check::new(
            "level_charge_sum",
            None,
            moved,
            Relation::Le,
            opt.movement_cost,
        ));
        checks.push(Check::new(
            "level_delay_charge_sum",
            None,
            delayed,
            Relation::Le,
            opt.delay_cost,
        ));
    }
    for p in partitions {
        for class in p.classes.iter().filter(|cl| !cl.is_empty()) {
            let members: Vec<&ServiceCharge> =
                class.iter().map(|o| lookup[&(p.kind, *o)]).collect();
            let moved: f64 = members
                .iter()
                .filter_map(|c| c.perforated_intersection)
                .sum();
            let delayed: f64 = members.iter().map(|c| dchg(c)).sum();
            checks.push(Check::new(
                "class_charge_sum",
                None,
                moved,
                Relation::Le,
                opt.movement_cost,
            ));
            checks.push(Check::new(
                "class_delay_charge_sum",
                None,
                delayed,
                Relation::Le,
                opt.delay_cost,
            ));
        }
    }
}
