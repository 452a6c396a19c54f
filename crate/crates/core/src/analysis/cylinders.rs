use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Classification, RunTrace};
use crate::instance::{Instance, InstanceError, Mode};
use crate::metric::{shape_edge_measure, shapes_overlap, EdgeSubgraph, MetricSpace, Shape};
use crate::offline_oracle::OptTrace;
use crate::tolerance::{self, ceil_log2, pow2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CylinderKind {
    Primary,
    Certified,
}

/// A shape paired with a closed time interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub owner: usize,
    pub kind: CylinderKind,
    pub mode: Mode,
    pub level: i32,
    pub shape: Shape,
    /// `None` is an open start at minus infinity.
    pub start: Option<f64>,
    pub end: f64,
}

impl Cylinder {
    pub fn start_time(&self) -> f64 {
        self.start.unwrap_or(f64::NEG_INFINITY)
    }

    /// Intervals sharing at most an endpoint count as disjoint.
    pub fn time_disjoint(&self, other: &Cylinder) -> bool {
        self.end <= other.start_time() || other.end <= self.start_time()
    }

    pub fn perforate(&self, rho: f64) -> Cylinder {
        Cylinder {
            shape: self.shape.perforate(rho),
            ..*self
        }
    }

    pub fn opt_edges(&self, m: &MetricSpace, opt: &OptTrace) -> EdgeSubgraph {
        opt.edges_during(m, self.start_time(), self.end)
    }

    /// Weight of the optimum's movement inside the cylinder.
    pub fn intersection(&self, m: &MetricSpace, opt: &OptTrace) -> f64 {
        shape_edge_measure(m, &self.opt_edges(m, opt), &self.shape)
    }
}

/// Perforation parameter for far-primary deadline cylinders: `2⁶·n²`.
pub fn rho_deadline_primary(n: usize) -> f64 {
    64.0 * (n * n) as f64
}

/// Perforation parameter for certified cylinders in both modes: `24·n²`.
pub fn rho_certified(n: usize) -> f64 {
    24.0 * (n * n) as f64
}

/// Perforation parameter for delay primary cylinders: `2⁹·n²`.
pub fn rho_delay_primary(n: usize) -> f64 {
    512.0 * (n * n) as f64
}

/// How a primary service relates to the optimum's position at its service time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimaryRole {
    /// Deadline: `dist(a*, q_σ) ≥ 2^{ℓ−6}`. Delay: moved to `a'` with `dist(a*, a') ≥ 2^{ℓ−7}`.
    Far,
    /// Delay only: the server did not move.
    Stationary,
    /// Neither; charged through the potential instead of a cylinder.
    Near,
    /// No optimum supplied.
    Unclassified,
}

/// Role of primary service `sid`, or `None` for a non-primary one.
pub fn primary_role(
    m: &MetricSpace,
    trace: &RunTrace,
    sid: usize,
    opt: Option<&OptTrace>,
) -> Option<PrimaryRole> {
    match trace {
        RunTrace::Deadline(t) => {
            let s = &t.services[sid];
            if !s.primary {
                return None;
            }
            Some(match opt {
                None => PrimaryRole::Unclassified,
                Some(o) => {
                    if tolerance::ge(
                        m.dist(o.position_at(s.time), s.trigger_point),
                        pow2(s.level - 6),
                    ) {
                        PrimaryRole::Far
                    } else {
                        PrimaryRole::Near
                    }
                }
            })
        }
        RunTrace::Delay(t) => {
            let s = &t.services[sid];
            if !s.primary {
                return None;
            }
            Some(match (s.relocation, opt) {
                (None, _) => PrimaryRole::Stationary,
                (Some(_), None) => PrimaryRole::Unclassified,
                (Some(b), Some(o)) => {
                    if tolerance::ge(m.dist(o.position_at(s.time), b), pow2(s.level - 7)) {
                        PrimaryRole::Far
                    } else {
                        PrimaryRole::Near
                    }
                }
            })
        }
    }
}

/// Primary cylinders `(Ball(a_σ, 2^{ℓ−2}), I)`. Deadline: `I = [r(q_σ), d(q_σ)]`.
/// Delay: `I = [min release of the triggers, λ(σ)]`. Near services are skipped.
pub fn build_primary_cylinders(
    inst: &Instance,
    m: &MetricSpace,
    trace: &RunTrace,
    opt: Option<&OptTrace>,
) -> Result<Vec<Cylinder>, InstanceError> {
    if inst.mode() != trace.mode() {
        return Err(InstanceError::WrongMode {
            expected: trace.mode(),
        });
    }
    let releases = release_map(inst);
    let mut out = Vec::new();
    let services = trace.views();
    for v in services.iter().filter(|v| v.primary) {
        if primary_role(m, trace, v.id, opt) == Some(PrimaryRole::Near) {
            continue;
        }
        let start = match trace {
            RunTrace::Deadline(t) => releases[&t.services[v.id].trigger],
            RunTrace::Delay(t) => t.services[v.id]
                .triggers
                .iter()
                .map(|q| releases[&q.id])
                .fold(f64::INFINITY, f64::min),
        };
        out.push(Cylinder {
            owner: v.id,
            kind: CylinderKind::Primary,
            mode: trace.mode(),
            level: v.level,
            shape: Shape::Ball {
                center: v.start,
                radius: pow2(v.level - 2),
            },
            start: Some(start),
            end: v.time,
        });
    }
    Ok(out)
}

/// Certified cylinders `(Ball(a_σ, 3·2^ℓ), [ptime(σ), μ(σ)])`.
pub fn build_certified_cylinders(
    m: &MetricSpace,
    trace: &RunTrace,
    cls: &Classification,
) -> Vec<Cylinder> {
    let views = trace.views();
    cls.certified
        .iter()
        .map(|&c| {
            let v = &views[c];
            let ptime = cls
                .certified
                .iter()
                .filter(|&&o| o != c)
                .map(|&o| &views[o])
                .filter(|o| {
                    o.level == v.level
                        && tolerance::le(o.forwarding_time, v.time)
                        && tolerance::le(m.dist(o.start, v.start), 6.0 * pow2(v.level))
                })
                .map(|o| o.forwarding_time)
                .reduce(f64::max);
            Cylinder {
                owner: c,
                kind: CylinderKind::Certified,
                mode: trace.mode(),
                level: v.level,
                shape: Shape::Ball {
                    center: v.start,
                    radius: 3.0 * pow2(v.level),
                },
                start: ptime,
                end: v.forwarding_time,
            }
        })
        .collect()
}

fn release_map(inst: &Instance) -> BTreeMap<u64, f64> {
    match (inst.deadline_requests(), inst.delay_requests()) {
        (Ok(r), _) => r.iter().map(|q| (q.id, q.release)).collect(),
        (_, Ok(r)) => r.iter().map(|q| (q.id, q.release)).collect(),
        _ => BTreeMap::new(),
    }
}

/// Spatial disjointness. Balls are disjoint when no graph edge part belongs
/// to both. A perforated ball is also disjoint from any ball of radius at
/// most its hole radius, which then sits inside a removed hole.
pub fn spatially_disjoint(m: &MetricSpace, a: &Shape, b: &Shape) -> bool {
    let (small, big) = if a.radius() <= b.radius() {
        (a, b)
    } else {
        (b, a)
    };
    if let Shape::PerforatedBall { radius, rho, .. } = *big {
        if tolerance::le(small.radius(), radius / rho) {
            return true;
        }
    }
    shapes_overlap(m, a, b) <= tolerance::scaled(big.radius())
}

pub fn cylinders_disjoint(m: &MetricSpace, a: &Cylinder, b: &Cylinder) -> bool {
    a.time_disjoint(b) || spatially_disjoint(m, &a.shape, &b.shape)
}

/// Pairwise disjointness of the cylinders of one kind and level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelVerdict {
    pub kind: CylinderKind,
    pub level: i32,
    pub cylinders: usize,
    /// Owner pairs whose cylinders intersect.
    pub overlapping: Vec<(usize, usize)>,
}

pub fn level_disjointness(m: &MetricSpace, cyls: &[Cylinder]) -> Vec<LevelVerdict> {
    let mut groups: BTreeMap<(CylinderKind, i32), Vec<&Cylinder>> = BTreeMap::new();
    for c in cyls {
        groups.entry((c.kind, c.level)).or_default().push(c);
    }
    groups
        .into_iter()
        .map(|((kind, level), group)| LevelVerdict {
            kind,
            level,
            cylinders: group.len(),
            overlapping: overlapping_pairs(m, &group),
        })
        .collect()
}

fn overlapping_pairs(m: &MetricSpace, group: &[&Cylinder]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, a) in group.iter().enumerate() {
        for b in &group[i + 1..] {
            if !cylinders_disjoint(m, a, b) {
                out.push((a.owner, b.owner));
            }
        }
    }
    out
}

/// Perforated cylinders spread over `⌈log₂ ρ⌉ + 1` classes by radius scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub rho: f64,
    pub classes: Vec<Vec<Cylinder>>,
    pub overlapping: Vec<(usize, usize)>,
}

impl Partition {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }
}

/// Perforates every cylinder with `rho` and assigns it to class
/// `⌈log₂ radius⌉ mod Δ`, `Δ = ⌈log₂ ρ⌉ + 1`; then checks each class pairwise.
pub fn perforate_and_partition(m: &MetricSpace, cyls: &[Cylinder], rho: f64) -> Partition {
    assert!(rho >= 2.0, "rho must be at least 2");
    let delta = ceil_log2(rho) + 1;
    let mut classes = vec![Vec::new(); delta as usize];
    for c in cyls {
        let k = ceil_log2(c.shape.radius()).rem_euclid(delta) as usize;
        classes[k].push(c.perforate(rho));
    }
    let overlapping = classes
        .iter()
        .flat_map(|class| overlapping_pairs(m, &class.iter().collect::<Vec<_>>()))
        .collect();
    Partition {
        rho,
        classes,
        overlapping,
    }
}
