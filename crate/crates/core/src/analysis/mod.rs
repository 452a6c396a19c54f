//! Executable charging analysis.
//!
//! Services are split into primary and certified ones. Each gets a cylinder,
//! a ball paired with a time interval, and the optimum's movement inside every
//! cylinder is measured against the per-service lower bounds. Cylinders of a
//! level are pairwise disjoint, and perforation spreads all levels over a
//! logarithmic number of disjoint classes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deadline_engine::DeadlineTrace;
use crate::delay_engine::{DelayTrace, RunStatus};
use crate::instance::{InstanceError, Mode};
use crate::level::Level;

mod cylinders;
mod report;

pub use cylinders::{
    build_certified_cylinders, build_primary_cylinders, cylinders_disjoint, level_disjointness,
    perforate_and_partition, primary_role, rho_certified, rho_deadline_primary, rho_delay_primary,
    spatially_disjoint, Cylinder, CylinderKind, LevelVerdict, Partition, PrimaryRole,
};
pub use report::{
    charge_report, ChargeReport, Check, PartitionReport, Relation, ServiceCharge, CHECK_TOL,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("{what} is a {found} trace but the instance is in {expected} mode")]
    ModeMismatch {
        what: &'static str,
        expected: Mode,
        found: Mode,
    },
    #[error("the delay trace stopped at its horizon with requests pending")]
    Incomplete,
}

/// A finished engine run of either mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum RunTrace {
    Deadline(DeadlineTrace),
    Delay(DelayTrace),
}

impl RunTrace {
    pub fn mode(&self) -> Mode {
        match self {
            RunTrace::Deadline(_) => Mode::Deadline,
            RunTrace::Delay(_) => Mode::Delay,
        }
    }

    pub fn total_cost(&self) -> f64 {
        match self {
            RunTrace::Deadline(t) => t.total_cost,
            RunTrace::Delay(t) => t.total_cost,
        }
    }

    pub fn service_count(&self) -> usize {
        match self {
            RunTrace::Deadline(t) => t.services.len(),
            RunTrace::Delay(t) => t.services.len(),
        }
    }

    pub fn primary_count(&self) -> usize {
        self.views().iter().filter(|v| v.primary).count()
    }

    pub fn max_level(&self) -> Option<i32> {
        self.views().iter().map(|v| v.level).max()
    }

    pub fn is_complete(&self) -> bool {
        match self {
            RunTrace::Deadline(_) => true,
            RunTrace::Delay(t) => t.status == RunStatus::Complete,
        }
    }

    pub(crate) fn views(&self) -> Vec<ServiceView> {
        match self {
            RunTrace::Deadline(t) => t
                .services
                .iter()
                .map(|s| ServiceView {
                    id: s.id,
                    time: s.time,
                    level: s.level,
                    start: s.start,
                    primary: s.primary,
                    forwarding_time: s.forwarding_time,
                    upgraded: s.upgraded.clone(),
                    eligible: s.eligible.clone(),
                    served: s.served.clone(),
                    qualifying: (!s.primary).then_some((s.trigger, s.trigger_level)),
                })
                .collect(),
            RunTrace::Delay(t) => t
                .services
                .iter()
                .map(|s| ServiceView {
                    id: s.id,
                    time: s.time,
                    level: s.level,
                    start: s.start,
                    primary: s.primary,
                    forwarding_time: s.forwarding_time,
                    upgraded: s.upgraded.clone(),
                    eligible: s.eligible.clone(),
                    served: s.served.clone(),
                    qualifying: if s.primary {
                        None
                    } else {
                        s.triggers
                            .iter()
                            .filter(|q| q.level >= Level::At(s.level - 4))
                            .min_by_key(|q| q.id)
                            .map(|q| (q.id, q.level))
                    },
                })
                .collect(),
        }
    }
}

/// Mode-independent view of one service.
#[derive(Debug, Clone)]
pub(crate) struct ServiceView {
    pub id: usize,
    pub time: f64,
    pub level: i32,
    pub start: usize,
    pub primary: bool,
    pub forwarding_time: f64,
    pub upgraded: Vec<u64>,
    pub eligible: Vec<u64>,
    pub served: Vec<u64>,
    /// Trigger whose witness a non-primary service certifies, with its level.
    pub qualifying: Option<(u64, Level)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub primary: Vec<usize>,
    pub certified: Vec<usize>,
    /// Request id to the last service that raised its level.
    pub witness: BTreeMap<u64, usize>,
    /// Non-primary service to the service it certifies.
    pub certifier: BTreeMap<usize, usize>,
    /// Certified service to every service certifying it.
    pub certifiers_of: BTreeMap<usize, Vec<usize>>,
    /// Non-primary services whose qualifying trigger has no witness.
    pub orphans: Vec<usize>,
}

/// Replays level assignments in service order.
pub fn classify(trace: &RunTrace) -> Classification {
    let mut c = Classification::default();
    for v in trace.views() {
        if v.primary {
            c.primary.push(v.id);
        } else if let Some((q, _)) = v.qualifying {
            match c.witness.get(&q) {
                Some(&w) => {
                    c.certifier.insert(v.id, w);
                    c.certifiers_of.entry(w).or_default().push(v.id);
                }
                None => c.orphans.push(v.id),
            }
        }
        for q in &v.upgraded {
            c.witness.insert(*q, v.id);
        }
    }
    c.certified = c.certifiers_of.keys().copied().collect();
    c
}

#[cfg(test)]
mod tests;
