//! Instance files in, traces and reports out.
//!
//! Every function here runs one instance sequentially. `report` fans out over
//! files with rayon and sorts rows by instance name.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{charge_report, classify, AnalysisError, ChargeReport, RunTrace};
use crate::deadline_engine::{audit_deadline, run_deadline, DeadlineError, DeadlineOptions};
use crate::delay_engine::{audit_delay, run_delay, DelayError, DelayOptions};
use crate::instance::{Instance, InstanceError, Mode};
use crate::offline_oracle::{opt, within_caps, OptTrace, OracleError};

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunConfig {
    pub request_regime: bool,
    /// Delay mode only: stop once the clock passes this time.
    pub horizon: Option<f64>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Load {
        path: PathBuf,
        source: InstanceError,
    },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Deadline(#[from] DeadlineError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("bad glob pattern: {0}")]
    Pattern(#[from] glob::PatternError),
    #[error("{path}: {message}")]
    Batch { path: PathBuf, message: String },
}

pub fn load_instance(path: &Path) -> Result<Instance, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Instance::from_json(&text).map_err(|source| PipelineError::Load {
        path: path.to_path_buf(),
        source,
    })
}

/// Validated copy of `inst` with tied deadlines pulled apart.
pub fn prepare(inst: &Instance) -> Result<Instance, PipelineError> {
    inst.validate()?;
    if inst.has_distinct_deadlines() {
        Ok(inst.clone())
    } else {
        Ok(inst.normalize_deadlines()?)
    }
}

/// Runs the engine for the instance's mode. A delay run cut off by the
/// horizon returns its partial trace.
pub fn run(inst: &Instance, cfg: RunConfig) -> Result<RunTrace, PipelineError> {
    let inst = prepare(inst)?;
    match inst.mode() {
        Mode::Deadline => Ok(RunTrace::Deadline(run_deadline(
            &inst,
            DeadlineOptions {
                request_regime: cfg.request_regime,
            },
        )?)),
        Mode::Delay => match run_delay(
            &inst,
            DelayOptions {
                request_regime: cfg.request_regime,
                horizon: cfg.horizon,
            },
        ) {
            Ok(t) => Ok(RunTrace::Delay(t)),
            Err(DelayError::HorizonExhausted(t)) => Ok(RunTrace::Delay(*t)),
            Err(e) => Err(e.into()),
        },
    }
}

/// A failed post-hoc audit of an engine trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub service: Option<usize>,
    pub request: Option<u64>,
    pub what: String,
}

pub fn audit(inst: &Instance, trace: &RunTrace) -> Result<Vec<Violation>, PipelineError> {
    let inst = prepare(inst)?;
    Ok(match trace {
        RunTrace::Deadline(t) => audit_deadline(&inst, t)?
            .into_iter()
            .map(|v| Violation {
                service: v.service,
                request: v.request,
                what: v.what,
            })
            .collect(),
        RunTrace::Delay(t) => audit_delay(&inst, t)?
            .into_iter()
            .map(|v| Violation {
                service: v.service,
                request: v.request,
                what: v.what,
            })
            .collect(),
    })
}

/// Outcome of `verify`: engine audit, optimum when within the oracle caps,
/// and the charge report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verification {
    pub mode: Mode,
    pub alg_cost: f64,
    pub opt_cost: Option<f64>,
    pub violations: Vec<Violation>,
    pub report: ChargeReport,
    /// No audit violation and no failed structural check.
    pub structural_pass: bool,
    /// No failed charge inequality. Vacuous without an optimum.
    pub charges_pass: bool,
}

pub fn verify(inst: &Instance, cfg: RunConfig) -> Result<Verification, PipelineError> {
    let inst = prepare(inst)?;
    let trace = run(&inst, cfg)?;
    let violations = audit(&inst, &trace)?;
    let o = if within_caps(&inst) {
        Some(opt(&inst)?)
    } else {
        None
    };
    let report = charge_report(&inst, &trace, o.as_ref())?;
    let structural_pass = violations.is_empty() && report.structural_failures().next().is_none();
    let charges_pass = report.failures().all(|c| c.is_structural());
    Ok(Verification {
        mode: inst.mode(),
        alg_cost: trace.total_cost(),
        opt_cost: o.map(|o| o.total_cost),
        violations,
        report,
        structural_pass,
        charges_pass,
    })
}

pub fn optimum(inst: &Instance) -> Result<OptTrace, PipelineError> {
    Ok(opt(&prepare(inst)?)?)
}

/// `alg / opt`, with `0 / 0 = 1` and `x / 0 = ∞` for positive `x`.
pub fn ratio(alg: f64, opt: f64) -> f64 {
    if opt > 0.0 {
        alg / opt
    } else if alg > 0.0 {
        f64::INFINITY
    } else {
        1.0
    }
}

/// One instance in a batch report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub instance: String,
    pub mode: Mode,
    pub n: usize,
    pub m: usize,
    pub alg_cost: f64,
    /// `None` when the instance exceeds the oracle caps.
    pub opt_cost: Option<f64>,
    /// Infinite ratios serialize as JSON `null`.
    pub ratio: Option<f64>,
    pub n_services: usize,
    pub n_primary: usize,
    pub n_certified: usize,
    pub max_level: Option<i32>,
    /// Services per level.
    pub level_histogram: BTreeMap<i32, usize>,
}

pub fn report_row(name: &str, inst: &Instance, cfg: RunConfig) -> Result<ReportRow, PipelineError> {
    let inst = prepare(inst)?;
    let trace = run(&inst, cfg)?;
    let opt_cost = if within_caps(&inst) {
        Some(opt(&inst)?.total_cost)
    } else {
        None
    };
    let mut level_histogram = BTreeMap::new();
    for v in trace.views() {
        *level_histogram.entry(v.level).or_insert(0) += 1;
    }
    Ok(ReportRow {
        instance: name.to_string(),
        mode: inst.mode(),
        n: inst.graph.node_count,
        m: inst.requests.len(),
        alg_cost: trace.total_cost(),
        opt_cost,
        ratio: opt_cost.map(|o| ratio(trace.total_cost(), o)),
        n_services: trace.service_count(),
        n_primary: trace.primary_count(),
        n_certified: classify(&trace).certified.len(),
        max_level: trace.max_level(),
        level_histogram,
    })
}

/// Rows for every file matching `pattern`, ordered by instance name.
pub fn report(pattern: &str, cfg: RunConfig) -> Result<Vec<ReportRow>, PipelineError> {
    let mut paths = Vec::new();
    for entry in glob::glob(pattern)? {
        paths.push(entry.map_err(|e| PipelineError::Io {
            path: e.path().to_path_buf(),
            source: std::io::Error::new(e.error().kind(), e.error().to_string()),
        })?);
    }
    let mut rows = paths
        .par_iter()
        .map(|p| {
            let name = p.file_stem().map_or_else(
                || p.display().to_string(),
                |s| s.to_string_lossy().into_owned(),
            );
            report_row(&name, &load_instance(p)?, cfg).map_err(|e| match e {
                e @ (PipelineError::Io { .. } | PipelineError::Load { .. }) => e,
                e => PipelineError::Batch {
                    path: p.clone(),
                    message: e.to_string(),
                },
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|a, b| a.instance.cmp(&b.instance));
    Ok(rows)
}

#[derive(Serialize)]
struct CsvRow<'a> {
    instance: &'a str,
    mode: Mode,
    n: usize,
    m: usize,
    alg_cost: f64,
    opt_cost: Option<f64>,
    ratio: Option<f64>,
    n_services: usize,
    n_primary: usize,
    n_certified: usize,
    max_level: Option<i32>,
}

/// Fixed-column CSV. Missing values are empty fields.
pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(CsvRow {
            instance: &r.instance,
            mode: r.mode,
            n: r.n,
            m: r.m,
            alg_cost: r.alg_cost,
            opt_cost: r.opt_cost,
            ratio: r.ratio,
            n_services: r.n_services,
            n_primary: r.n_primary,
            n_certified: r.n_certified,
            max_level: r.max_level,
        })
        .expect("in-memory csv write");
    }
    if rows.is_empty() {
        w.write_record([
            "instance",
            "mode",
            "n",
            "m",
            "alg_cost",
            "opt_cost",
            "ratio",
            "n_services",
            "n_primary",
            "n_certified",
            "max_level",
        ])
        .expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{DeadlineRequest, Requests};
    use crate::metric::WeightedGraph;

    fn lone() -> Instance {
        Instance {
            graph: WeightedGraph::new(3, vec![(0, 1, 1.0), (1, 2, 2.0)]),
            server_start: 0,
            requests: Requests::Deadline(vec![DeadlineRequest {
                id: 0,
                point: 2,
                release: 0.0,
                deadline: 10.0,
            }]),
        }
    }

    #[test]
    fn lone_request_verifies() {
        let v = verify(&lone(), RunConfig::default()).unwrap();
        assert!(v.structural_pass && v.charges_pass);
        assert_eq!((v.alg_cost, v.opt_cost), (9.0, Some(3.0)));
    }

    #[test]
    fn tied_deadlines_are_separated() {
        let mut inst = lone();
        inst.requests = Requests::Deadline(vec![
            DeadlineRequest {
                id: 0,
                point: 2,
                release: 0.0,
                deadline: 4.0,
            },
            DeadlineRequest {
                id: 1,
                point: 1,
                release: 0.0,
                deadline: 4.0,
            },
        ]);
        let t = run(&inst, RunConfig::default()).unwrap();
        assert_eq!(t.service_count(), 1);
        assert!(audit(&inst, &t).unwrap().is_empty());
    }

    #[test]
    fn ratio_conventions() {
        assert_eq!(ratio(6.0, 3.0), 2.0);
        assert_eq!(ratio(0.0, 0.0), 1.0);
        assert_eq!(ratio(1.0, 0.0), f64::INFINITY);
    }

    #[test]
    fn csv_header_and_empty_fields() {
        let row = ReportRow {
            instance: "a".into(),
            mode: Mode::Delay,
            n: 3,
            m: 0,
            alg_cost: 0.0,
            opt_cost: None,
            ratio: None,
            n_services: 0,
            n_primary: 0,
            n_certified: 0,
            max_level: None,
            level_histogram: BTreeMap::new(),
        };
        assert_eq!(
            to_csv(&[row]),
            "instance,mode,n,m,alg_cost,opt_cost,ratio,n_services,n_primary,n_certified,max_level\na,delay,3,0,0.0,,,0,0,0,\n"
        );
        assert!(to_csv(&[]).starts_with("instance,mode,n"));
    }
}
