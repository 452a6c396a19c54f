//! Requests, instances and their JSON form.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metric::{GraphError, MetricSpace, WeightedGraph};
use crate::tolerance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Deadline,
    Delay,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Deadline => "deadline",
            Mode::Delay => "delay",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeadlineRequest {
    pub id: u64,
    pub point: usize,
    pub release: f64,
    pub deadline: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelayError {
    #[error("delay function has no breakpoints")]
    NoBreakpoints,
    #[error("first breakpoint must be (release, 0), got ({0}, {1})")]
    BadOrigin(f64, f64),
    #[error("breakpoint times must increase strictly (at index {0})")]
    TimesNotIncreasing(usize),
    #[error("breakpoint values must not decrease (at index {0})")]
    ValuesDecreasing(usize),
    #[error("final slope must be positive and finite, got {0}")]
    BadFinalSlope(f64),
    #[error("non-finite breakpoint at index {0}")]
    NonFinite(usize),
}

/// Continuous nondecreasing piecewise-linear delay, zero at release and
/// growing with a positive slope after the last breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayFunction {
    pub breakpoints: Vec<(f64, f64)>,
    pub final_slope: f64,
}

impl DelayFunction {
    /// Linear delay `slope · (t − release)`.
    pub fn linear(release: f64, slope: f64) -> Self {
        Self {
            breakpoints: vec![(release, 0.0)],
            final_slope: slope,
        }
    }

    pub fn validate(&self, release: f64) -> Result<(), DelayError> {
        let first = *self.breakpoints.first().ok_or(DelayError::NoBreakpoints)?;
        for (i, &(t, y)) in self.breakpoints.iter().enumerate() {
            if !t.is_finite() || !y.is_finite() {
                return Err(DelayError::NonFinite(i));
            }
        }
        if first.0 != release || first.1 != 0.0 {
            return Err(DelayError::BadOrigin(first.0, first.1));
        }
        for (i, w) in self.breakpoints.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(DelayError::TimesNotIncreasing(i + 1));
            }
            if w[1].1 < w[0].1 {
                return Err(DelayError::ValuesDecreasing(i + 1));
            }
        }
        if !(self.final_slope.is_finite() && self.final_slope > 0.0) {
            return Err(DelayError::BadFinalSlope(self.final_slope));
        }
        Ok(())
    }

    pub fn release(&self) -> f64 {
        self.breakpoints[0].0
    }

    /// Value at time `t` (zero before release).
    pub fn eval(&self, t: f64) -> f64 {
        let bp = &self.breakpoints;
        if t <= bp[0].0 {
            return 0.0;
        }
        let last = bp[bp.len() - 1];
        if t >= last.0 {
            return last.1 + self.final_slope * (t - last.0);
        }
        let i = bp.partition_point(|&(bt, _)| bt <= t) - 1;
        let (t0, y0) = bp[i];
        let (t1, y1) = bp[i + 1];
        y0 + (y1 - y0) * (t - t0) / (t1 - t0)
    }

    /// Slope of the piece starting at `t` (right derivative).
    pub fn slope_after(&self, t: f64) -> f64 {
        let bp = &self.breakpoints;
        let last = bp[bp.len() - 1];
        if t >= last.0 {
            return self.final_slope;
        }
        if t < bp[0].0 {
            return 0.0;
        }
        let i = bp.partition_point(|&(bt, _)| bt <= t) - 1;
        (bp[i + 1].1 - bp[i].1) / (bp[i + 1].0 - bp[i].0)
    }

    /// First time at which the value reaches `c`.
    pub fn inverse(&self, c: f64) -> f64 {
        let bp = &self.breakpoints;
        if c <= 0.0 {
            return bp[0].0;
        }
        for w in bp.windows(2) {
            let ((t0, y0), (t1, y1)) = (w[0], w[1]);
            if y1 >= c {
                if y1 == y0 {
                    return t0;
                }
                return (t0 + (c - y0) / (y1 - y0) * (t1 - t0)).clamp(t0, t1);
            }
        }
        let (tl, yl) = bp[bp.len() - 1];
        tl + (c - yl) / self.final_slope
    }

    /// Breakpoint times strictly inside `(from, to)`.
    pub fn breakpoints_between(&self, from: f64, to: f64) -> impl Iterator<Item = f64> + '_ {
        self.breakpoints
            .iter()
            .map(|b| b.0)
            .filter(move |&t| t > from && t < to)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayRequest {
    pub id: u64,
    pub point: usize,
    pub release: f64,
    pub delay: DelayFunction,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Requests {
    Deadline(Vec<DeadlineRequest>),
    Delay(Vec<DelayRequest>),
}

impl Requests {
    pub fn len(&self) -> usize {
        match self {
            Requests::Deadline(r) => r.len(),
            Requests::Delay(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub graph: WeightedGraph,
    pub server_start: usize,
    pub requests: Requests,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InstanceError {
    #[error("malformed instance document: {0}")]
    Schema(String),
    #[error("invalid graph: {0}")]
    Graph(#[from] GraphError),
    #[error("server start {0} is not a node")]
    StartOutOfRange(usize),
    #[error("request {id}: point {point} is not a node")]
    PointOutOfRange { id: u64, point: usize },
    #[error("duplicate request id {0}")]
    DuplicateId(u64),
    #[error("request {id}: non-finite time")]
    NonFiniteTime { id: u64 },
    #[error("request {id}: deadline {deadline} precedes release {release}")]
    DeadlineBeforeRelease {
        id: u64,
        release: f64,
        deadline: f64,
    },
    #[error("request {0}: deadline mode requires a deadline")]
    MissingDeadline(u64),
    #[error("request {0}: delay mode requires a delay function")]
    MissingDelay(u64),
    #[error("request {0}: deadline given in delay mode")]
    UnexpectedDeadline(u64),
    #[error("request {0}: delay function given in deadline mode")]
    UnexpectedDelay(u64),
    #[error("request {id}: {source}")]
    Delay { id: u64, source: DelayError },
    #[error("operation requires {expected} mode")]
    WrongMode { expected: Mode },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphDoc {
    nodes: usize,
    edges: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestDoc {
    id: u64,
    point: usize,
    release: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    deadline: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    delay: Option<DelayFunction>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    graph: GraphDoc,
    server_start: usize,
    mode: Mode,
    requests: Vec<RequestDoc>,
}

impl Instance {
    pub fn mode(&self) -> Mode {
        match self.requests {
            Requests::Deadline(_) => Mode::Deadline,
            Requests::Delay(_) => Mode::Delay,
        }
    }

    pub fn deadline_requests(&self) -> Result<&[DeadlineRequest], InstanceError> {
        match &self.requests {
            Requests::Deadline(r) => Ok(r),
            Requests::Delay(_) => Err(InstanceError::WrongMode {
                expected: Mode::Deadline,
            }),
        }
    }

    pub fn delay_requests(&self) -> Result<&[DelayRequest], InstanceError> {
        match &self.requests {
            Requests::Delay(r) => Ok(r),
            Requests::Deadline(_) => Err(InstanceError::WrongMode {
                expected: Mode::Delay,
            }),
        }
    }

    pub fn metric(&self) -> Result<MetricSpace, InstanceError> {
        Ok(MetricSpace::build(self.graph.clone())?)
    }

    /// Full validation: graph, points, ids, windows and delay functions.
    pub fn validate(&self) -> Result<(), InstanceError> {
        self.graph.validate()?;
        let n = self.graph.node_count;
        if self.server_start >= n {
            return Err(InstanceError::StartOutOfRange(self.server_start));
        }
        let mut ids = BTreeSet::new();
        let mut check_common = |id: u64, point: usize, release: f64| {
            if !ids.insert(id) {
                return Err(InstanceError::DuplicateId(id));
            }
            if point >= n {
                return Err(InstanceError::PointOutOfRange { id, point });
            }
            if !release.is_finite() {
                return Err(InstanceError::NonFiniteTime { id });
            }
            Ok(())
        };
        match &self.requests {
            Requests::Deadline(rs) => {
                for r in rs {
                    check_common(r.id, r.point, r.release)?;
                    if !r.deadline.is_finite() {
                        return Err(InstanceError::NonFiniteTime { id: r.id });
                    }
                    if r.deadline < r.release {
                        return Err(InstanceError::DeadlineBeforeRelease {
                            id: r.id,
                            release: r.release,
                            deadline: r.deadline,
                        });
                    }
                }
            }
            Requests::Delay(rs) => {
                for r in rs {
                    check_common(r.id, r.point, r.release)?;
                    r.delay
                        .validate(r.release)
                        .map_err(|source| InstanceError::Delay { id: r.id, source })?;
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let doc: InstanceDoc =
            serde_json::from_str(text).map_err(|e| InstanceError::Schema(e.to_string()))?;
        let graph = WeightedGraph::new(doc.graph.nodes, doc.graph.edges);
        let requests = match doc.mode {
            Mode::Deadline => Requests::Deadline(
                doc.requests
                    .into_iter()
                    .map(|r| {
                        if r.delay.is_some() {
                            return Err(InstanceError::UnexpectedDelay(r.id));
                        }
                        let deadline = r.deadline.ok_or(InstanceError::MissingDeadline(r.id))?;
                        Ok(DeadlineRequest {
                            id: r.id,
                            point: r.point,
                            release: r.release,
                            deadline,
                        })
                    })
                    .collect::<Result<_, _>>()?,
            ),
            Mode::Delay => Requests::Delay(
                doc.requests
                    .into_iter()
                    .map(|r| {
                        if r.deadline.is_some() {
                            return Err(InstanceError::UnexpectedDeadline(r.id));
                        }
                        let delay = r.delay.ok_or(InstanceError::MissingDelay(r.id))?;
                        Ok(DelayRequest {
                            id: r.id,
                            point: r.point,
                            release: r.release,
                            delay,
                        })
                    })
                    .collect::<Result<_, _>>()?,
            ),
        };
        let inst = Instance {
            graph,
            server_start: doc.server_start,
            requests,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        let requests = match &self.requests {
            Requests::Deadline(rs) => rs
                .iter()
                .map(|r| RequestDoc {
                    id: r.id,
                    point: r.point,
                    release: r.release,
                    deadline: Some(r.deadline),
                    delay: None,
                })
                .collect(),
            Requests::Delay(rs) => rs
                .iter()
                .map(|r| RequestDoc {
                    id: r.id,
                    point: r.point,
                    release: r.release,
                    deadline: None,
                    delay: Some(r.delay.clone()),
                })
                .collect(),
        };
        let doc = InstanceDoc {
            graph: GraphDoc {
                nodes: self.graph.node_count,
                edges: self.graph.edges.clone(),
            },
            server_start: self.server_start,
            mode: self.mode(),
            requests,
        };
        let mut text = serde_json::to_string_pretty(&doc).expect("instance serializes");
        text.push('\n');
        text
    }

    /// Makes deadlines pairwise distinct without shrinking any window: within
    /// a tie the lower id keeps the earlier deadline and later ones move up by
    /// less than `eps / |Q|` each.
    pub fn normalize_deadlines(&self) -> Result<Instance, InstanceError> {
        let reqs = self.deadline_requests()?;
        let q = reqs.len().max(1) as f64;
        let unit = tolerance::eps() / (q * q);
        let mut order: Vec<usize> = (0..reqs.len()).collect();
        order.sort_by(|&a, &b| {
            reqs[a]
                .deadline
                .total_cmp(&reqs[b].deadline)
                .then(reqs[a].id.cmp(&reqs[b].id))
        });
        let mut out = reqs.to_vec();
        let mut prev = f64::NEG_INFINITY;
        for (rank, &i) in order.iter().enumerate() {
            let d = reqs[i].deadline;
            let assigned = if d <= prev {
                (d + rank as f64 * unit).max(prev.next_up())
            } else {
                d
            };
            out[i].deadline = assigned;
            prev = assigned;
        }
        Ok(Instance {
            graph: self.graph.clone(),
            server_start: self.server_start,
            requests: Requests::Deadline(out),
        })
    }

    /// Whether all deadlines are pairwise distinct.
    pub fn has_distinct_deadlines(&self) -> bool {
        match &self.requests {
            Requests::Deadline(rs) => {
                let mut ds: Vec<f64> = rs.iter().map(|r| r.deadline).collect();
                ds.sort_by(f64::total_cmp);
                ds.windows(2).all(|w| w[0] < w[1])
            }
            Requests::Delay(_) => true,
        }
    }
}
