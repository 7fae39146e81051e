//! QoS metrics derived from a trace.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use super::trace::{EventKind, SimTrace};
use crate::model::{Criticality, TaskId, Time};

/// Summary of signed prediction errors, in percent of the actual work.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize)]
pub struct ErrorSummary {
    pub count: u64,
    pub mean: f64,
    pub mean_abs: f64,
    pub min: f64,
    pub max: f64,
}

impl ErrorSummary {
    fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return ErrorSummary::default();
        }
        let n = samples.len() as f64;
        ErrorSummary {
            count: samples.len() as u64,
            mean: samples.iter().sum::<f64>() / n,
            mean_abs: samples.iter().map(|x| x.abs()).sum::<f64>() / n,
            min: samples.iter().copied().fold(f64::INFINITY, f64::min),
            max: samples.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SimMetrics {
    pub horizon: Time,
    /// CPU time consumed by LC jobs divided by the horizon.
    pub lc_avg_utilization: f64,
    pub lc_jobs_completed: u64,
    pub lc_jobs_discarded: u64,
    pub hc_jobs_completed: u64,
    pub hi_mode_switches: u64,
    pub extensions_approved: u64,
    pub extensions_denied: u64,
    /// Denials caused by the iteration cap rather than a deadline violation.
    pub decisions_capped: u64,
    pub hc_deadline_misses: u64,
    pub lc_deadline_misses: u64,
    /// HC jobs that needed more than their HI budget.
    pub hc_hi_overruns: u64,
    pub prediction_error: ErrorSummary,
    /// Iterations used per online decision: iterations -> number of decisions.
    pub online_iterations: BTreeMap<u32, u64>,
    pub max_online_iterations: u32,
    pub worst_response: BTreeMap<TaskId, Time>,
}

pub fn compute_metrics(trace: &SimTrace, horizon: Time) -> SimMetrics {
    let mut m = SimMetrics {
        horizon,
        ..Default::default()
    };
    let mut lc_time: Time = 0;
    let mut predictions: HashMap<(TaskId, u64), Time> = HashMap::new();
    let mut errors = Vec::new();

    for e in &trace.events {
        let level = trace.level_of(e.task);
        let is_lc = level == Some(Criticality::Lo);
        match e.kind {
            EventKind::CheckpointReached { predicted: Some(p), .. } => {
                predictions.insert((e.task, e.job), p);
            }
            EventKind::JobComplete {
                release,
                executed,
                overhead,
            } => {
                let worst = m.worst_response.entry(e.task).or_default();
                *worst = (*worst).max(e.time - release);
                if is_lc {
                    lc_time += executed;
                    m.lc_jobs_completed += 1;
                } else {
                    m.hc_jobs_completed += 1;
                }
                if let Some(p) = predictions.remove(&(e.task, e.job)) {
                    let actual = executed.saturating_sub(overhead);
                    if actual > 0 {
                        errors.push(100.0 * (p as f64 - actual as f64) / actual as f64);
                    }
                }
            }
            EventKind::JobDiscarded { executed, .. } => {
                predictions.remove(&(e.task, e.job));
                if is_lc {
                    lc_time += executed;
                    m.lc_jobs_discarded += 1;
                }
            }
            EventKind::DeadlineMiss => {
                predictions.remove(&(e.task, e.job));
                if is_lc {
                    m.lc_deadline_misses += 1;
                } else {
                    m.hc_deadline_misses += 1;
                }
            }
            EventKind::BudgetExhausted {
                level: Criticality::Hi, ..
            } => m.hc_hi_overruns += 1,
            EventKind::ModeSwitchHi => m.hi_mode_switches += 1,
            EventKind::ExtensionApproved { iterations, .. } => {
                m.extensions_approved += 1;
                *m.online_iterations.entry(iterations).or_default() += 1;
            }
            EventKind::ExtensionDenied { iterations, capped, .. } => {
                m.extensions_denied += 1;
                m.decisions_capped += capped as u64;
                *m.online_iterations.entry(iterations).or_default() += 1;
            }
            _ => {}
        }
    }
    m.lc_avg_utilization = if horizon == 0 {
        0.0
    } else {
        lc_time as f64 / horizon as f64
    };
    m.max_online_iterations = m.online_iterations.keys().next_back().copied().unwrap_or(0);
    m.prediction_error = ErrorSummary::from_samples(&errors);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trace::{DiscardReason, SimEvent};

    fn ev(time: Time, task: u32, job: u64, kind: EventKind) -> SimEvent {
        SimEvent {
            time,
            task: TaskId(task),
            job,
            kind,
        }
    }

    #[test]
    fn empty_lc_time_gives_zero() {
        let trace = SimTrace {
            tasks: vec![(TaskId(1), Criticality::Hi)],
            events: vec![ev(0, 1, 0, EventKind::Release)],
        };
        assert_eq!(compute_metrics(&trace, 100).lc_avg_utilization, 0.0);
    }

    #[test]
    fn hand_tallied_trace() {
        let trace = SimTrace {
            tasks: vec![(TaskId(1), Criticality::Hi), (TaskId(2), Criticality::Lo)],
            events: vec![
                ev(0, 1, 0, EventKind::Release),
                ev(0, 2, 0, EventKind::Release),
                ev(
                    2,
                    1,
                    0,
                    EventKind::CheckpointReached {
                        consumed: 2,
                        predicted: Some(5),
                    },
                ),
                ev(
                    2,
                    1,
                    0,
                    EventKind::ExtensionDenied {
                        extra: 2,
                        iterations: 4,
                        capped: false,
                    },
                ),
                ev(
                    3,
                    1,
                    0,
                    EventKind::BudgetExhausted {
                        level: Criticality::Lo,
                        budget: 3,
                    },
                ),
                ev(3, 1, 0, EventKind::ModeSwitchHi),
                ev(
                    3,
                    2,
                    0,
                    EventKind::JobDiscarded {
                        executed: 0,
                        reason: DiscardReason::ModeSwitch,
                    },
                ),
                ev(
                    4,
                    1,
                    0,
                    EventKind::JobComplete {
                        release: 0,
                        executed: 4,
                        overhead: 0,
                    },
                ),
                ev(4, 1, 0, EventKind::ModeSwitchLo),
                ev(10, 2, 1, EventKind::Release),
            ],
        };
        let m = compute_metrics(&trace, 20);
        assert_eq!(m.hi_mode_switches, 1);
        assert_eq!(
            (m.extensions_approved, m.extensions_denied, m.decisions_capped),
            (0, 1, 0)
        );
        assert_eq!(
            (m.hc_jobs_completed, m.lc_jobs_completed, m.lc_jobs_discarded),
            (1, 0, 1)
        );
        assert_eq!(m.hc_deadline_misses, 0);
        assert_eq!(m.online_iterations, BTreeMap::from([(4, 1)]));
        assert_eq!(m.max_online_iterations, 4);
        assert_eq!(m.worst_response[&TaskId(1)], 4);
        // predicted 5 against 4 actual: +25%
        assert_eq!(m.prediction_error.count, 1);
        assert!((m.prediction_error.mean - 25.0).abs() < 1e-12);
        assert_eq!(m.lc_avg_utilization, 0.0);
    }
}
