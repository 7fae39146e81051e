//! Runtime test for extending a delayed HC job's LO-mode budget.
//!
//! When an HC task asks for `e` more ticks of LO budget, the LO-mode and
//! mode-change recurrences are re-solved for that task and every task below
//! it, charging each task at the largest LO budget it has been granted since
//! its last reset (`max_extended_budget`). Keeping only that maximum, rather
//! than one value per outstanding job, is what makes the test cheap enough to
//! run inside a scheduler.

use std::num::NonZeroU64;

use serde::Serialize;

use crate::model::{Task, TaskId, Taskset, Time};
use crate::rta::{self, Demand, Divergence, LcDemand, ResponseTimes};
use crate::Error;

/// Default bound on recurrence updates per decision.
pub const DEFAULT_ITERATION_CAP: u32 = 120;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RuntimeTaskState {
    pub id: TaskId,
    pub c_lo: Time,
    pub max_extended_budget: Time,
    /// Effective LO budget of the task's current job.
    pub c_extended: Time,
    /// Time of the most recent approved extension.
    pub last_extension_time: Option<Time>,
}

/// Per-task runtime state, aligned with the taskset's priority order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RuntimeStates {
    states: Vec<RuntimeTaskState>,
}

impl RuntimeStates {
    pub fn new(ts: &Taskset) -> Self {
        let states = ts
            .tasks()
            .iter()
            .map(|t| RuntimeTaskState {
                id: t.id,
                c_lo: t.c_lo,
                max_extended_budget: t.c_lo,
                c_extended: t.c_lo,
                last_extension_time: None,
            })
            .collect();
        RuntimeStates { states }
    }

    pub fn get(&self, id: TaskId) -> Option<&RuntimeTaskState> {
        self.states.iter().find(|s| s.id == id)
    }

    pub fn get_mut(&mut self, id: TaskId) -> Option<&mut RuntimeTaskState> {
        self.states.iter_mut().find(|s| s.id == id)
    }

    pub fn as_slice(&self) -> &[RuntimeTaskState] {
        &self.states
    }

    /// A new job starts with the task's original LO budget.
    pub fn start_job(&mut self, id: TaskId) {
        if let Some(s) = self.get_mut(id) {
            s.c_extended = s.c_lo;
        }
    }

    /// Records an approved decision. Denials leave the state untouched.
    pub fn apply(&mut self, decision: &ExtensionDecision) {
        if !decision.approved {
            return;
        }
        if let Some(s) = self.get_mut(decision.task) {
            s.max_extended_budget = s.max_extended_budget.max(decision.requested_budget);
            s.c_extended = decision.requested_budget;
            s.last_extension_time = Some(decision.requested_at);
        }
    }
}

/// A delayed HC job's request for `extra` more ticks of LO budget. Zero-delay
/// checkpoints issue no request, so `extra` is never zero.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExtensionRequest {
    pub task: TaskId,
    pub extra: NonZeroU64,
    pub requested_at: Time,
}

impl ExtensionRequest {
    pub fn new(task: TaskId, extra: Time, requested_at: Time) -> Option<Self> {
        Some(ExtensionRequest {
            task,
            extra: NonZeroU64::new(extra)?,
            requested_at,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExtendedResponse {
    pub id: TaskId,
    /// LO budget this task was charged at in the test.
    pub c_lo_tested: Time,
    pub r_lo_ext: Option<Time>,
    pub r_star_ext: Option<Time>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Denial {
    /// A recomputed response time exceeded this task's period.
    PeriodViolation { task: TaskId },
    /// The iteration budget ran out before a verdict.
    IterationCap,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExtensionDecision {
    pub task: TaskId,
    pub extra: Time,
    pub requested_at: Time,
    /// `C_k(LO) + e`.
    pub requested_budget: Time,
    /// The budget actually tested for the requesting task:
    /// `max(max_extended_budget, C_k(LO) + e)`.
    pub tested_budget: Time,
    pub approved: bool,
    pub iterations_used: u32,
    pub denial: Option<Denial>,
    pub responses: Vec<ExtendedResponse>,
}

fn offline_value(
    offline: &ResponseTimes,
    id: TaskId,
    pick: fn(&rta::TaskResponse) -> Option<Time>,
) -> Result<Time, Error> {
    offline.get(id).and_then(pick).ok_or_else(|| {
        Error::Config(format!(
            "no offline response time for {id}; taskset must be schedulable"
        ))
    })
}

/// Charges the iterations of one solve and records a denial if it failed.
fn settle(
    res: Result<rta::FixedPoint, Divergence>,
    remaining: &mut u32,
    decision: &mut ExtensionDecision,
    id: TaskId,
) -> Option<Time> {
    let used = match &res {
        Ok(fp) => fp.iterations,
        Err(d) => d.iterations(),
    };
    *remaining -= used;
    decision.iterations_used += used;
    match res {
        Ok(fp) => Some(fp.value),
        Err(Divergence::ExceededBound { .. }) => {
            decision.denial = Some(Denial::PeriodViolation { task: id });
            None
        }
        Err(Divergence::IterationCap { .. }) => {
            decision.denial = Some(Denial::IterationCap);
            None
        }
    }
}

/// Runs the extension test without touching any state.
pub fn evaluate_extension(
    ts: &Taskset,
    states: &RuntimeStates,
    offline: &ResponseTimes,
    request: &ExtensionRequest,
    iteration_cap: u32,
) -> Result<ExtensionDecision, Error> {
    let k = ts.index_of(request.task).ok_or(Error::UnknownTask(request.task))?;
    let task_k = &ts.tasks()[k];
    if !task_k.is_hc() {
        return Err(Error::NotHighCriticality(task_k.id));
    }
    let budget_of = |t: &Task| states.get(t.id).map_or(t.c_lo, |s| s.max_extended_budget);

    let e = request.extra.get();
    let requested_budget = task_k.c_lo + e;
    let tested_budget = budget_of(task_k).max(requested_budget);
    let e_eff = tested_budget - task_k.c_lo;
    let charge = |t: &Task| if t.id == task_k.id { tested_budget } else { budget_of(t) };

    let mut decision = ExtensionDecision {
        task: task_k.id,
        extra: e,
        requested_at: request.requested_at,
        requested_budget,
        tested_budget,
        approved: false,
        iterations_used: 0,
        denial: None,
        responses: Vec::new(),
    };

    let mut remaining = iteration_cap;

    for (i, task) in ts.tasks().iter().enumerate().skip(k) {
        let hp = &ts.tasks()[..i];
        let own = charge(task);
        let lo_demands: Vec<Demand> = hp
            .iter()
            .map(|t| Demand {
                period: t.period,
                cost: charge(t),
            })
            .collect();
        let init = offline_value(offline, task.id, |r| r.r_lo)? + e_eff;
        let solved = rta::solve_lo(own, &lo_demands, task.period, init, remaining);
        let Some(r_lo_ext) = settle(solved, &mut remaining, &mut decision, task.id) else {
            decision.responses.push(ExtendedResponse {
                id: task.id,
                c_lo_tested: own,
                r_lo_ext: None,
                r_star_ext: None,
            });
            return Ok(decision);
        };

        let mut r_star_ext = None;
        if task.is_hc() {
            let mut hc = Vec::new();
            let mut lc = Vec::new();
            for t in hp {
                if t.is_hc() {
                    hc.push(Demand {
                        period: t.period,
                        cost: t.c_hi,
                    });
                } else {
                    lc.push(LcDemand {
                        period: t.period,
                        c_lo: charge(t),
                        c_hi: t.c_hi,
                    });
                }
            }
            let init = offline_value(offline, task.id, |r| r.r_star)?;
            let solved = rta::solve_star(task.c_hi, &hc, &lc, r_lo_ext, task.period, Some(init), remaining);
            r_star_ext = settle(solved, &mut remaining, &mut decision, task.id);
            if r_star_ext.is_none() {
                decision.responses.push(ExtendedResponse {
                    id: task.id,
                    c_lo_tested: own,
                    r_lo_ext: Some(r_lo_ext),
                    r_star_ext: None,
                });
                return Ok(decision);
            }
        }
        decision.responses.push(ExtendedResponse {
            id: task.id,
            c_lo_tested: own,
            r_lo_ext: Some(r_lo_ext),
            r_star_ext,
        });
    }
    decision.approved = true;
    Ok(decision)
}

/// Runs the extension test and, on approval, records the new budget.
pub fn is_budget_change_approved(
    ts: &Taskset,
    states: &mut RuntimeStates,
    offline: &ResponseTimes,
    request: &ExtensionRequest,
    iteration_cap: u32,
) -> Result<ExtensionDecision, Error> {
    let decision = evaluate_extension(ts, states, offline, request, iteration_cap)?;
    states.apply(&decision);
    Ok(decision)
}

/// Resets `max_extended_budget` of every task that has not been granted an
/// extension within the last `t_max` ticks. Returns the tasks that were reset.
pub fn maybe_reset_max_extended(states: &mut RuntimeStates, now: Time, t_max: Time) -> Vec<TaskId> {
    let mut reset = Vec::new();
    for s in &mut states.states {
        let expired = s.last_extension_time.is_none_or(|t| t.saturating_add(t_max) <= now);
        if expired && s.max_extended_budget != s.c_lo {
            s.max_extended_budget = s.c_lo;
            reset.push(s.id);
        }
    }
    reset
}
