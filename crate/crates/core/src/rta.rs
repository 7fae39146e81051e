//! Offline AMC-rtb response-time analysis.
//!
//! Three recurrences are solved per task, each by fixed-point iteration:
//!
//! - LO-mode: `R = C(LO) + sum_{hp} ceil(R/T_j) C_j(LO)`
//! - steady HI-mode (HC only): `R = C(HI) + sum_{hpHC} ceil(R/T_j) C_j(HI)`
//! - mode change (HC only, the rtb bound): `R* = C(HI) + sum_{hpHC}
//!   ceil(R*/T_j) C_j(HI) + sum_{hpLC} ceil(R(LO)/T_j) C_j(LO)`
//!
//! Interference sets hold tasks of strictly higher priority; the task's own
//! cost is the leading term.
//!
//! LC tasks with a non-zero (imprecise) HI budget additionally contribute
//! `C_j(HI)` for every release after the LO window, in both HI recurrences.
//! With the default `C_j(HI) = 0` those terms vanish.

use serde::Serialize;

use crate::model::{Task, TaskId, Taskset, Time};
use crate::Error;

/// Hard cap on iterations of a single offline recurrence.
pub const DEFAULT_ITERATION_CAP: u32 = 10_000;

/// A converged recurrence: the least fixed point at or above the initial value
/// and the number of updates it took.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FixedPoint {
    pub value: Time,
    pub iterations: u32,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum Divergence {
    #[error("response time reached {value}, above the bound, after {iterations} iterations")]
    ExceededBound { value: Time, iterations: u32 },
    #[error("no fixed point within {iterations} iterations")]
    IterationCap { iterations: u32 },
}

impl Divergence {
    pub fn iterations(&self) -> u32 {
        match *self {
            Divergence::ExceededBound { iterations, .. } | Divergence::IterationCap { iterations } => iterations,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RtaError {
    #[error(transparent)]
    Diverged(#[from] Divergence),
    #[error("task {0} is not high-criticality")]
    NotHighCriticality(TaskId),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
}

/// Iterates `R <- lead + interference(R)` starting from `init`.
///
/// One iteration is one evaluation of the right-hand side; the evaluation that
/// confirms stability counts. Fails as soon as an iterate exceeds `bound`, or
/// after `cap` evaluations without convergence.
pub fn fixed_point(
    lead: Time,
    interference: impl Fn(Time) -> Time,
    bound: Time,
    init: Time,
    cap: u32,
) -> Result<FixedPoint, Divergence> {
    let mut r = init;
    for iterations in 1..=cap {
        let next = lead.saturating_add(interference(r));
        if next > bound {
            return Err(Divergence::ExceededBound {
                value: next,
                iterations,
            });
        }
        if next == r {
            return Ok(FixedPoint { value: r, iterations });
        }
        r = next;
    }
    Err(Divergence::IterationCap { iterations: cap })
}

/// A periodic interferer: releases every `period`, each release costing `cost`.
#[derive(Copy, Clone, Debug)]
pub(crate) struct Demand {
    pub period: Time,
    pub cost: Time,
}

/// An LC interferer during a mode change.
#[derive(Copy, Clone, Debug)]
pub(crate) struct LcDemand {
    pub period: Time,
    pub c_lo: Time,
    pub c_hi: Time,
}

#[inline]
fn releases(window: Time, period: Time) -> Time {
    window.div_ceil(period)
}

fn request_bound(window: Time, hp: &[Demand]) -> Time {
    hp.iter()
        .map(|d| releases(window, d.period).saturating_mul(d.cost))
        .fold(0, Time::saturating_add)
}

/// LC interference in a mode-change window of length `r` whose LO part lasts
/// `r_lo`.
fn lc_carry(r: Time, r_lo: Time, lc: &[LcDemand]) -> Time {
    lc.iter()
        .map(|d| {
            let before = releases(r_lo, d.period);
            let after = releases(r, d.period).saturating_sub(before);
            before * d.c_lo + after * d.c_hi
        })
        .fold(0, Time::saturating_add)
}

pub(crate) fn solve_lo(own: Time, hp: &[Demand], bound: Time, init: Time, cap: u32) -> Result<FixedPoint, Divergence> {
    fixed_point(own, |r| request_bound(r, hp), bound, init, cap)
}

/// Mode-change recurrence. `init` defaults to the own HI cost plus the LC
/// interference accumulated during the LO window.
pub(crate) fn solve_star(
    own_hi: Time,
    hp_hc: &[Demand],
    hp_lc: &[LcDemand],
    r_lo: Time,
    bound: Time,
    init: Option<Time>,
    cap: u32,
) -> Result<FixedPoint, Divergence> {
    let init = init.unwrap_or_else(|| own_hi + lc_carry(r_lo, r_lo, hp_lc));
    fixed_point(
        own_hi,
        |r| request_bound(r, hp_hc).saturating_add(lc_carry(r, r_lo, hp_lc)),
        bound,
        init,
        cap,
    )
}

fn lo_demands<'a>(hp: impl IntoIterator<Item = &'a Task>) -> Vec<Demand> {
    hp.into_iter()
        .map(|t| Demand {
            period: t.period,
            cost: t.c_lo,
        })
        .collect()
}

fn hi_split<'a>(hp: impl IntoIterator<Item = &'a Task>) -> (Vec<Demand>, Vec<LcDemand>) {
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
                c_lo: t.c_lo,
                c_hi: t.c_hi,
            });
        }
    }
    (hc, lc)
}

fn lo_for(task: &Task, hp: &[&Task], cap: u32) -> Result<FixedPoint, Divergence> {
    solve_lo(task.c_lo, &lo_demands(hp.iter().copied()), task.period, task.c_lo, cap)
}

fn hi_for(task: &Task, hp: &[&Task], cap: u32) -> Result<FixedPoint, Divergence> {
    // Steady HI mode: LC tasks only run with their (usually zero) HI budget.
    let demands: Vec<Demand> = hp
        .iter()
        .filter(|t| t.c_hi > 0)
        .map(|t| Demand {
            period: t.period,
            cost: t.c_hi,
        })
        .collect();
    solve_lo(task.c_hi, &demands, task.period, task.c_hi, cap)
}

fn star_for(task: &Task, hp: &[&Task], r_lo: Time, cap: u32) -> Result<FixedPoint, Divergence> {
    let (hc, lc) = hi_split(hp.iter().copied());
    solve_star(task.c_hi, &hc, &lc, r_lo, task.period, None, cap)
}

fn split_at(ts: &Taskset, id: TaskId) -> Result<(&Task, Vec<&Task>), RtaError> {
    let me = ts.get(id).ok_or(RtaError::UnknownTask(id))?;
    let hp = ts.tasks().iter().filter(|t| t.priority < me.priority).collect();
    Ok((me, hp))
}

/// LO-mode response time of `id`.
pub fn response_time_lo(ts: &Taskset, id: TaskId) -> Result<FixedPoint, RtaError> {
    let (me, hp) = split_at(ts, id)?;
    Ok(lo_for(me, &hp, DEFAULT_ITERATION_CAP)?)
}

/// Steady HI-mode response time of the HC task `id`.
pub fn response_time_hi(ts: &Taskset, id: TaskId) -> Result<FixedPoint, RtaError> {
    let (me, hp) = split_at(ts, id)?;
    if !me.is_hc() {
        return Err(RtaError::NotHighCriticality(id));
    }
    Ok(hi_for(me, &hp, DEFAULT_ITERATION_CAP)?)
}

/// Mode-change (rtb) response time of the HC task `id`, given its LO-mode
/// response time.
pub fn response_time_star(ts: &Taskset, id: TaskId, r_lo: Time) -> Result<FixedPoint, RtaError> {
    let (me, hp) = split_at(ts, id)?;
    if !me.is_hc() {
        return Err(RtaError::NotHighCriticality(id));
    }
    Ok(star_for(me, &hp, r_lo, DEFAULT_ITERATION_CAP)?)
}

/// Offline response times of one task. `None` marks a diverged recurrence
/// (or, for `r_hi`/`r_star`, an LC task).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TaskResponse {
    pub id: TaskId,
    pub r_lo: Option<Time>,
    pub r_hi: Option<Time>,
    pub r_star: Option<Time>,
}

/// Response times of every task, in priority order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ResponseTimes(pub Vec<TaskResponse>);

impl ResponseTimes {
    pub fn get(&self, id: TaskId) -> Option<&TaskResponse> {
        self.0.iter().find(|r| r.id == id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SchedulabilityVerdict {
    pub schedulable: bool,
    pub failing_task: Option<TaskId>,
    pub response_times: ResponseTimes,
}

fn task_ok(task: &Task, r: &TaskResponse) -> bool {
    // R <= T: a response exactly at the period still meets the deadline.
    let lo_ok = r.r_lo.is_some_and(|v| v <= task.period);
    lo_ok && (!task.is_hc() || r.r_star.is_some_and(|v| v <= task.period))
}

fn analyze_task(task: &Task, hp: &[&Task], cap: u32) -> TaskResponse {
    let r_lo = lo_for(task, hp, cap).ok().map(|f| f.value);
    let (r_hi, r_star) = if task.is_hc() {
        let r_hi = hi_for(task, hp, cap).ok().map(|f| f.value);
        let r_star = r_lo.and_then(|lo| star_for(task, hp, lo, cap).ok().map(|f| f.value));
        (r_hi, r_star)
    } else {
        (None, None)
    };
    TaskResponse {
        id: task.id,
        r_lo,
        r_hi,
        r_star,
    }
}

/// AMC-rtb schedulability of a prioritized taskset.
pub fn amc_rtb_schedulable(ts: &Taskset) -> SchedulabilityVerdict {
    let mut responses = Vec::with_capacity(ts.len());
    let mut failing_task = None;
    for (i, task) in ts.tasks().iter().enumerate() {
        let hp: Vec<&Task> = ts.tasks()[..i].iter().collect();
        let r = analyze_task(task, &hp, DEFAULT_ITERATION_CAP);
        if failing_task.is_none() && !task_ok(task, &r) {
            failing_task = Some(task.id);
        }
        responses.push(r);
    }
    SchedulabilityVerdict {
        schedulable: failing_task.is_none(),
        failing_task,
        response_times: ResponseTimes(responses),
    }
}

/// Assigns priorities lowest level first. At each level the first task (by
/// largest period, then smallest id) that is schedulable with all other
/// unassigned tasks above it takes the level.
pub fn audsley_assign(ts: &Taskset) -> Result<Taskset, Error> {
    let mut unassigned: Vec<&Task> = ts.tasks().iter().collect();
    unassigned.sort_by(|a, b| b.period.cmp(&a.period).then(a.id.cmp(&b.id)));
    let mut out = Vec::with_capacity(unassigned.len());

    for level in (1..=unassigned.len() as u32).rev() {
        let pick = (0..unassigned.len()).find(|&c| {
            let hp: Vec<&Task> = unassigned
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != c)
                .map(|(_, t)| *t)
                .collect();
            let task = unassigned[c];
            task_ok(task, &analyze_task(task, &hp, DEFAULT_ITERATION_CAP))
        });
        let Some(c) = pick else {
            return Err(Error::Infeasible { level });
        };
        let mut task = unassigned.remove(c).clone();
        task.priority = level;
        out.push(task);
    }
    Ok(Taskset::new(ts.name.clone(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::example_taskset;

    /// Least fixed point by exhaustive search: the smallest R >= start with
    /// R == lead + interference(R), or None below `limit`.
    fn brute_force(lead: Time, interference: impl Fn(Time) -> Time, start: Time, limit: Time) -> Option<Time> {
        (start..=limit).find(|&r| lead + interference(r) == r)
    }

    #[test]
    fn trivial_fixed_point_takes_one_iteration() {
        assert_eq!(
            fixed_point(3, |_| 0, 10, 3, 100),
            Ok(FixedPoint {
                value: 3,
                iterations: 1
            })
        );
    }

    #[test]
    fn diverges_on_first_iterate() {
        let hp = [Demand { period: 9, cost: 2 }];
        let err = solve_lo(8, &hp, 9, 8, 100).unwrap_err();
        assert_eq!(
            err,
            Divergence::ExceededBound {
                value: 10,
                iterations: 1
            }
        );
    }

    #[test]
    fn iteration_cap_is_reported() {
        let hp = [Demand { period: 10, cost: 6 }];
        let err = solve_lo(10, &hp, 1000, 10, 2).unwrap_err();
        assert_eq!(err, Divergence::IterationCap { iterations: 2 });
    }

    #[test]
    fn example_lo_response_times() {
        let ts = example_taskset(1);
        let got: Vec<Time> = [1, 2, 3]
            .iter()
            .map(|&i| response_time_lo(&ts, TaskId(i)).unwrap().value)
            .collect();
        assert_eq!(got, vec![3, 5, 15]);
    }

    #[test]
    fn example_hi_response_matches_brute_force() {
        let ts = example_taskset(1);
        assert_eq!(response_time_hi(&ts, TaskId(1)).unwrap().value, 6);
        let oracle = brute_force(10, |r| r.div_ceil(10) * 6, 10, 50).unwrap();
        assert_eq!(oracle, 28);
        assert_eq!(response_time_hi(&ts, TaskId(3)).unwrap().value, oracle);
        assert_eq!(
            response_time_hi(&ts, TaskId(2)),
            Err(RtaError::NotHighCriticality(TaskId(2)))
        );
    }

    #[test]
    fn example_star_response_times() {
        let ts = example_taskset(1);
        assert_eq!(response_time_star(&ts, TaskId(1), 3).unwrap().value, 6);
        assert_eq!(response_time_star(&ts, TaskId(3), 15).unwrap().value, 38);
        let oracle = brute_force(10, |r| r.div_ceil(10) * 6 + 15u64.div_ceil(9) * 2, 14, 50).unwrap();
        assert_eq!(oracle, 38);
    }

    #[test]
    fn star_equals_hi_without_lc_interference() {
        let ts = Taskset::new("hc", vec![Task::hc(1, 2, 4, 10, 1), Task::hc(2, 3, 7, 30, 2)]);
        let r_lo = response_time_lo(&ts, TaskId(2)).unwrap().value;
        assert_eq!(
            response_time_star(&ts, TaskId(2), r_lo).unwrap().value,
            response_time_hi(&ts, TaskId(2)).unwrap().value
        );
    }

    #[test]
    fn example_is_schedulable_with_table_values() {
        let v = amc_rtb_schedulable(&example_taskset(1));
        assert!(v.schedulable);
        let lo: Vec<_> = v.response_times.0.iter().map(|r| r.r_lo).collect();
        let star: Vec<_> = v.response_times.0.iter().map(|r| r.r_star).collect();
        assert_eq!(lo, vec![Some(3), Some(5), Some(15)]);
        assert_eq!(star, vec![Some(6), None, Some(38)]);
    }

    #[test]
    fn shortened_lc_period_fails_at_that_task() {
        let ts = example_taskset(1).map_tasks(|t| {
            let mut t = t.clone();
            if t.id == TaskId(2) {
                t.period = 4;
            }
            t
        });
        let v = amc_rtb_schedulable(&ts);
        assert!(!v.schedulable);
        assert_eq!(v.failing_task, Some(TaskId(2)));
    }

    #[test]
    fn single_hc_task_schedulable() {
        let ts = Taskset::new("one", vec![Task::hc(1, 4, 9, 10, 1)]);
        assert!(amc_rtb_schedulable(&ts).schedulable);
        let single = Taskset::new("one", vec![Task::lc(1, 7, 20, 1)]);
        assert_eq!(response_time_lo(&single, TaskId(1)).unwrap().value, 7);
    }

    #[test]
    fn audsley_on_example() {
        let stripped = example_taskset(1).map_tasks(|t| Task {
            priority: 0,
            ..t.clone()
        });
        let assigned = audsley_assign(&stripped).unwrap();
        assert!(amc_rtb_schedulable(&assigned).schedulable);
        let single = Taskset::new("s", vec![Task::lc(5, 1, 10, 0)]);
        assert_eq!(audsley_assign(&single).unwrap().tasks()[0].priority, 1);
    }

    #[test]
    fn audsley_infeasible_when_every_order_fails() {
        let a = Task::hc(1, 2, 6, 10, 0);
        let b = Task::hc(2, 2, 6, 10, 0);
        // Brute force both orders.
        for (first, second) in [(&a, &b), (&b, &a)] {
            let ts = Taskset::new(
                "pair",
                vec![
                    Task {
                        priority: 1,
                        ..first.clone()
                    },
                    Task {
                        priority: 2,
                        ..second.clone()
                    },
                ],
            );
            assert!(!amc_rtb_schedulable(&ts).schedulable);
        }
        let ts = Taskset::new("pair", vec![a, b]);
        assert!(matches!(audsley_assign(&ts), Err(Error::Infeasible { level: 2 })));
    }
}
