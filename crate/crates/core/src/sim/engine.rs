//! Preemptive fixed-priority execution on one processor.
//!
//! The engine advances time from one event to the next: a release, the
//! running job reaching its checkpoint, a budget, or completion. Because at
//! most one job runs at a time and checkpoints and budgets are keyed to the
//! job's own consumed time, only the running job can produce events between
//! releases.
//!
//! At equal timestamps the running job's events (checkpoint, then budget
//! exhaustion, then completion) come first, then releases in priority order.
//! A job finishing exactly at its deadline therefore meets it.

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, SimMetrics};
use super::trace::{DiscardReason, EventKind, SimEvent, SimTrace};
use super::workload::{nominal_demand, DemandStreams, JobDemand};
use crate::model::{Criticality, Task, TaskId, Taskset, Time};
use crate::online::{self, Denial, ExtensionRequest, RuntimeStates};
use crate::prediction::{self, CheckpointObservation, PredictionModel};
use crate::rta::{self, ResponseTimes};
use crate::Error;

/// Default cost of one extension decision, charged to the requesting job.
pub const DEFAULT_OVERHEAD: Time = 130;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// Plain AMC: an HC job exhausting `C(LO)` switches the system to HI mode.
    Amc,
    /// AMC plus checkpoint-driven LO budget extensions.
    ProgressAware,
}

/// When the system returns from HI to LO mode.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchBack {
    /// As soon as no in-flight HC job has exceeded its LO budget.
    #[default]
    BudgetList,
    /// At the first instant with no active job at all.
    IdleInstant,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub policy: Policy,
    pub model: PredictionModel,
    pub horizon: Time,
    pub overhead: Time,
    pub iteration_cap: u32,
    pub switch_back: SwitchBack,
}

impl SimOptions {
    pub fn new(policy: Policy, horizon: Time) -> Self {
        SimOptions {
            policy,
            model: PredictionModel::default(),
            horizon,
            overhead: DEFAULT_OVERHEAD,
            iteration_cap: online::DEFAULT_ITERATION_CAP,
            switch_back: SwitchBack::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimRun {
    pub trace: SimTrace,
    pub metrics: SimMetrics,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Mode {
    Lo,
    Hi,
}

#[derive(Clone, Debug)]
struct Job {
    index: u64,
    release: Time,
    pre: Time,
    /// Total CPU time the job needs, including charged overheads.
    need: Time,
    consumed: Time,
    overhead: Time,
    mem_pre: u64,
    checkpoint_pending: bool,
    lo_exhausted: bool,
    hi_exhausted: bool,
}

struct Engine<'a> {
    ts: &'a Taskset,
    demands: &'a DemandStreams,
    opts: &'a SimOptions,
    offline: Option<ResponseTimes>,
    states: RuntimeStates,
    jobs: Vec<Option<Job>>,
    next_job: Vec<u64>,
    mode: Mode,
    /// Task and job that caused the current HI-mode episode.
    trigger: (TaskId, u64),
    t_max: Time,
    events: Vec<SimEvent>,
}

/// Runs the taskset over `[0, horizon)` with synchronous release at 0.
///
/// Jobs without an entry in `demands` run exactly at their nominal demand.
pub fn simulate(ts: &Taskset, demands: &DemandStreams, opts: &SimOptions) -> Result<SimRun, Error> {
    let offline = match opts.policy {
        Policy::Amc => None,
        Policy::ProgressAware => {
            for t in ts.tasks().iter().filter(|t| t.is_hc()) {
                let cp = t.checkpoint.ok_or_else(|| {
                    Error::Config(format!("progress-aware policy needs a checkpoint on HC task {}", t.id))
                })?;
                if opts.model == PredictionModel::Memory && cp.mem.is_none() {
                    return Err(Error::MissingMemoryData);
                }
            }
            let verdict = rta::amc_rtb_schedulable(ts);
            if let Some(id) = verdict.failing_task {
                return Err(Error::Unschedulable(id));
            }
            Some(verdict.response_times)
        }
    };
    let mut engine = Engine {
        ts,
        demands,
        opts,
        offline,
        states: RuntimeStates::new(ts),
        jobs: vec![None; ts.len()],
        next_job: vec![0; ts.len()],
        mode: Mode::Lo,
        trigger: (TaskId(0), 0),
        t_max: ts.max_period(),
        events: Vec::new(),
    };
    engine.run()?;
    let trace = SimTrace {
        tasks: ts.tasks().iter().map(|t| (t.id, t.level)).collect(),
        events: engine.events,
    };
    let metrics = compute_metrics(&trace, opts.horizon);
    Ok(SimRun { trace, metrics })
}

impl Engine<'_> {
    fn task(&self, i: usize) -> &Task {
        &self.ts.tasks()[i]
    }

    fn emit(&mut self, time: Time, i: usize, job: u64, kind: EventKind) {
        let task = self.task(i).id;
        self.events.push(SimEvent { time, task, job, kind });
    }

    fn run(&mut self) -> Result<(), Error> {
        let horizon = self.opts.horizon;
        let mut t: Time = 0;
        loop {
            self.check_switch_back(t);
            if t >= horizon {
                break;
            }
            self.release_jobs(t);
            self.check_switch_back(t);

            let next_release = (0..self.ts.len())
                .map(|i| self.next_job[i] * self.task(i).period)
                .min()
                .unwrap_or(Time::MAX)
                .min(horizon);
            match self.jobs.iter().position(Option::is_some) {
                None => t = next_release,
                Some(i) => {
                    let dt = (next_release - t).min(self.time_to_event(i));
                    debug_assert!(dt > 0, "zero-length step at t={t}");
                    self.jobs[i].as_mut().expect("running job").consumed += dt;
                    t += dt;
                    self.settle(i, t)?;
                }
            }
        }
        self.finish(horizon);
        Ok(())
    }

    /// Budget the job of task `i` is currently held to, if any.
    fn limit(&self, i: usize, job: &Job) -> Option<Time> {
        let task = self.task(i);
        if task.is_hc() {
            if !job.lo_exhausted {
                Some(self.states.as_slice()[i].c_extended)
            } else if !job.hi_exhausted {
                Some(task.c_hi)
            } else {
                None
            }
        } else {
            Some(match self.mode {
                Mode::Lo => task.c_lo,
                Mode::Hi => task.c_hi,
            })
        }
    }

    fn time_to_event(&self, i: usize) -> Time {
        let job = self.jobs[i].as_ref().expect("active job");
        let mut next = job.need;
        if job.checkpoint_pending && job.pre > job.consumed {
            next = next.min(job.pre);
        }
        if let Some(b) = self.limit(i, job).filter(|&b| b > job.consumed) {
            next = next.min(b);
        }
        next - job.consumed
    }

    fn release_jobs(&mut self, t: Time) {
        for i in 0..self.ts.len() {
            let period = self.task(i).period;
            if self.next_job[i] * period != t {
                continue;
            }
            let index = self.next_job[i];
            self.next_job[i] += 1;
            if let Some(old) = self.jobs[i].take() {
                self.emit(t, i, old.index, EventKind::DeadlineMiss);
                let kind = EventKind::JobDiscarded {
                    executed: old.consumed,
                    reason: DiscardReason::Superseded,
                };
                self.emit(t, i, old.index, kind);
            }
            let task = self.task(i).clone();
            let demand: JobDemand = self
                .demands
                .get(&task.id)
                .and_then(|s| s.get(index as usize))
                .copied()
                .unwrap_or_else(|| nominal_demand(&task, t));
            self.states.start_job(task.id);
            self.emit(t, i, index, EventKind::Release);
            if !task.is_hc() && self.mode == Mode::Hi && task.c_hi == 0 {
                self.emit(
                    t,
                    i,
                    index,
                    EventKind::JobDiscarded {
                        executed: 0,
                        reason: DiscardReason::ModeSwitch,
                    },
                );
                continue;
            }
            self.jobs[i] = Some(Job {
                index,
                release: t,
                pre: demand.exec_pre_cp,
                need: demand.total().max(1),
                consumed: 0,
                overhead: 0,
                mem_pre: demand.mem_pre,
                checkpoint_pending: task.is_hc() && task.checkpoint.is_some(),
                lo_exhausted: false,
                hi_exhausted: false,
            });
        }
    }

    /// Processes whatever the job of task `i` hit at time `t`.
    fn settle(&mut self, i: usize, t: Time) -> Result<(), Error> {
        let mut job = self.jobs[i].take().expect("active job");

        if job.checkpoint_pending && job.consumed == job.pre {
            job.checkpoint_pending = false;
            self.checkpoint(i, &mut job, t)?;
        }

        let task = self.task(i);
        let (is_hc, c_hi) = (task.is_hc(), task.c_hi);
        if job.consumed < job.need {
            if let Some(limit) = self.limit(i, &job).filter(|&b| job.consumed >= b) {
                if !is_hc {
                    let kind = EventKind::JobDiscarded {
                        executed: job.consumed,
                        reason: DiscardReason::Budget,
                    };
                    self.emit(t, i, job.index, kind);
                    return Ok(());
                }
                if !job.lo_exhausted {
                    job.lo_exhausted = true;
                    let kind = EventKind::BudgetExhausted {
                        level: Criticality::Lo,
                        budget: limit,
                    };
                    self.emit(t, i, job.index, kind);
                    if self.mode == Mode::Lo {
                        self.switch_to_hi(i, job.index, t);
                    }
                }
                if !job.hi_exhausted && job.consumed >= c_hi {
                    job.hi_exhausted = true;
                    let kind = EventKind::BudgetExhausted {
                        level: Criticality::Hi,
                        budget: c_hi,
                    };
                    self.emit(t, i, job.index, kind);
                }
            }
        }

        if job.consumed >= job.need {
            let kind = EventKind::JobComplete {
                release: job.release,
                executed: job.consumed,
                overhead: job.overhead,
            };
            self.emit(t, i, job.index, kind);
        } else {
            self.jobs[i] = Some(job);
        }
        Ok(())
    }

    fn checkpoint(&mut self, i: usize, job: &mut Job, t: Time) -> Result<(), Error> {
        let task = self.task(i).clone();
        let cp = task.checkpoint.expect("checkpoint profile");
        if self.opts.policy != Policy::ProgressAware || job.lo_exhausted {
            let kind = EventKind::CheckpointReached {
                consumed: job.consumed,
                predicted: None,
            };
            self.emit(t, i, job.index, kind);
            return Ok(());
        }

        online::maybe_reset_max_extended(&mut self.states, t, self.t_max);
        let obs = CheckpointObservation {
            t_spent: job.consumed,
            t_ref: cp.c_cp_lo,
            m_cp: (job.mem_pre > 0).then_some(job.mem_pre),
        };
        let metric = prediction::observe_delay(&obs);
        let predicted =
            prediction::predict_total(self.opts.model, task.nominal_c_lo(), &metric, &obs, cp.mem.as_ref())?;
        let kind = EventKind::CheckpointReached {
            consumed: job.consumed,
            predicted: Some(predicted),
        };
        self.emit(t, i, job.index, kind);

        let budget = self.states.as_slice()[i].c_extended;
        let extra = prediction::effective_extra(predicted, budget);
        if extra == 0 {
            return Ok(());
        }
        let e = (extra + self.opts.overhead).min(task.c_hi.saturating_sub(budget));
        let Some(request) = ExtensionRequest::new(task.id, e, t) else {
            return Ok(());
        };
        let offline = self.offline.as_ref().expect("offline analysis");
        let decision =
            online::is_budget_change_approved(self.ts, &mut self.states, offline, &request, self.opts.iteration_cap)?;
        job.need += self.opts.overhead;
        job.overhead += self.opts.overhead;
        let kind = if decision.approved {
            EventKind::ExtensionApproved {
                extra: e,
                budget: decision.requested_budget,
                iterations: decision.iterations_used,
            }
        } else {
            EventKind::ExtensionDenied {
                extra: e,
                iterations: decision.iterations_used,
                capped: decision.denial == Some(Denial::IterationCap),
            }
        };
        self.emit(t, i, job.index, kind);
        Ok(())
    }

    fn switch_to_hi(&mut self, i: usize, job: u64, t: Time) {
        self.mode = Mode::Hi;
        self.trigger = (self.task(i).id, job);
        self.emit(t, i, job, EventKind::ModeSwitchHi);
        for k in 0..self.ts.len() {
            let task = self.task(k);
            if task.is_hc() {
                continue;
            }
            let c_hi = task.c_hi;
            let drop = self.jobs[k].as_ref().is_some_and(|j| c_hi == 0 || j.consumed >= c_hi);
            if drop {
                let old = self.jobs[k].take().expect("checked above");
                let kind = EventKind::JobDiscarded {
                    executed: old.consumed,
                    reason: DiscardReason::ModeSwitch,
                };
                self.emit(t, k, old.index, kind);
            }
        }
    }

    fn check_switch_back(&mut self, t: Time) {
        if self.mode != Mode::Hi {
            return;
        }
        let ready = match self.opts.switch_back {
            SwitchBack::BudgetList => self.jobs.iter().flatten().all(|j| !j.lo_exhausted),
            SwitchBack::IdleInstant => self.jobs.iter().all(Option::is_none),
        };
        if ready {
            self.mode = Mode::Lo;
            let (task, job) = self.trigger;
            self.events.push(SimEvent {
                time: t,
                task,
                job,
                kind: EventKind::ModeSwitchLo,
            });
        }
    }

    fn finish(&mut self, horizon: Time) {
        for i in 0..self.ts.len() {
            let Some(job) = self.jobs[i].take() else { continue };
            if job.release + self.task(i).deadline() <= horizon {
                self.emit(horizon, i, job.index, EventKind::DeadlineMiss);
            }
            let kind = EventKind::JobDiscarded {
                executed: job.consumed,
                reason: DiscardReason::Horizon,
            };
            self.emit(horizon, i, job.index, kind);
        }
    }
}
