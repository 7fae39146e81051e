//! Synthetic job demands and the profiling phase.
//!
//! A job is either on-profile or, with probability `q`, slowed down. A slowed
//! job draws `s_pre` uniformly from `[1, cf]` for the part before its
//! checkpoint; the part after the checkpoint is slowed by
//! `rho * s_pre + (1 - rho) * u` with an independent `u` from the same range.
//! Every job consumes the same number of random draws, so streams stay paired
//! across configurations that only change `q`, `rho` or the checkpoint.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{CheckpointProfile, MemoryProfile, Task, TaskId, Taskset, Time};
use crate::seed;
use crate::Error;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobDemand {
    pub task: TaskId,
    pub release: Time,
    pub exec_pre_cp: Time,
    pub exec_post_cp: Time,
    pub mem_pre: u64,
    pub mem_post: u64,
}

impl JobDemand {
    pub fn total(&self) -> Time {
        self.exec_pre_cp + self.exec_post_cp
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub seed: u64,
    /// Probability `q` that a job is slowed down.
    pub slowdown_prob: f64,
    /// Upper end of the slowdown range `[1, cf]`.
    pub cf: f64,
    /// Correlation `rho` between pre- and post-checkpoint slowdown.
    pub correlation: f64,
    /// HC demands are clamped to `C(HI) - hi_reserve`, leaving room for
    /// runtime overheads charged on top of the job's own work.
    pub hi_reserve: Time,
    /// Multiplier applied to the largest observed total when profiling `C(HI)`.
    pub profile_hi_factor: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            seed: 0,
            slowdown_prob: 0.3,
            cf: 1.8,
            correlation: 1.0,
            hi_reserve: 0,
            profile_hi_factor: 1.0,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), Error> {
        if !(self.cf >= 1.0 && self.cf.is_finite()) {
            return Err(Error::Config(format!("slowdown range needs cf >= 1, got {}", self.cf)));
        }
        if !(0.0..=1.0).contains(&self.slowdown_prob) {
            return Err(Error::Config(format!(
                "slowdown probability {} not in [0, 1]",
                self.slowdown_prob
            )));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::Config(format!("correlation {} not in [0, 1]", self.correlation)));
        }
        Ok(())
    }
}

/// Per-task job demand streams, indexed by job number.
pub type DemandStreams = BTreeMap<TaskId, Vec<JobDemand>>;

fn round_half_up(x: f64) -> Time {
    (x + 0.5).floor().max(0.0) as Time
}

/// Demand of an on-profile job: the task's nominal LO time split at its
/// checkpoint.
pub fn nominal_demand(task: &Task, release: Time) -> JobDemand {
    let total = task.nominal_c_lo();
    let (pre, mem) = match task.checkpoint {
        Some(cp) if task.is_hc() => (cp.c_cp_lo.min(total), cp.mem),
        _ => (total, None),
    };
    JobDemand {
        task: task.id,
        release,
        exec_pre_cp: pre,
        exec_post_cp: total - pre,
        mem_pre: mem.map_or(0, |m| m.m_pre_cp_lo),
        mem_post: mem.map_or(0, |m| m.m_post_cp_lo),
    }
}

fn draw_job(task: &Task, release: Time, cfg: &WorkloadConfig, rng: &mut impl Rng) -> JobDemand {
    let slowed = rng.gen_bool(cfg.slowdown_prob);
    let s_pre: f64 = rng.gen_range(1.0..=cfg.cf);
    let u: f64 = rng.gen_range(1.0..=cfg.cf);

    let mut job = nominal_demand(task, release);
    // LC jobs always run exactly at C(LO).
    if !task.is_hc() || !slowed {
        return job;
    }
    let (pre0, post0) = (job.exec_pre_cp, job.exec_post_cp);
    let pre = round_half_up(pre0 as f64 * s_pre);
    // Use the slowdown actually realized after rounding, so a fully
    // correlated job is slowed by exactly the same ratio on both sides.
    let s_pre_real = if pre0 > 0 { pre as f64 / pre0 as f64 } else { s_pre };
    let s_post = cfg.correlation * s_pre_real + (1.0 - cfg.correlation) * u;
    let post = round_half_up(post0 as f64 * s_post);

    let cap = task.c_hi.saturating_sub(cfg.hi_reserve).max(1);
    job.exec_pre_cp = pre.min(cap);
    job.exec_post_cp = post.min(cap - job.exec_pre_cp);
    job
}

/// Draws the demand of every job of `task` released before `horizon`.
pub fn task_demands(task: &Task, cfg: &WorkloadConfig, horizon: Time) -> Vec<JobDemand> {
    let mut rng = seed::rng(seed::derive(cfg.seed, &[seed::DEMANDS, task.id.0 as u64]));
    (0..)
        .map(|k| k * task.period)
        .take_while(|&r| r < horizon)
        .map(|release| draw_job(task, release, cfg, &mut rng))
        .collect()
}

/// Demand streams for a whole taskset. Each task has its own random stream,
/// so adding or removing tasks does not perturb the others.
pub fn generate_demands(ts: &Taskset, cfg: &WorkloadConfig, horizon: Time) -> Result<DemandStreams, Error> {
    cfg.validate()?;
    ts.tasks()
        .iter()
        .map(|t| {
            if t.is_hc() && t.checkpoint.is_none() {
                return Err(Error::MissingCheckpointProfile(t.id));
            }
            Ok((t.id, task_demands(t, cfg, horizon)))
        })
        .collect()
}

/// Outcome of the synthetic profiling phase.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TaskProfile {
    pub c_lo: Time,
    pub c_hi: Time,
    pub checkpoint: CheckpointProfile,
}

/// Runs the task's generator `n_runs` times in isolation and summarizes the
/// measurements: mean total as `C(LO)`, largest total (times the configured
/// factor) as `C(HI)`, mean pre-checkpoint time as `C_CP(LO)`.
pub fn profile_task(task: &Task, cfg: &WorkloadConfig, n_runs: usize) -> Result<TaskProfile, Error> {
    if task.checkpoint.is_none() {
        return Err(Error::MissingCheckpointProfile(task.id));
    }
    if n_runs == 0 {
        return Err(Error::Config("profiling needs at least one run".into()));
    }
    cfg.validate()?;
    let horizon = task.period.saturating_mul(n_runs as Time);
    let runs = task_demands(task, cfg, horizon);
    let n = runs.len() as f64;
    let mean = |f: fn(&JobDemand) -> u64| round_half_up(runs.iter().map(|j| f(j) as f64).sum::<f64>() / n);

    let max_total = runs.iter().map(JobDemand::total).max().unwrap_or(0);
    let mem_pre = mean(|j| j.mem_pre);
    let mem_post = mean(|j| j.mem_post);
    Ok(TaskProfile {
        c_lo: mean(JobDemand::total),
        c_hi: round_half_up(max_total as f64 * cfg.profile_hi_factor),
        checkpoint: CheckpointProfile {
            c_cp_lo: mean(|j| j.exec_pre_cp),
            mem: (mem_pre > 0).then(|| MemoryProfile::from_split(mem_pre, mem_post)),
            c_lo_profiled: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Task;

    fn hc_task() -> Task {
        Task::hc(1, 2000, 4000, 10_000, 1).with_checkpoint(CheckpointProfile::new(500))
    }

    #[test]
    fn no_slowdown_means_exact_budget() {
        let cfg = WorkloadConfig {
            slowdown_prob: 0.0,
            ..Default::default()
        };
        for job in task_demands(&hc_task(), &cfg, 1_000_000) {
            assert_eq!((job.exec_pre_cp, job.exec_post_cp), (500, 1500));
        }
    }

    #[test]
    fn full_correlation_scales_total_exactly() {
        let cfg = WorkloadConfig {
            slowdown_prob: 1.0,
            cf: 1.8,
            correlation: 1.0,
            ..Default::default()
        };
        let task = hc_task();
        for job in task_demands(&task, &cfg, 1_000_000) {
            let s = job.exec_pre_cp as f64 / 500.0;
            let expected = round_half_up(1500.0 * s);
            assert_eq!(job.exec_post_cp, expected.min(4000 - job.exec_pre_cp));
            assert!(job.total() <= task.c_hi);
        }
        // s = 1.2 on both sides gives 1.2 * C(LO).
        assert_eq!(round_half_up(500.0 * 1.2) + round_half_up(1500.0 * 1.2), 2400);
    }

    #[test]
    fn demands_respect_hi_budget_and_reserve() {
        let cfg = WorkloadConfig {
            slowdown_prob: 1.0,
            cf: 3.0,
            correlation: 0.0,
            hi_reserve: 130,
            ..Default::default()
        };
        for job in task_demands(&hc_task(), &cfg, 5_000_000) {
            assert!(job.total() <= 4000 - 130);
        }
    }

    #[test]
    fn demand_streams_are_reproducible() {
        let ts = Taskset::new("t", vec![hc_task(), Task::lc(2, 100, 1000, 2)]);
        let cfg = WorkloadConfig {
            seed: 9,
            ..Default::default()
        };
        let a = generate_demands(&ts, &cfg, 200_000).unwrap();
        let b = generate_demands(&ts, &cfg, 200_000).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(a[&TaskId(2)].iter().all(|j| j.total() == 100));
    }

    #[test]
    fn hc_without_checkpoint_is_rejected() {
        let ts = Taskset::new("t", vec![Task::hc(1, 2, 4, 10, 1)]);
        assert!(matches!(
            generate_demands(&ts, &WorkloadConfig::default(), 100),
            Err(Error::MissingCheckpointProfile(TaskId(1)))
        ));
    }

    #[test]
    fn degenerate_profile() {
        let cfg = WorkloadConfig {
            slowdown_prob: 0.0,
            ..Default::default()
        };
        let p = profile_task(&hc_task(), &cfg, 20).unwrap();
        assert_eq!((p.checkpoint.c_cp_lo, p.c_lo, p.c_hi), (500, 2000, 2000));
        let p1 = profile_task(&hc_task(), &cfg, 1).unwrap();
        assert_eq!((p1.checkpoint.c_cp_lo, p1.c_lo), (500, 2000));
    }

    #[test]
    fn single_run_profile_equals_that_run() {
        let cfg = WorkloadConfig {
            seed: 3,
            slowdown_prob: 1.0,
            ..Default::default()
        };
        let run = task_demands(&hc_task(), &cfg, 1)[0];
        let p = profile_task(&hc_task(), &cfg, 1).unwrap();
        assert_eq!(
            (p.checkpoint.c_cp_lo, p.c_lo, p.c_hi),
            (run.exec_pre_cp, run.total(), run.total())
        );
    }

    #[test]
    fn mixture_profile_matches_analytic_mean() {
        let cfg = WorkloadConfig {
            seed: 11,
            slowdown_prob: 0.4,
            cf: 1.8,
            correlation: 1.0,
            ..Default::default()
        };
        let task = Task::hc(1, 20_000, 40_000, 100_000, 1).with_checkpoint(CheckpointProfile::new(5_000));
        let p = profile_task(&task, &cfg, 1000).unwrap();
        // E[total] = C * ((1 - q) + q * E[s]) with s ~ U[1, cf]; rounding is negligible here.
        let analytic = 20_000.0 * ((1.0 - 0.4) + 0.4 * (1.0 + 1.8) / 2.0);
        let rel = (p.c_lo as f64 - analytic).abs() / analytic;
        assert!(rel < 0.02, "profiled {} vs analytic {analytic}", p.c_lo);
    }
}
