//! Random mixed-criticality tasksets.
//!
//! Utilizations come from UUnifast, periods are drawn independently, and
//! budgets follow as `C(LO) = round(u * T)`, `C(HI) = round(cf * C(LO))`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{CheckpointProfile, Criticality, MemoryProfile, Task, TaskId, Taskset, Time};
use crate::rta;
use crate::seed;
use crate::Error;

/// Ticks per simulated time unit.
pub const TIME_UNIT: Time = 1000;

/// Redraws allowed inside one `generate_taskset` call before giving up on a
/// configuration that keeps rounding budgets to zero.
const DEGENERATE_RETRIES: usize = 100;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_tasks: usize,
    pub total_u_lo: f64,
    pub cf: f64,
    /// Inclusive period range in ticks.
    pub period_min: Time,
    pub period_max: Time,
    pub log_uniform_periods: bool,
    pub hc_fraction: f64,
    /// Checkpoint position as a fraction of `C(LO)`.
    pub checkpoint_frac: f64,
    pub seed: u64,
    /// Attempt cap for batch generation.
    pub max_attempts: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_tasks: 8,
            total_u_lo: 0.6,
            cf: 1.8,
            period_min: 10 * TIME_UNIT,
            period_max: 1000 * TIME_UNIT,
            log_uniform_periods: false,
            hc_fraction: 0.5,
            checkpoint_frac: 0.5,
            seed: 0,
            max_attempts: 10_000,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_tasks == 0 {
            return bad("n_tasks must be at least 1".into());
        }
        if !(self.total_u_lo > 0.0 && self.total_u_lo < self.n_tasks as f64) {
            return bad(format!("total utilization {} outside (0, n)", self.total_u_lo));
        }
        if self.cf.is_nan() || self.cf <= 1.0 {
            return bad(format!("criticality factor {} must exceed 1", self.cf));
        }
        if self.period_min == 0 || self.period_min > self.period_max {
            return bad(format!("bad period range [{}, {}]", self.period_min, self.period_max));
        }
        if !(0.0..=1.0).contains(&self.hc_fraction) {
            return bad(format!("hc fraction {} not in [0, 1]", self.hc_fraction));
        }
        if !(self.checkpoint_frac > 0.0 && self.checkpoint_frac < 1.0) {
            return bad(format!("checkpoint fraction {} not in (0, 1)", self.checkpoint_frac));
        }
        Ok(())
    }
}

/// UUnifast with the given generator.
pub fn uunifast_with(n: usize, total_u: f64, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut sum = total_u;
    for i in 1..n {
        let next = sum * rng.gen::<f64>().powf(1.0 / (n - i) as f64);
        out.push(sum - next);
        sum = next;
    }
    if n > 0 {
        out.push(sum);
    }
    out
}

pub fn uunifast(n: usize, total_u: f64, seed: u64) -> Vec<f64> {
    uunifast_with(n, total_u, &mut seed::rng(seed))
}

/// Whether task `i` (0-based) is HC, spreading HC tasks evenly so that
/// exactly `floor(n * f)` of `n` are HC.
fn is_hc_slot(i: usize, f: f64) -> bool {
    ((i + 1) as f64 * f).floor() > (i as f64 * f).floor()
}

fn draw_period(cfg: &GenConfig, rng: &mut impl Rng) -> Time {
    if cfg.log_uniform_periods {
        let (lo, hi) = ((cfg.period_min as f64).ln(), (cfg.period_max as f64).ln());
        let p = rng.gen_range(lo..=hi).exp().round() as Time;
        p.clamp(cfg.period_min, cfg.period_max)
    } else {
        rng.gen_range(cfg.period_min..=cfg.period_max)
    }
}

fn draw_once(cfg: &GenConfig, rng: &mut impl Rng) -> Result<Vec<Task>, Error> {
    let utils = uunifast_with(cfg.n_tasks, cfg.total_u_lo, rng);
    let mut tasks = Vec::with_capacity(cfg.n_tasks);
    for (i, u) in utils.into_iter().enumerate() {
        let period = draw_period(cfg, rng);
        let c_lo = (u * period as f64).round() as Time;
        if c_lo == 0 {
            return Err(Error::DegenerateTask(i));
        }
        let id = TaskId(i as u32 + 1);
        let task = if is_hc_slot(i, cfg.hc_fraction) {
            let c_cp = (cfg.checkpoint_frac * c_lo as f64).round() as Time;
            if c_cp == 0 || c_cp >= c_lo {
                return Err(Error::DegenerateTask(i));
            }
            let c_hi = (cfg.cf * c_lo as f64).round() as Time;
            let profile = CheckpointProfile {
                c_cp_lo: c_cp,
                mem: Some(MemoryProfile::from_split(c_cp, c_lo - c_cp)),
                c_lo_profiled: None,
            };
            Task {
                id,
                level: Criticality::Hi,
                c_lo,
                c_hi: c_hi.max(c_lo + 1),
                period,
                priority: 0,
                checkpoint: Some(profile),
            }
        } else {
            Task {
                id,
                level: Criticality::Lo,
                c_lo,
                c_hi: 0,
                period,
                priority: 0,
                checkpoint: None,
            }
        };
        tasks.push(task);
    }
    Ok(tasks)
}

/// Gives every task a rate-monotonic priority (shortest period first, ties by id).
pub fn rate_monotonic(tasks: &mut [Task]) {
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.sort_by_key(|&i| (tasks[i].period, tasks[i].id));
    for (rank, i) in order.into_iter().enumerate() {
        tasks[i].priority = rank as u32 + 1;
    }
}

/// One random taskset with provisional rate-monotonic priorities.
pub fn generate_taskset(cfg: &GenConfig) -> Result<Taskset, Error> {
    cfg.validate()?;
    let mut rng = seed::rng(seed::derive(cfg.seed, &[seed::TASKSET]));
    let mut last = Error::DegenerateTask(0);
    for _ in 0..DEGENERATE_RETRIES {
        match draw_once(cfg, &mut rng) {
            Ok(mut tasks) => {
                rate_monotonic(&mut tasks);
                return Ok(Taskset::new(format!("gen-{}", cfg.seed), tasks));
            }
            Err(e) => last = e,
        }
    }
    Err(last)
}

#[derive(Clone, Debug, Serialize)]
pub struct Batch {
    pub tasksets: Vec<Taskset>,
    pub attempts: usize,
    pub acceptance_ratio: f64,
}

/// Seed used for attempt `k` of a batch.
pub fn attempt_seed(batch_seed: u64, k: usize) -> u64 {
    seed::derive(batch_seed, &[seed::TASKSET, k as u64])
}

/// Draws tasksets until `count` of them admit an Audsley priority order under
/// which AMC-rtb passes. The returned tasksets carry that order.
pub fn generate_schedulable_batch(cfg: &GenConfig, count: usize) -> Result<Batch, Error> {
    cfg.validate()?;
    let mut tasksets = Vec::with_capacity(count);
    let mut attempts = 0;
    while tasksets.len() < count {
        if attempts >= cfg.max_attempts {
            return Err(Error::ExhaustedRetries {
                attempts,
                accepted: tasksets.len(),
            });
        }
        let attempt_cfg = GenConfig {
            seed: attempt_seed(cfg.seed, attempts),
            ..*cfg
        };
        attempts += 1;
        let Ok(ts) = generate_taskset(&attempt_cfg) else {
            continue;
        };
        if let Ok(ordered) = rta::audsley_assign(&ts) {
            if rta::amc_rtb_schedulable(&ordered).schedulable {
                tasksets.push(ordered);
            }
        }
    }
    Ok(Batch {
        acceptance_ratio: tasksets.len() as f64 / attempts.max(1) as f64,
        tasksets,
        attempts,
    })
}
