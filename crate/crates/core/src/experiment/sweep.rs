//! Paired policy sweeps.
//!
//! Every cell (one sweep value, one repetition) draws a schedulable taskset
//! and a demand stream, then runs both policies on exactly those inputs. The
//! taskset and demand seeds depend on the repetition only, so cells that
//! differ only in a value that does not affect generation (checkpoint
//! position, overestimation, prediction model) see the same workload.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{Taskset, Time};
use crate::prediction::PredictionModel;
use crate::rta;
use crate::seed;
use crate::sim::{self, Policy, SimMetrics, SimOptions, SwitchBack, WorkloadConfig};
use crate::taskgen::{self, GenConfig};
use crate::Error;

/// Simulated horizon, in multiples of the largest period.
pub const HORIZON_PERIODS: Time = 20;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    NTasks,
    TotalULo,
    OverestimatePct,
    CheckpointFrac,
    Model,
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVariable::NTasks => "n_tasks",
            SweepVariable::TotalULo => "total_u_lo",
            SweepVariable::OverestimatePct => "overestimate_pct",
            SweepVariable::CheckpointFrac => "checkpoint_frac",
            SweepVariable::Model => "model",
        })
    }
}

impl FromStr for SweepVariable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        Ok(match s {
            "n_tasks" | "n" => SweepVariable::NTasks,
            "total_u_lo" | "util" => SweepVariable::TotalULo,
            "overestimate_pct" | "overestimate" => SweepVariable::OverestimatePct,
            "checkpoint_frac" | "checkpoint" => SweepVariable::CheckpointFrac,
            "model" => SweepVariable::Model,
            _ => return Err(Error::Config(format!("unknown sweep variable `{s}`"))),
        })
    }
}

/// Simulation settings shared by every cell.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub model: PredictionModel,
    pub overhead: Time,
    pub iteration_cap: u32,
    pub switch_back: SwitchBack,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            model: PredictionModel::default(),
            overhead: sim::DEFAULT_OVERHEAD,
            iteration_cap: crate::online::DEFAULT_ITERATION_CAP,
            switch_back: SwitchBack::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<String>,
    pub repetitions: usize,
    pub seed: u64,
    pub gen: GenConfig,
    pub workload: WorkloadConfig,
    pub sim: SimSettings,
}

/// Fully resolved inputs of one cell.
#[derive(Clone, Debug, PartialEq)]
struct CellConfig {
    gen: GenConfig,
    model: PredictionModel,
    overestimate_pct: f64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), Error> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("sweep needs at least one repetition".into()));
        }
        for v in &self.values {
            self.cell(v)?.gen.validate()?;
        }
        self.workload.validate()
    }

    fn cell(&self, value: &str) -> Result<CellConfig, Error> {
        let num = || -> Result<f64, Error> {
            value
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{value}` is not a number")))
        };
        let mut cell = CellConfig {
            gen: self.gen,
            model: self.sim.model,
            overestimate_pct: 0.0,
        };
        match self.variable {
            SweepVariable::NTasks => {
                cell.gen.n_tasks = value
                    .parse()
                    .map_err(|_| Error::Config(format!("`{value}` is not a task count")))?
            }
            SweepVariable::TotalULo => cell.gen.total_u_lo = num()?,
            SweepVariable::CheckpointFrac => cell.gen.checkpoint_frac = num()?,
            SweepVariable::OverestimatePct => {
                cell.overestimate_pct = num()?;
                if cell.overestimate_pct < 0.0 {
                    return Err(Error::Config("overestimation must be non-negative".into()));
                }
            }
            SweepVariable::Model => cell.model = value.parse()?,
        }
        Ok(cell)
    }
}

/// One tidy output row: the cell's full configuration and one policy's metrics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub variable: SweepVariable,
    pub value: String,
    pub rep: usize,
    pub policy: Policy,
    pub seed: u64,
    pub taskset_seed: u64,
    pub demand_seed: u64,
    pub n_tasks: usize,
    pub total_u_lo: f64,
    pub cf: f64,
    pub hc_fraction: f64,
    pub checkpoint_frac: f64,
    pub overestimate_pct: f64,
    pub model: PredictionModel,
    pub slowdown_prob: f64,
    pub correlation: f64,
    pub overhead: Time,
    pub iteration_cap: u32,
    pub switch_back: SwitchBack,
    pub horizon: Time,
    pub lc_avg_utilization: f64,
    pub lc_jobs_completed: u64,
    pub lc_jobs_discarded: u64,
    pub hi_mode_switches: u64,
    pub extensions_approved: u64,
    pub extensions_denied: u64,
    pub decisions_capped: u64,
    pub hc_deadline_misses: u64,
    pub hc_hi_overruns: u64,
    pub max_online_iterations: u32,
    pub prediction_error_mean: f64,
    pub prediction_error_mean_abs: f64,
    pub prediction_error_count: u64,
}

/// Inflates every HC task's LO budget by `pct` percent, remembering the
/// profiled value so predictions still start from it.
pub fn overestimate(ts: &Taskset, pct: f64) -> Taskset {
    if pct == 0.0 {
        return ts.clone();
    }
    ts.map_tasks(|t| {
        let mut t = t.clone();
        if let (true, Some(cp)) = (t.is_hc(), t.checkpoint.as_mut()) {
            let nominal = cp.c_lo_profiled.unwrap_or(t.c_lo);
            let inflated = (nominal as f64 * (1.0 + pct / 100.0)).round() as Time;
            cp.c_lo_profiled = Some(nominal);
            t.c_lo = inflated.clamp(nominal, t.c_hi.saturating_sub(1).max(nominal));
        }
        t
    })
}

/// Seeds used by repetition `rep`: one for the taskset, one for demands.
pub fn rep_seeds(sweep_seed: u64, rep: usize) -> (u64, u64) {
    (
        seed::derive(sweep_seed, &[seed::TASKSET, rep as u64]),
        seed::derive(sweep_seed, &[seed::DEMANDS, rep as u64]),
    )
}

/// Result of one cell: a row per policy, or the reason the cell was skipped.
pub type CellResult = Result<[SweepRow; 2], String>;

fn run_cell(spec: &SweepSpec, value: &str, rep: usize) -> Result<CellResult, Error> {
    let cell = spec.cell(value)?;
    let (taskset_seed, demand_seed) = rep_seeds(spec.seed, rep);
    let gen = GenConfig {
        seed: taskset_seed,
        ..cell.gen
    };
    let base = taskgen::generate_schedulable_batch(&gen, 1)?
        .tasksets
        .pop()
        .expect("batch of one");
    let ts = overestimate(&base, cell.overestimate_pct);
    if cell.overestimate_pct > 0.0 {
        if let Some(id) = rta::amc_rtb_schedulable(&ts).failing_task {
            return Ok(Err(format!("unschedulable after overestimation (task {id})")));
        }
    }

    let horizon = HORIZON_PERIODS * ts.max_period();
    let workload = WorkloadConfig {
        seed: demand_seed,
        hi_reserve: spec.workload.hi_reserve.max(spec.sim.overhead),
        ..spec.workload
    };
    let demands = sim::generate_demands(&ts, &workload, horizon)?;

    let run = |policy: Policy| -> Result<SweepRow, Error> {
        let opts = SimOptions {
            policy,
            model: cell.model,
            horizon,
            overhead: spec.sim.overhead,
            iteration_cap: spec.sim.iteration_cap,
            switch_back: spec.sim.switch_back,
        };
        let m = sim::simulate(&ts, &demands, &opts)?.metrics;
        Ok(row(spec, value, rep, policy, &cell, &workload, &opts, taskset_seed, &m))
    };
    Ok(Ok([run(Policy::Amc)?, run(Policy::ProgressAware)?]))
}

#[allow(clippy::too_many_arguments)]
fn row(
    spec: &SweepSpec,
    value: &str,
    rep: usize,
    policy: Policy,
    cell: &CellConfig,
    workload: &WorkloadConfig,
    opts: &SimOptions,
    taskset_seed: u64,
    m: &SimMetrics,
) -> SweepRow {
    SweepRow {
        variable: spec.variable,
        value: value.to_string(),
        rep,
        policy,
        seed: spec.seed,
        taskset_seed,
        demand_seed: workload.seed,
        n_tasks: cell.gen.n_tasks,
        total_u_lo: cell.gen.total_u_lo,
        cf: cell.gen.cf,
        hc_fraction: cell.gen.hc_fraction,
        checkpoint_frac: cell.gen.checkpoint_frac,
        overestimate_pct: cell.overestimate_pct,
        model: cell.model,
        slowdown_prob: workload.slowdown_prob,
        correlation: workload.correlation,
        overhead: opts.overhead,
        iteration_cap: opts.iteration_cap,
        switch_back: opts.switch_back,
        horizon: opts.horizon,
        lc_avg_utilization: m.lc_avg_utilization,
        lc_jobs_completed: m.lc_jobs_completed,
        lc_jobs_discarded: m.lc_jobs_discarded,
        hi_mode_switches: m.hi_mode_switches,
        extensions_approved: m.extensions_approved,
        extensions_denied: m.extensions_denied,
        decisions_capped: m.decisions_capped,
        hc_deadline_misses: m.hc_deadline_misses,
        hc_hi_overruns: m.hc_hi_overruns,
        max_online_iterations: m.max_online_iterations,
        prediction_error_mean: m.prediction_error.mean,
        prediction_error_mean_abs: m.prediction_error.mean_abs,
        prediction_error_count: m.prediction_error.count,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Cells that produced no rows, with the reason.
    pub skipped: Vec<(String, usize, String)>,
}

/// Runs every (value, repetition) cell in parallel; rows come back in cell
/// order, AMC before the progress-aware policy.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, Error> {
    spec.validate()?;
    let cells: Vec<(&String, usize)> = spec
        .values
        .iter()
        .flat_map(|v| (0..spec.repetitions).map(move |r| (v, r)))
        .collect();
    let results: Vec<Result<CellResult, Error>> = cells.par_iter().map(|&(v, r)| run_cell(spec, v, r)).collect();

    let mut out = SweepResult {
        rows: Vec::with_capacity(cells.len() * 2),
        skipped: Vec::new(),
    };
    for ((v, r), res) in cells.into_iter().zip(results) {
        match res? {
            Ok(rows) => out.rows.extend(rows),
            Err(reason) => out.skipped.push((v.clone(), r, reason)),
        }
    }
    Ok(out)
}

pub fn write_csv(rows: &[SweepRow], out: impl std::io::Write) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Io("csv".into(), e))?;
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    fn of(xs: impl Iterator<Item = f64>) -> Stat {
        let xs: Vec<f64> = xs.collect();
        if xs.is_empty() {
            return Stat::default();
        }
        Stat {
            mean: xs.iter().sum::<f64>() / xs.len() as f64,
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryCell {
    pub value: String,
    pub policy: Policy,
    pub runs: usize,
    pub lc_avg_utilization: Stat,
    pub hi_mode_switches: Stat,
    pub extensions_approved: Stat,
    pub extensions_denied: Stat,
    pub hc_deadline_misses: u64,
    pub max_online_iterations: u32,
}

/// Means, minima and maxima per (value, policy), in sweep value order.
pub fn summarize(spec: &SweepSpec, rows: &[SweepRow]) -> Vec<SummaryCell> {
    let mut groups: BTreeMap<(usize, u8), Vec<&SweepRow>> = BTreeMap::new();
    for r in rows {
        let vi = spec.values.iter().position(|v| *v == r.value).unwrap_or(usize::MAX);
        groups.entry((vi, r.policy as u8)).or_default().push(r);
    }
    groups
        .into_values()
        .map(|g| SummaryCell {
            value: g[0].value.clone(),
            policy: g[0].policy,
            runs: g.len(),
            lc_avg_utilization: Stat::of(g.iter().map(|r| r.lc_avg_utilization)),
            hi_mode_switches: Stat::of(g.iter().map(|r| r.hi_mode_switches as f64)),
            extensions_approved: Stat::of(g.iter().map(|r| r.extensions_approved as f64)),
            extensions_denied: Stat::of(g.iter().map(|r| r.extensions_denied as f64)),
            hc_deadline_misses: g.iter().map(|r| r.hc_deadline_misses).sum(),
            max_online_iterations: g.iter().map(|r| r.max_online_iterations).max().unwrap_or(0),
        })
        .collect()
}
