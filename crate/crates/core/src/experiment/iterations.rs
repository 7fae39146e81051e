//! How many recurrence updates the online test needs in the worst case.
//!
//! For each utilization, random tasksets are drawn and the schedulable ones
//! kept. Their highest-priority HC task then asks for `pct` percent more LO
//! budget on a fresh runtime state, and the test runs without a practical cap.
//! A request from the top of the priority order re-solves every task below it,
//! which is the most expensive case.

use rayon::prelude::*;
use serde::Serialize;

use crate::model::{Taskset, Time};
use crate::online::{self, ExtensionRequest, RuntimeStates};
use crate::rta;
use crate::seed;
use crate::taskgen::{self, GenConfig};
use crate::Error;

/// Cap large enough that no decision in the study is cut short.
pub const STUDY_CAP: u32 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationCell {
    pub total_u_lo: f64,
    pub extra_pct: u32,
    pub tasksets: usize,
    pub approved: usize,
    pub max_iterations: u32,
    pub mean_iterations: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationStudy {
    pub cells: Vec<IterationCell>,
    /// Largest iteration count over all cells: a cap that would have cut no
    /// decision of the study short.
    pub global_max: u32,
}

/// Schedulable sets among `n_tasksets` random draws at utilization `u`.
fn schedulable_sets(cfg: &GenConfig, u: f64, n_tasksets: usize, study_seed: u64, ui: usize) -> Vec<Taskset> {
    (0..n_tasksets)
        .into_par_iter()
        .filter_map(|k| {
            let gen = GenConfig {
                total_u_lo: u,
                seed: seed::derive(study_seed, &[seed::TASKSET, ui as u64, k as u64]),
                ..*cfg
            };
            let ts = taskgen::generate_taskset(&gen).ok()?;
            let ordered = rta::audsley_assign(&ts).ok()?;
            rta::amc_rtb_schedulable(&ordered).schedulable.then_some(ordered)
        })
        .collect()
}

fn probe(ts: &Taskset, pct: u32) -> Option<(u32, bool)> {
    let task = ts.tasks().iter().find(|t| t.is_hc())?;
    let extra: Time = (task.c_lo * pct as Time).div_ceil(100);
    let request = ExtensionRequest::new(task.id, extra, 0)?;
    let offline = rta::amc_rtb_schedulable(ts).response_times;
    let states = RuntimeStates::new(ts);
    let d = online::evaluate_extension(ts, &states, &offline, &request, STUDY_CAP).ok()?;
    Some((d.iterations_used, d.approved))
}

pub fn run_iteration_bound_study(
    n_tasksets: usize,
    cfg: &GenConfig,
    utils: &[f64],
    extra_pcts: &[u32],
    study_seed: u64,
) -> Result<IterationStudy, Error> {
    cfg.validate()?;
    let mut cells = Vec::with_capacity(utils.len() * extra_pcts.len());
    for (ui, &u) in utils.iter().enumerate() {
        let sets = schedulable_sets(cfg, u, n_tasksets, study_seed, ui);
        for &pct in extra_pcts {
            let probes: Vec<(u32, bool)> = sets.par_iter().filter_map(|ts| probe(ts, pct)).collect();
            let max_iterations = probes.iter().map(|p| p.0).max().unwrap_or(0);
            let mean_iterations = if probes.is_empty() {
                0.0
            } else {
                probes.iter().map(|p| p.0 as f64).sum::<f64>() / probes.len() as f64
            };
            cells.push(IterationCell {
                total_u_lo: u,
                extra_pct: pct,
                tasksets: probes.len(),
                approved: probes.iter().filter(|p| p.1).count(),
                max_iterations,
                mean_iterations,
            });
        }
    }
    let global_max = cells.iter().map(|c| c.max_iterations).max().unwrap_or(0);
    Ok(IterationStudy { cells, global_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CheckpointProfile, Task};

    #[test]
    fn single_task_needs_one_solve_per_recurrence() {
        let ts = Taskset::new(
            "one",
            vec![Task::hc(1, 10, 20, 100, 1).with_checkpoint(CheckpointProfile::new(5))],
        );
        // one LO-ext update and one confirming mode-change update
        assert_eq!(probe(&ts, 50), Some((2, true)));
    }

    #[test]
    fn small_study_is_reproducible() {
        let cfg = GenConfig {
            n_tasks: 6,
            ..Default::default()
        };
        let a = run_iteration_bound_study(20, &cfg, &[0.4, 0.6], &[10, 50], 3).unwrap();
        let b = run_iteration_bound_study(20, &cfg, &[0.4, 0.6], &[10, 50], 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 4);
        assert!(a.global_max > 0);
    }
}
