//! Paired policy sweeps and the online iteration-bound study.

mod iterations;
mod sweep;

pub use iterations::{run_iteration_bound_study, IterationCell, IterationStudy, STUDY_CAP};
pub use sweep::{
    overestimate, rep_seeds, run_sweep, summarize, write_csv, SimSettings, Stat, SummaryCell, SweepResult, SweepRow,
    SweepSpec, SweepVariable, HORIZON_PERIODS,
};
