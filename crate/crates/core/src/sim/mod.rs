//! Discrete-event simulation of AMC and the progress-aware policy.

mod engine;
mod metrics;
mod trace;
mod workload;

pub use engine::{simulate, Policy, SimOptions, SimRun, SwitchBack, DEFAULT_OVERHEAD};
pub use metrics::{compute_metrics, ErrorSummary, SimMetrics};
pub use trace::{DiscardReason, EventKind, SimEvent, SimTrace};
pub use workload::{
    generate_demands, nominal_demand, profile_task, task_demands, DemandStreams, JobDemand, TaskProfile, WorkloadConfig,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{example_taskset, CheckpointProfile, Task, TaskId, Taskset, Time};

    const MS: Time = 1000;

    fn completions(run: &SimRun, task: u32) -> Vec<Time> {
        run.trace
            .events
            .iter()
            .filter(|e| e.task == TaskId(task) && matches!(e.kind, EventKind::JobComplete { .. }))
            .map(|e| e.time)
            .collect()
    }

    fn switches(run: &SimRun) -> Vec<Time> {
        run.trace
            .events
            .iter()
            .filter(|e| e.kind == EventKind::ModeSwitchHi)
            .map(|e| e.time)
            .collect()
    }

    /// Example taskset in ms, with the first task's checkpoint half way.
    fn example() -> Taskset {
        example_taskset(MS).map_tasks(|t| {
            let mut t = t.clone();
            if t.is_hc() {
                t.checkpoint = Some(CheckpointProfile::new(t.c_lo / 2));
            }
            t
        })
    }

    fn first_job(pre: Time, post: Time) -> DemandStreams {
        DemandStreams::from([(
            TaskId(1),
            vec![JobDemand {
                task: TaskId(1),
                release: 0,
                exec_pre_cp: pre,
                exec_post_cp: post,
                mem_pre: 0,
                mem_post: 0,
            }],
        )])
    }

    fn opts(policy: Policy) -> SimOptions {
        SimOptions {
            overhead: 0,
            ..SimOptions::new(policy, 50 * MS)
        }
    }

    #[test]
    fn nominal_run_realizes_lo_response_times() {
        let run = simulate(&example(), &DemandStreams::new(), &opts(Policy::Amc)).unwrap();
        assert!(switches(&run).is_empty());
        assert_eq!(completions(&run, 2)[0], 5 * MS);
        assert_eq!(completions(&run, 3)[0], 15 * MS);
        assert_eq!(run.metrics.worst_response[&TaskId(3)], 15 * MS);
    }

    #[test]
    fn delayed_job_switches_under_amc_but_is_extended_otherwise() {
        // 66% slower on both sides: 1.5 -> 2.5 and 1.5 -> 2.5.
        let demands = first_job(2500, 2500);
        let amc = simulate(&example(), &demands, &opts(Policy::Amc)).unwrap();
        assert_eq!(switches(&amc), vec![3 * MS]);

        let pa = simulate(&example(), &demands, &opts(Policy::ProgressAware)).unwrap();
        assert!(switches(&pa).is_empty());
        assert_eq!(pa.metrics.extensions_approved, 1);
        assert_eq!(completions(&pa, 1)[0], 5 * MS);
        let approved = pa
            .trace
            .events
            .iter()
            .find_map(|e| match e.kind {
                EventKind::ExtensionApproved { budget, .. } => Some(budget),
                _ => None,
            })
            .unwrap();
        assert_eq!(approved, 5 * MS);
    }

    #[test]
    fn extended_job_can_still_overrun_into_hi_mode() {
        // Delayed like before at the checkpoint, but the tail needs one more ms.
        let demands = first_job(2500, 3500);
        let pa = simulate(&example(), &demands, &opts(Policy::ProgressAware)).unwrap();
        assert_eq!(switches(&pa), vec![5 * MS]);
        assert_eq!(completions(&pa, 1)[0], 6 * MS);
        assert_eq!(pa.metrics.hc_deadline_misses, 0);
        // the LC job was still pending at the switch and is dropped
        assert_eq!(pa.metrics.lc_jobs_discarded, 1);
    }

    #[test]
    fn lc_utilization_matches_its_share() {
        let ts = Taskset::new("u", vec![Task::lc(1, 250, 1000, 1)]);
        let run = simulate(&ts, &DemandStreams::new(), &SimOptions::new(Policy::Amc, 100_000)).unwrap();
        assert!((run.metrics.lc_avg_utilization - 0.25).abs() < 1e-12);
    }

    #[test]
    fn completion_at_the_deadline_is_not_a_miss() {
        let ts = Taskset::new("d", vec![Task::lc(1, 4, 10, 1), Task::lc(2, 6, 10, 2)]);
        let run = simulate(&ts, &DemandStreams::new(), &SimOptions::new(Policy::Amc, 100)).unwrap();
        assert_eq!(run.metrics.lc_deadline_misses, 0);
        assert_eq!(run.metrics.worst_response[&TaskId(2)], 10);
    }

    #[test]
    fn overload_is_reported_as_misses() {
        let ts = Taskset::new("o", vec![Task::lc(1, 6, 10, 1), Task::lc(2, 6, 10, 2)]);
        let run = simulate(&ts, &DemandStreams::new(), &SimOptions::new(Policy::Amc, 100)).unwrap();
        assert_eq!(run.metrics.lc_deadline_misses, 10);
    }

    #[test]
    fn progress_aware_requires_checkpoints() {
        let ts = example_taskset(MS);
        assert!(matches!(
            simulate(&ts, &DemandStreams::new(), &opts(Policy::ProgressAware)),
            Err(crate::Error::Config(_))
        ));
    }

    #[test]
    fn overhead_is_charged_to_the_requester() {
        let demands = first_job(2500, 2500);
        let mut o = opts(Policy::ProgressAware);
        o.overhead = 130;
        let pa = simulate(&example(), &demands, &o).unwrap();
        assert!(switches(&pa).is_empty());
        assert_eq!(completions(&pa, 1)[0], 5 * MS + 130);
    }

    #[test]
    fn idle_switch_back_waits_for_an_idle_processor() {
        let demands = first_job(2500, 3500);
        let mut o = opts(Policy::Amc);
        o.switch_back = SwitchBack::IdleInstant;
        let run = simulate(&example(), &demands, &o).unwrap();
        let lo: Vec<Time> = run
            .trace
            .events
            .iter()
            .filter(|e| e.kind == EventKind::ModeSwitchLo)
            .map(|e| e.time)
            .collect();
        // tau3 runs 6..10 and, after tau1's second job, 13..14; tau2's
        // release at 9 is dropped, so the processor first idles at 14.
        assert_eq!(lo[0], 14 * MS);
        assert_eq!(completions(&run, 3)[0], 14 * MS);
    }

    #[test]
    fn identical_inputs_give_identical_traces() {
        let ts = example();
        let cfg = WorkloadConfig {
            seed: 5,
            slowdown_prob: 0.5,
            ..Default::default()
        };
        let demands = generate_demands(&ts, &cfg, 500 * MS).unwrap();
        let mut o = opts(Policy::ProgressAware);
        o.horizon = 500 * MS;
        let a = simulate(&ts, &demands, &o).unwrap();
        let b = simulate(&ts, &demands, &o).unwrap();
        assert_eq!(a, b);
    }
}
