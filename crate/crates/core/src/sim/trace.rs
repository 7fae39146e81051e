//! Event log produced by a simulation run.

use std::fmt;
use std::io::Write;

use serde::Serialize;

use crate::model::{Criticality, TaskId, Time};
use crate::Error;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    /// LC job dropped at, or released during, a HI-mode switch.
    ModeSwitch,
    /// LC job ran out of its budget for the current mode.
    Budget,
    /// A later job of the same task was released first.
    Superseded,
    /// Still running when the simulation ended, deadline not yet reached.
    Horizon,
}

impl fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiscardReason::ModeSwitch => "mode_switch",
            DiscardReason::Budget => "budget",
            DiscardReason::Superseded => "superseded",
            DiscardReason::Horizon => "horizon",
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Release,
    CheckpointReached {
        consumed: Time,
        /// Predicted total, when the policy made a prediction.
        predicted: Option<Time>,
    },
    /// The job used up a budget with work left: its LO budget, or its HI
    /// budget (an overrun of the worst-case assumption).
    BudgetExhausted {
        level: Criticality,
        budget: Time,
    },
    JobComplete {
        release: Time,
        executed: Time,
        overhead: Time,
    },
    JobDiscarded {
        executed: Time,
        reason: DiscardReason,
    },
    DeadlineMiss,
    ModeSwitchHi,
    ModeSwitchLo,
    ExtensionApproved {
        extra: Time,
        budget: Time,
        iterations: u32,
    },
    ExtensionDenied {
        extra: Time,
        iterations: u32,
        capped: bool,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Release => "release",
            EventKind::CheckpointReached { .. } => "checkpoint",
            EventKind::BudgetExhausted { .. } => "budget_exhausted",
            EventKind::JobComplete { .. } => "complete",
            EventKind::JobDiscarded { .. } => "discarded",
            EventKind::DeadlineMiss => "deadline_miss",
            EventKind::ModeSwitchHi => "mode_hi",
            EventKind::ModeSwitchLo => "mode_lo",
            EventKind::ExtensionApproved { .. } => "ext_approved",
            EventKind::ExtensionDenied { .. } => "ext_denied",
        }
    }

    fn detail(&self) -> String {
        match *self {
            EventKind::CheckpointReached { consumed, predicted } => match predicted {
                Some(p) => format!("consumed={consumed} predicted={p}"),
                None => format!("consumed={consumed}"),
            },
            EventKind::BudgetExhausted { level, budget } => format!("level={level} budget={budget}"),
            EventKind::JobComplete {
                release,
                executed,
                overhead,
            } => format!("release={release} executed={executed} overhead={overhead}"),
            EventKind::JobDiscarded { executed, reason } => format!("executed={executed} reason={reason}"),
            EventKind::ExtensionApproved {
                extra,
                budget,
                iterations,
            } => format!("extra={extra} budget={budget} iterations={iterations}"),
            EventKind::ExtensionDenied {
                extra,
                iterations,
                capped,
            } => format!("extra={extra} iterations={iterations} capped={capped}"),
            EventKind::Release | EventKind::DeadlineMiss | EventKind::ModeSwitchHi | EventKind::ModeSwitchLo => {
                String::new()
            }
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SimEvent {
    pub time: Time,
    pub task: TaskId,
    /// Job number within the task, counting from zero.
    pub job: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Events in the order they happened, plus the task criticalities needed to
/// interpret them.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SimTrace {
    pub tasks: Vec<(TaskId, Criticality)>,
    pub events: Vec<SimEvent>,
}

impl SimTrace {
    pub fn level_of(&self, id: TaskId) -> Option<Criticality> {
        self.tasks.iter().find(|(t, _)| *t == id).map(|&(_, l)| l)
    }

    /// Writes `time,kind,task,detail` rows.
    pub fn write_csv(&self, out: impl Write) -> Result<(), Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "kind", "task", "detail"])?;
        for e in &self.events {
            w.write_record([
                e.time.to_string(),
                e.kind.name().to_string(),
                format!("{}#{}", e.task, e.job),
                e.kind.detail(),
            ])?;
        }
        w.flush().map_err(|err| Error::Io("trace".into(), err))?;
        Ok(())
    }
}
