//! The two-level mixed-criticality task model.
//!
//! All time quantities are integer ticks. The recommended granularity is one
//! tick per microsecond, so a 2000 ms budget is stored as `2_000_000`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Integer time in ticks.
pub type Time = u64;

/// Stable task identifier, unique within a taskset.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criticality {
    #[serde(rename = "LC")]
    Lo,
    #[serde(rename = "HC")]
    Hi,
}

impl Criticality {
    pub fn is_hi(self) -> bool {
        self == Criticality::Hi
    }
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criticality::Lo => "LC",
            Criticality::Hi => "HC",
        })
    }
}

/// Profiled memory-access counts around the checkpoint.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryProfile {
    pub m_lo: u64,
    pub m_pre_cp_lo: u64,
    pub m_post_cp_lo: u64,
}

impl MemoryProfile {
    /// Builds a profile whose total is the sum of both halves.
    pub fn from_split(pre: u64, post: u64) -> Self {
        MemoryProfile {
            m_lo: pre + post,
            m_pre_cp_lo: pre,
            m_post_cp_lo: post,
        }
    }
}

/// Profiled LO-mode progress at a task's checkpoint.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointProfile {
    /// Average LO-mode time needed to reach the checkpoint.
    pub c_cp_lo: Time,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mem: Option<MemoryProfile>,
    /// Average total execution time measured while profiling. Differs from
    /// the task's `c_lo` only when the LO budget is deliberately overestimated;
    /// absent means "same as `c_lo`".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_lo_profiled: Option<Time>,
}

impl CheckpointProfile {
    pub fn new(c_cp_lo: Time) -> Self {
        CheckpointProfile {
            c_cp_lo,
            mem: None,
            c_lo_profiled: None,
        }
    }

    /// Position of the checkpoint as a fraction of the profiled total.
    pub fn fraction(&self, c_lo: Time) -> f64 {
        self.c_cp_lo as f64 / self.c_lo_profiled.unwrap_or(c_lo) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub level: Criticality,
    pub c_lo: Time,
    /// HI-mode budget. Zero for LC tasks unless a reduced imprecise budget is
    /// configured.
    #[serde(default)]
    pub c_hi: Time,
    pub period: Time,
    /// Lower number means higher priority. Zero marks "not yet assigned".
    #[serde(default)]
    pub priority: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<CheckpointProfile>,
}

impl Task {
    pub fn hc(id: u32, c_lo: Time, c_hi: Time, period: Time, priority: u32) -> Self {
        Task {
            id: TaskId(id),
            level: Criticality::Hi,
            c_lo,
            c_hi,
            period,
            priority,
            checkpoint: None,
        }
    }

    pub fn lc(id: u32, c_lo: Time, period: Time, priority: u32) -> Self {
        Task {
            id: TaskId(id),
            level: Criticality::Lo,
            c_lo,
            c_hi: 0,
            period,
            priority,
            checkpoint: None,
        }
    }

    pub fn with_checkpoint(mut self, profile: CheckpointProfile) -> Self {
        self.checkpoint = Some(profile);
        self
    }

    pub fn is_hc(&self) -> bool {
        self.level.is_hi()
    }

    /// Implicit deadlines: always equal to the period.
    pub fn deadline(&self) -> Time {
        self.period
    }

    /// The total execution time the task was profiled at, before any
    /// deliberate overestimation of `c_lo`.
    pub fn nominal_c_lo(&self) -> Time {
        self.checkpoint.and_then(|cp| cp.c_lo_profiled).unwrap_or(self.c_lo)
    }

    pub fn utilization_lo(&self) -> f64 {
        self.c_lo as f64 / self.period as f64
    }
}

/// An ordered collection of tasks, highest priority first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "TasksetDoc")]
pub struct Taskset {
    #[serde(default)]
    pub name: String,
    tasks: Vec<Task>,
}

impl Taskset {
    /// Creates a taskset, sorting by priority (ties by id).
    pub fn new(name: impl Into<String>, mut tasks: Vec<Task>) -> Self {
        tasks.sort_by_key(|t| (t.priority, t.id));
        Taskset {
            name: name.into(),
            tasks,
        }
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn get(&self, id: TaskId) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    /// Position of `id` in priority order.
    pub fn index_of(&self, id: TaskId) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }

    pub fn max_period(&self) -> Time {
        self.tasks.iter().map(|t| t.period).max().unwrap_or(0)
    }

    pub fn utilization_lo(&self) -> f64 {
        self.tasks.iter().map(Task::utilization_lo).sum()
    }

    /// Returns a copy with every task transformed by `f`, re-sorted.
    pub fn map_tasks(&self, f: impl FnMut(&Task) -> Task) -> Taskset {
        Taskset::new(self.name.clone(), self.tasks.iter().map(f).collect())
    }

    pub fn into_tasks(self) -> Vec<Task> {
        self.tasks
    }

    pub fn from_json(text: &str) -> Result<Taskset, Error> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("taskset serialization cannot fail")
    }

    pub fn load(path: &Path) -> Result<Taskset, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(path.display().to_string(), e))?;
        Taskset::from_json(&text)
    }
}

#[derive(Deserialize)]
struct TasksetDoc {
    #[serde(default)]
    name: String,
    tasks: Vec<Task>,
}

impl From<TasksetDoc> for Taskset {
    fn from(doc: TasksetDoc) -> Self {
        Taskset::new(doc.name, doc.tasks)
    }
}

/// One broken invariant found by [`validate_taskset`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub task: Option<TaskId>,
    pub kind: ViolationKind,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    EmptyTaskset,
    DuplicateId,
    DuplicatePriority(u32),
    ZeroPeriod,
    ZeroBudget,
    HiBudgetNotAboveLo,
    LcHiBudgetAboveLo,
    CheckpointOnLcTask,
    CheckpointOutOfRange,
    MemoryCountZero,
    MemorySplitMismatch,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(id) = self.task {
            write!(f, "{id}: ")?;
        }
        match &self.kind {
            ViolationKind::EmptyTaskset => f.write_str("taskset is empty"),
            ViolationKind::DuplicateId => f.write_str("duplicate task id"),
            ViolationKind::DuplicatePriority(p) => write!(f, "duplicate priority {p}"),
            ViolationKind::ZeroPeriod => f.write_str("period must be positive"),
            ViolationKind::ZeroBudget => f.write_str("c_lo must be positive"),
            ViolationKind::HiBudgetNotAboveLo => f.write_str("c_hi must exceed c_lo"),
            ViolationKind::LcHiBudgetAboveLo => f.write_str("LC c_hi must not exceed c_lo"),
            ViolationKind::CheckpointOnLcTask => f.write_str("only HC tasks carry a checkpoint"),
            ViolationKind::CheckpointOutOfRange => f.write_str("checkpoint must satisfy 0 < c_cp_lo < c_lo"),
            ViolationKind::MemoryCountZero => f.write_str("memory counts must be positive"),
            ViolationKind::MemorySplitMismatch => f.write_str("m_pre_cp_lo + m_post_cp_lo must equal m_lo"),
        }
    }
}

/// Checks every task and taskset invariant; an empty result means valid.
pub fn validate_taskset(ts: &Taskset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |task: Option<TaskId>, kind| out.push(Violation { task, kind });

    if ts.is_empty() {
        push(None, ViolationKind::EmptyTaskset);
    }
    let mut ids = HashSet::new();
    let mut prios = HashSet::new();
    for t in ts.tasks() {
        let id = Some(t.id);
        if !ids.insert(t.id) {
            push(id, ViolationKind::DuplicateId);
        }
        if !prios.insert(t.priority) {
            push(id, ViolationKind::DuplicatePriority(t.priority));
        }
        if t.period == 0 {
            push(id, ViolationKind::ZeroPeriod);
        }
        if t.c_lo == 0 {
            push(id, ViolationKind::ZeroBudget);
        }
        match t.level {
            Criticality::Hi if t.c_hi <= t.c_lo => push(id, ViolationKind::HiBudgetNotAboveLo),
            Criticality::Lo if t.c_hi > t.c_lo => push(id, ViolationKind::LcHiBudgetAboveLo),
            _ => {}
        }
        if let Some(cp) = &t.checkpoint {
            if !t.is_hc() {
                push(id, ViolationKind::CheckpointOnLcTask);
            }
            if cp.c_cp_lo == 0 || cp.c_cp_lo >= t.nominal_c_lo() {
                push(id, ViolationKind::CheckpointOutOfRange);
            }
            if let Some(m) = &cp.mem {
                if m.m_lo == 0 || m.m_pre_cp_lo == 0 || m.m_post_cp_lo == 0 {
                    push(id, ViolationKind::MemoryCountZero);
                }
                if m.m_pre_cp_lo.checked_add(m.m_post_cp_lo) != Some(m.m_lo) {
                    push(id, ViolationKind::MemorySplitMismatch);
                }
            }
        }
    }
    out
}

/// Interference sets of one task: every task with strictly higher priority,
/// split by criticality.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PriorityBands {
    pub hp: Vec<TaskId>,
    pub hp_hc: Vec<TaskId>,
    pub hp_lc: Vec<TaskId>,
}

pub fn priority_bands(ts: &Taskset, id: TaskId) -> Result<PriorityBands, Error> {
    let me = ts.get(id).ok_or(Error::UnknownTask(id))?;
    let mut bands = PriorityBands::default();
    for t in ts.tasks().iter().filter(|t| t.priority < me.priority) {
        bands.hp.push(t.id);
        if t.is_hc() {
            bands.hp_hc.push(t.id);
        } else {
            bands.hp_lc.push(t.id);
        }
    }
    Ok(bands)
}

/// The mixed-criticality example taskset used throughout the docs and tests,
/// in integer units (`scale` ticks per unit).
pub fn example_taskset(scale: Time) -> Taskset {
    Taskset::new(
        "example",
        vec![
            Task::hc(1, 3 * scale, 6 * scale, 10 * scale, 1),
            Task::lc(2, 2 * scale, 9 * scale, 2),
            Task::hc(3, 5 * scale, 10 * scale, 50 * scale, 3),
        ],
    )
}
