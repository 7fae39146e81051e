//! Checkpoint placement between outermost loops.
//!
//! A depth-first walk from the entry visits every block once. Each outermost
//! loop header that some other loop can precede gets a checkpoint at the end
//! of the block leading into it. The first loop of any path therefore gets
//! none, and no checkpoint ever lands inside a loop body.

use serde::Serialize;

use super::graph::Cfg;
use super::loops::{compute_loops, reverse_postorder, LoopInfo};
use crate::Error;

/// Unique checkpoint id: the function and the block holding the checkpoint.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CheckpointId {
    pub function: String,
    pub block: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Checkpoint {
    pub id: CheckpointId,
    /// Loop header the checkpoint precedes.
    pub header: String,
    /// Outside predecessors of the header that are redirected through a new
    /// preheader block. Empty when an existing block hosts the checkpoint.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub preheader_for: Vec<String>,
}

impl Checkpoint {
    pub fn needs_preheader(&self) -> bool {
        !self.preheader_for.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckpointPlacement {
    pub function: String,
    pub checkpoints: Vec<Checkpoint>,
}

impl CheckpointPlacement {
    pub fn blocks(&self) -> Vec<String> {
        self.checkpoints.iter().map(|c| c.id.block.clone()).collect()
    }
}

/// Name of the synthetic block inserted in front of `header`.
pub fn preheader_name(header: &str) -> String {
    format!("{header}.preheader")
}

fn place_before(cfg: &Cfg, loops: &LoopInfo, header: usize) -> Checkpoint {
    let own = loops.loop_id[header];
    let outside: Vec<usize> = cfg
        .predecessors(header)
        .iter()
        .copied()
        .filter(|&p| loops.loop_id[p] != own)
        .collect();
    let host = match outside.as_slice() {
        // A lone predecessor outside every loop that only leads here can take
        // the checkpoint itself.
        [p] if loops.loop_id[*p].is_none() && cfg.successors(*p) == [header] => Some(*p),
        _ => None,
    };
    let header_name = cfg.name(header).to_string();
    match host {
        Some(p) => Checkpoint {
            id: CheckpointId {
                function: cfg.function.clone(),
                block: cfg.name(p).to_string(),
            },
            header: header_name,
            preheader_for: Vec::new(),
        },
        None => Checkpoint {
            id: CheckpointId {
                function: cfg.function.clone(),
                block: preheader_name(&header_name),
            },
            preheader_for: outside.iter().map(|&p| cfg.name(p).to_string()).collect(),
            header: header_name,
        },
    }
}

pub fn insert_checkpoints(cfg: &Cfg, loops: &LoopInfo) -> CheckpointPlacement {
    let mut checkpoints = Vec::new();
    // Reverse postorder is a depth-first visit order in which every block
    // appears once.
    for b in reverse_postorder(cfg) {
        if loops.is_header(b) && loops.is_loop_before[b] {
            checkpoints.push(place_before(cfg, loops, b));
        }
    }
    CheckpointPlacement {
        function: cfg.function.clone(),
        checkpoints,
    }
}

/// The graph with any synthetic preheaders materialized.
pub fn annotate(cfg: &Cfg, placement: &CheckpointPlacement) -> Result<Cfg, Error> {
    let mut out = cfg.clone();
    for cp in placement.checkpoints.iter().filter(|c| c.needs_preheader()) {
        let header = out.index(&cp.header).expect("header exists");
        let from: Vec<usize> = cp.preheader_for.iter().filter_map(|p| out.index(p)).collect();
        out = out.with_preheader(header, &from, &cp.id.block)?;
    }
    Ok(out)
}

/// Loop analysis and placement in one step.
pub fn place_checkpoints(cfg: &Cfg) -> (LoopInfo, CheckpointPlacement) {
    let loops = compute_loops(cfg);
    let placement = insert_checkpoints(cfg, &loops);
    (loops, placement)
}
