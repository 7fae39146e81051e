//! Dominators and natural loops.

use serde::Serialize;

use super::graph::Cfg;

/// Loop structure of a function. Nested loops are folded into their
/// outermost loop: every block of the nest carries the outer loop's id and
/// only the outer header counts as a header.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LoopInfo {
    /// Outermost loop containing each block.
    pub loop_id: Vec<Option<usize>>,
    /// Header block of each outermost loop, indexed by loop id.
    pub headers: Vec<usize>,
    /// Whether some other loop can execute before the block.
    pub is_loop_before: Vec<bool>,
    /// Edges of cycles that have no dominating header, i.e. the edges that
    /// stay inside a strongly connected region once back edges are removed.
    /// Such regions form no natural loop and are ignored.
    pub irreducible_edges: Vec<(usize, usize)>,
}

impl LoopInfo {
    pub fn is_header(&self, b: usize) -> bool {
        self.headers.contains(&b)
    }

    pub fn blocks_of(&self, id: usize) -> impl Iterator<Item = usize> + '_ {
        self.loop_id
            .iter()
            .enumerate()
            .filter(move |(_, l)| **l == Some(id))
            .map(|(b, _)| b)
    }
}

/// Reverse postorder of a depth-first walk from the entry, visiting
/// successors in edge order.
pub(crate) fn reverse_postorder(cfg: &Cfg) -> Vec<usize> {
    let mut seen = vec![false; cfg.len()];
    let mut post = Vec::with_capacity(cfg.len());
    let mut stack = vec![(cfg.entry(), 0usize)];
    seen[cfg.entry()] = true;
    while let Some((b, next)) = stack.pop() {
        if let Some(&s) = cfg.successors(b).get(next) {
            stack.push((b, next + 1));
            if !seen[s] {
                seen[s] = true;
                stack.push((s, 0));
            }
        } else {
            post.push(b);
        }
    }
    post.reverse();
    post
}

/// `dom[b][a]` is true when `a` dominates `b`. Classic iterative data-flow
/// over reverse postorder, run to a fixed point.
pub fn dominators(cfg: &Cfg) -> Vec<Vec<bool>> {
    let n = cfg.len();
    let mut dom = vec![vec![true; n]; n];
    dom[cfg.entry()] = (0..n).map(|a| a == cfg.entry()).collect();
    let order = reverse_postorder(cfg);
    let mut changed = true;
    while changed {
        changed = false;
        for &b in order.iter().filter(|&&b| b != cfg.entry()) {
            let mut new = vec![true; n];
            for &p in cfg.predecessors(b) {
                for (x, d) in new.iter_mut().zip(&dom[p]) {
                    *x &= *d;
                }
            }
            new[b] = true;
            if new != dom[b] {
                dom[b] = new;
                changed = true;
            }
        }
    }
    dom
}

/// Body of the natural loop of back edge `tail -> header`.
fn natural_loop(cfg: &Cfg, tail: usize, header: usize) -> Vec<bool> {
    let mut body = vec![false; cfg.len()];
    body[header] = true;
    let mut stack = vec![tail];
    while let Some(b) = stack.pop() {
        if std::mem::replace(&mut body[b], true) {
            continue;
        }
        stack.extend(cfg.predecessors(b).iter().copied().filter(|&p| !body[p]));
    }
    body
}

/// Strongly connected component of every block over the edges `keep` accepts
/// (Kosaraju, iterative).
fn components(cfg: &Cfg, keep: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let n = cfg.len();
    let mut seen = vec![false; n];
    let mut finish = Vec::with_capacity(n);
    for root in 0..n {
        if std::mem::replace(&mut seen[root], true) {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        while let Some((b, next)) = stack.pop() {
            let succ = cfg.successors(b);
            match succ.get(next) {
                Some(&s) => {
                    stack.push((b, next + 1));
                    if keep(b, s) && !seen[s] {
                        seen[s] = true;
                        stack.push((s, 0));
                    }
                }
                None => finish.push(b),
            }
        }
    }
    let mut comp = vec![usize::MAX; n];
    for (c, &root) in finish.iter().rev().enumerate() {
        if comp[root] != usize::MAX {
            continue;
        }
        comp[root] = c;
        let mut stack = vec![root];
        while let Some(b) = stack.pop() {
            for &p in cfg.predecessors(b) {
                if keep(p, b) && comp[p] == usize::MAX {
                    comp[p] = c;
                    stack.push(p);
                }
            }
        }
    }
    comp
}

pub fn compute_loops(cfg: &Cfg) -> LoopInfo {
    let n = cfg.len();
    let dom = dominators(cfg);
    let order = reverse_postorder(cfg);
    let mut rpo_pos = vec![0; n];
    for (i, &b) in order.iter().enumerate() {
        rpo_pos[b] = i;
    }

    // Natural loops, one per header (back edges to the same header merge).
    let mut bodies: Vec<(usize, Vec<bool>)> = Vec::new();
    for (u, v) in cfg.edges().filter(|&(u, v)| dom[u][v]) {
        let body = natural_loop(cfg, u, v);
        match bodies.iter_mut().find(|(h, _)| *h == v) {
            Some((_, existing)) => existing.iter_mut().zip(body).for_each(|(a, b)| *a |= b),
            None => bodies.push((v, body)),
        }
    }

    // Whatever still cycles without back edges is irreducible. Taking every
    // edge of such a region keeps the result independent of visit order.
    let region = components(cfg, |u, v| !dom[u][v]);
    let irreducible_edges: Vec<(usize, usize)> = cfg
        .edges()
        .filter(|&(u, v)| !dom[u][v] && region[u] == region[v])
        .collect();
    for &(u, v) in &irreducible_edges {
        log::warn!(
            "{}: edge {} -> {} lies on a cycle without a dominating header; ignoring it",
            cfg.function,
            cfg.name(u),
            cfg.name(v)
        );
    }

    // Keep only loops whose header lies in no other loop; number them in
    // program order. Distinct natural loops are either nested or disjoint.
    let mut outer: Vec<&(usize, Vec<bool>)> = bodies
        .iter()
        .filter(|(h, _)| !bodies.iter().any(|(h2, other)| h2 != h && other[*h]))
        .collect();
    outer.sort_by_key(|(h, _)| rpo_pos[*h]);

    let mut loop_id = vec![None; n];
    let mut headers = Vec::with_capacity(outer.len());
    for (id, (h, body)) in outer.iter().enumerate() {
        headers.push(*h);
        for b in (0..n).filter(|&b| body[b]) {
            loop_id[b] = Some(id);
        }
    }

    // A block is after a loop when it is reachable from the loop's exits and
    // cannot lead back into it. Leading back is only possible through a cycle
    // without a dominating header, which orders neither side.
    let mut is_loop_before = vec![false; n];
    for (id, &header) in headers.iter().enumerate() {
        let exits: Vec<usize> = (0..n)
            .filter(|&b| loop_id[b] == Some(id))
            .flat_map(|b| cfg.successors(b).iter().copied())
            .filter(|&s| loop_id[s] != Some(id))
            .collect();
        let after = cfg.reachable_from(&exits, |b| loop_id[b] != Some(id));
        let mut returns = vec![false; n];
        let mut stack = vec![header];
        while let Some(b) = stack.pop() {
            for &p in cfg.predecessors(b) {
                if !std::mem::replace(&mut returns[p], true) {
                    stack.push(p);
                }
            }
        }
        for b in (0..n).filter(|&b| after[b] && !returns[b] && loop_id[b] != Some(id)) {
            is_loop_before[b] = true;
        }
    }

    LoopInfo {
        loop_id,
        headers,
        is_loop_before,
        irreducible_edges,
    }
}
