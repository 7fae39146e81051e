//! Loop detection and checkpoint placement on control-flow graphs.

mod graph;
mod loops;
mod placement;

pub use graph::{parse_cfg, Cfg};
pub use loops::{compute_loops, dominators, LoopInfo};
pub use placement::{
    annotate, insert_checkpoints, place_checkpoints, preheader_name, Checkpoint, CheckpointId, CheckpointPlacement,
};

/// The two-loop example graph: `BB2..BB3` and `BB6..BB7` are loops joined by
/// the straight-line blocks `BB4` and `BB5`.
pub fn two_loop_example() -> Cfg {
    let edges = [
        ("BB1", "BB2"),
        ("BB2", "BB3"),
        ("BB3", "BB2"),
        ("BB2", "BB4"),
        ("BB4", "BB5"),
        ("BB5", "BB6"),
        ("BB6", "BB7"),
        ("BB7", "BB6"),
        ("BB6", "BB8"),
    ];
    let blocks = (1..=8).map(|i| format!("BB{i}")).collect();
    let edges: Vec<(String, String)> = edges.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    Cfg::new("main", blocks, &edges, "BB1").expect("example graph is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Cfg {
        let blocks = (0..n).map(|i| format!("B{i}")).collect();
        let edges: Vec<(String, String)> = edges.iter().map(|(a, b)| (format!("B{a}"), format!("B{b}"))).collect();
        Cfg::new("f", blocks, &edges, "B0").unwrap()
    }

    fn names(cfg: &Cfg, blocks: impl IntoIterator<Item = usize>) -> Vec<String> {
        blocks.into_iter().map(|b| cfg.name(b).to_string()).collect()
    }

    #[test]
    fn two_loop_example_structure() {
        let g = two_loop_example();
        assert_eq!(g.len(), 8);
        let loops = compute_loops(&g);
        assert_eq!(names(&g, loops.headers.iter().copied()), ["BB2", "BB6"]);
        let idx = |n: &str| g.index(n).unwrap();
        assert!(loops.is_loop_before[idx("BB6")]);
        assert!(!loops.is_loop_before[idx("BB2")]);
        assert_eq!(loops.loop_id[idx("BB3")], loops.loop_id[idx("BB2")]);
        assert_eq!(loops.loop_id[idx("BB5")], None);
    }

    #[test]
    fn two_loop_example_gets_one_checkpoint_in_bb5() {
        let (_, placement) = place_checkpoints(&two_loop_example());
        assert_eq!(placement.checkpoints.len(), 1);
        let cp = &placement.checkpoints[0];
        assert_eq!((cp.id.block.as_str(), cp.header.as_str()), ("BB5", "BB6"));
        assert!(!cp.needs_preheader());
    }

    #[test]
    fn dominators_of_the_example() {
        let g = two_loop_example();
        let dom = dominators(&g);
        let idx = |n: &str| g.index(n).unwrap();
        assert!(dom[idx("BB8")][idx("BB6")]);
        assert!(dom[idx("BB3")][idx("BB2")]);
        assert!(!dom[idx("BB2")][idx("BB3")]);
    }

    #[test]
    fn loop_free_dag() {
        let g = graph(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        let loops = compute_loops(&g);
        assert!(loops.headers.is_empty());
        assert!(loops.is_loop_before.iter().all(|&x| !x));
        assert!(insert_checkpoints(&g, &loops).checkpoints.is_empty());
    }

    #[test]
    fn triple_nest_is_one_loop() {
        // B1 { B2 { B3 { B4 } } } then B5
        let g = graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 3), (3, 2), (2, 1), (1, 5)]);
        let loops = compute_loops(&g);
        assert_eq!(loops.headers, vec![1]);
        assert!((1..=4).all(|b| loops.loop_id[b] == Some(0)));
        assert_eq!(loops.loop_id[5], None);
        assert!(insert_checkpoints(&g, &loops).checkpoints.is_empty());
    }

    #[test]
    fn single_loop_gets_no_checkpoint() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 1), (1, 3)]);
        let (_, placement) = place_checkpoints(&g);
        assert!(placement.checkpoints.is_empty());
    }

    #[test]
    fn three_sequential_loops_get_two_checkpoints() {
        // loops at B1, B4, B7 with straight-line blocks between them
        let g = graph(
            10,
            &[
                (0, 1),
                (1, 2),
                (2, 1),
                (1, 3),
                (3, 4),
                (4, 5),
                (5, 4),
                (4, 6),
                (6, 7),
                (7, 8),
                (8, 7),
                (7, 9),
            ],
        );
        let (_, placement) = place_checkpoints(&g);
        assert_eq!(placement.blocks(), ["B3", "B6"]);
    }

    #[test]
    fn adjacent_loops_get_a_synthetic_preheader() {
        // the first loop's header exits straight into the second header
        let g = graph(5, &[(0, 1), (1, 2), (2, 1), (1, 3), (3, 4), (4, 3)]);
        let (_, placement) = place_checkpoints(&g);
        assert_eq!(placement.checkpoints.len(), 1);
        let cp = &placement.checkpoints[0];
        assert_eq!(cp.id.block, "B3.preheader");
        assert_eq!(cp.preheader_for, ["B1"]);

        let annotated = annotate(&g, &placement).unwrap();
        let pre = annotated.index("B3.preheader").unwrap();
        assert_eq!(names(&annotated, annotated.successors(pre).iter().copied()), ["B3"]);
        // re-running on the annotated graph finds the same checkpoint
        let again = insert_checkpoints(&annotated, &compute_loops(&annotated));
        assert_eq!(again.blocks(), placement.blocks());
    }

    #[test]
    fn irreducible_cycle_is_skipped() {
        // B1 <-> B2, both entered from B0: neither dominates the other
        let g = graph(4, &[(0, 1), (0, 2), (1, 2), (2, 1), (2, 3)]);
        let loops = compute_loops(&g);
        assert!(loops.headers.is_empty());
        assert_eq!(loops.irreducible_edges, [(1, 2), (2, 1)]);
    }

    #[test]
    fn placement_is_idempotent() {
        let g = two_loop_example();
        let loops = compute_loops(&g);
        assert_eq!(insert_checkpoints(&g, &loops), insert_checkpoints(&g, &loops));
    }
}
