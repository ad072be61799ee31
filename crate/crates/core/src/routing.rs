//! Intra-cluster routing over a minimum spanning tree rooted at the cluster head.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Result, SimError};
pub use crate::geometry::euclidean_distance;
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeEdge {
    pub parent: usize,
    pub child: usize,
    pub length: f64,
}

/// Spanning tree of one cluster. Edges are stored in the order Prim added them.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTree {
    pub root: usize,
    pub edges: Vec<TreeEdge>,
    /// Maximum hop count from any node to the root.
    pub depth: usize,
}

impl ClusterTree {
    pub fn node_count(&self) -> usize {
        self.edges.len() + 1
    }

    /// Hop count of every node to the root.
    pub fn depths(&self) -> BTreeMap<usize, usize> {
        let mut depth = BTreeMap::from([(self.root, 0)]);
        // Prim order guarantees a parent is inserted before its children.
        for e in &self.edges {
            let d = depth[&e.parent] + 1;
            depth.insert(e.child, d);
        }
        depth
    }
}

/// Prim's algorithm over the complete Euclidean graph of `nodes`, grown from `root`.
///
/// Equal-weight candidates resolve to the lower outside-node id, then the
/// lower inside-node id, so the output is fully determined by the input.
pub fn build_mst(nodes: &[(usize, Point)], root: usize) -> Result<ClusterTree> {
    let mut seen = BTreeSet::new();
    for (id, _) in nodes {
        if !seen.insert(*id) {
            return Err(SimError::Input(format!("duplicate node id {id} in cluster")));
        }
    }
    let root_idx = nodes
        .iter()
        .position(|(id, _)| *id == root)
        .ok_or_else(|| SimError::Input(format!("root {root} is not a cluster node")))?;

    let n = nodes.len();
    let mut in_tree = vec![false; n];
    // Best known link for each outside node: (distance, inside node index).
    let mut best: Vec<Option<(f64, usize)>> = vec![None; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));

    let relax = |u: usize, in_tree: &[bool], best: &mut [Option<(f64, usize)>]| {
        let (uid, up) = nodes[u];
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let d = euclidean_distance(up, nodes[v].1);
            let better = match best[v] {
                None => true,
                Some((bd, bi)) => d < bd || (d == bd && uid < nodes[bi].0),
            };
            if better {
                best[v] = Some((d, u));
            }
        }
    };

    in_tree[root_idx] = true;
    relax(root_idx, &in_tree, &mut best);
    let mut depth_of = vec![0usize; n];
    let mut depth = 0;

    for _ in 1..n {
        let mut pick: Option<(f64, usize, usize)> = None;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let (d, u) = best[v].expect("every outside node has a candidate link");
            let better = match pick {
                None => true,
                Some((pd, pv, _)) => d < pd || (d == pd && nodes[v].0 < nodes[pv].0),
            };
            if better {
                pick = Some((d, v, u));
            }
        }
        let (length, v, u) = pick.expect("at least one node remains outside the tree");
        in_tree[v] = true;
        depth_of[v] = depth_of[u] + 1;
        depth = depth.max(depth_of[v]);
        edges.push(TreeEdge {
            parent: nodes[u].0,
            child: nodes[v].0,
            length,
        });
        relax(v, &in_tree, &mut best);
    }

    Ok(ClusterTree { root, edges, depth })
}

pub fn total_weight(tree: &ClusterTree) -> f64 {
    tree.edges.iter().map(|e| e.length).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledSend {
    pub sender: usize,
    pub receiver: usize,
    pub distance: f64,
}

/// One send per non-root node along its parent edge, deepest nodes first and
/// ascending id within a depth, so every node has heard all of its children
/// before it transmits.
pub fn transmission_schedule(tree: &ClusterTree) -> Vec<ScheduledSend> {
    let depths = tree.depths();
    let mut sends: Vec<(usize, ScheduledSend)> = tree
        .edges
        .iter()
        .map(|e| {
            (
                depths[&e.child],
                ScheduledSend {
                    sender: e.child,
                    receiver: e.parent,
                    distance: e.length,
                },
            )
        })
        .collect();
    sends.sort_by(|(da, a), (db, b)| db.cmp(da).then(a.sender.cmp(&b.sender)));
    sends.into_iter().map(|(_, s)| s).collect()
}

/// Packets received per node under `schedule`, keyed by receiver id.
pub fn receiver_counts(schedule: &[ScheduledSend]) -> BTreeMap<usize, u64> {
    let mut counts = BTreeMap::new();
    for s in schedule {
        *counts.entry(s.receiver).or_insert(0) += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nodes(xy: &[(f64, f64)]) -> Vec<(usize, Point)> {
        xy.iter().enumerate().map(|(i, &(x, y))| (i, Point::new(x, y))).collect()
    }

    #[test]
    fn single_node_has_no_edges() {
        let t = build_mst(&nodes(&[(4.0, 4.0)]), 0).unwrap();
        assert!(t.edges.is_empty());
        assert_eq!(t.depth, 0);
        assert_eq!(total_weight(&t), 0.0);
        assert!(transmission_schedule(&t).is_empty());
    }

    #[test]
    fn two_nodes() {
        let t = build_mst(&nodes(&[(0.0, 0.0), (3.0, 4.0)]), 1).unwrap();
        assert_eq!(t.edges, vec![TreeEdge { parent: 1, child: 0, length: 5.0 }]);
    }

    #[test]
    fn unit_square_weight_three() {
        let sq = nodes(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        let t = build_mst(&sq, 0).unwrap();
        assert_eq!(total_weight(&t), 3.0);
        assert_eq!(t.node_count(), 4);
        // Ties on length go to the lower outside id.
        assert_eq!(t.edges[0].child, 1);
    }

    #[test]
    fn colocated_nodes_span_with_zero_edges() {
        let t = build_mst(&nodes(&[(2.0, 2.0); 5]), 3).unwrap();
        assert_eq!(t.edges.len(), 4);
        assert_eq!(total_weight(&t), 0.0);
        // Equal lengths prefer the lower inside id: 0 hangs off the root, the rest off 0.
        assert_eq!(t.depth, 2);
    }

    #[test]
    fn scaling_scales_weight() {
        let base = nodes(&[(0.0, 0.0), (3.0, 1.0), (5.0, 7.0), (2.0, 9.0), (8.0, 2.0)]);
        let scaled: Vec<_> = base.iter().map(|&(i, p)| (i, Point::new(p.x * 2.5, p.y * 2.5))).collect();
        let w = total_weight(&build_mst(&base, 0).unwrap());
        let ws = total_weight(&build_mst(&scaled, 0).unwrap());
        assert!((ws - 2.5 * w).abs() < 1e-12);
    }

    #[test]
    fn rejects_duplicate_ids_and_missing_root() {
        let dup = vec![(1, Point::new(0.0, 0.0)), (1, Point::new(1.0, 0.0))];
        assert!(matches!(build_mst(&dup, 1), Err(SimError::Input(_))));
        assert!(build_mst(&nodes(&[(0.0, 0.0)]), 7).is_err());
    }

    #[test]
    fn schedule_star_sorted_by_child() {
        let star = vec![(10, Point::new(0.0, 0.0)), (4, Point::new(1.0, 0.0)), (2, Point::new(-1.0, 0.0))];
        let sched = transmission_schedule(&build_mst(&star, 10).unwrap());
        assert_eq!(sched.iter().map(|s| (s.sender, s.receiver)).collect::<Vec<_>>(), vec![(2, 10), (4, 10)]);
    }

    #[test]
    fn schedule_chain_leaf_first() {
        // a=0 -- b=1 -- root=2 along a line.
        let chain = nodes(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)]);
        let t = build_mst(&chain, 2).unwrap();
        assert_eq!(t.depth, 2);
        let sched = transmission_schedule(&t);
        assert_eq!(sched.iter().map(|s| (s.sender, s.receiver)).collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
        let counts = receiver_counts(&sched);
        assert_eq!(counts[&1], 1);
        assert_eq!(counts[&2], 1);
    }

    mod props {
        use super::*;
        use proptest::collection::vec;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn schedule_complete_and_ordered(pts in vec((0.0f64..100.0, 0.0f64..100.0), 1..30), root_pick in 0usize..30) {
                let ns = nodes(&pts);
                let root = root_pick % ns.len();
                let t = build_mst(&ns, root).unwrap();
                prop_assert_eq!(t.edges.len(), ns.len() - 1);
                let sched = transmission_schedule(&t);
                let senders: BTreeSet<usize> = sched.iter().map(|s| s.sender).collect();
                prop_assert_eq!(senders.len(), sched.len());
                prop_assert!(!senders.contains(&root));
                prop_assert_eq!(senders.len(), ns.len() - 1);
                // A node sends only after every child has sent to it.
                let pos: BTreeMap<usize, usize> = sched.iter().enumerate().map(|(k, s)| (s.sender, k)).collect();
                for s in &sched {
                    if let Some(&k) = pos.get(&s.receiver) {
                        prop_assert!(pos[&s.sender] < k);
                    }
                }
            }

            #[test]
            fn deterministic(pts in vec((0.0f64..10.0, 0.0f64..10.0), 1..20)) {
                let rounded: Vec<_> = pts.iter().map(|&(x, y)| (x.round(), y.round())).collect();
                let ns = nodes(&rounded);
                prop_assert_eq!(build_mst(&ns, 0).unwrap(), build_mst(&ns, 0).unwrap());
            }
        }
    }
}
