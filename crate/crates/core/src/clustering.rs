//! Cluster-head election and cluster membership.
//!
//! Each round every alive node is scored on four criteria normalized to
//! `[0, 1]`: residual energy, closeness to the base station, local density
//! centrality and a convergence metric. The score is their arithmetic mean;
//! nodes scoring strictly above the configured percentile become cluster
//! heads and every other alive node joins its nearest head.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::{euclidean_distance, Point};

pub mod fuzzy;

pub use fuzzy::{trapezoid_membership, FuzzyGrader, FuzzyLabel, TrapezoidParams};

/// Raw, un-normalized election criteria for one alive node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawCriteria {
    pub node_id: usize,
    pub energy: f64,
    pub dist_to_bs: f64,
    pub centrality: f64,
    pub theta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeScore {
    pub node_id: usize,
    pub e_norm: f64,
    pub d_norm: f64,
    pub c_norm: f64,
    pub theta_norm: f64,
    pub p_ch: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterLayout {
    pub ch_ids: BTreeSet<usize>,
    /// member id -> cluster-head id
    pub assignment: BTreeMap<usize, usize>,
    /// Alive non-heads with no head inside `r_cluster` (strict mode only).
    pub orphan_ids: BTreeSet<usize>,
}

impl ClusterLayout {
    /// Members of the cluster headed by `ch`, in ascending id order.
    pub fn members_of(&self, ch: usize) -> Vec<usize> {
        self.assignment
            .iter()
            .filter(|(_, &head)| head == ch)
            .map(|(&m, _)| m)
            .collect()
    }

    /// Size of the largest cluster, head included.
    pub fn max_cluster_size(&self) -> usize {
        let mut sizes: BTreeMap<usize, usize> = self.ch_ids.iter().map(|&c| (c, 1)).collect();
        for head in self.assignment.values() {
            *sizes.entry(*head).or_default() += 1;
        }
        sizes.values().copied().max().unwrap_or(0)
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(SimError::Config(format!("radius must be > 0, got {radius}")));
    }
    Ok(())
}

/// Number of other nodes within `radius` of each node (boundary inclusive).
pub fn local_density_centrality(positions: &[Point], radius: f64) -> Result<Vec<usize>> {
    Ok(neighbor_sets(positions, radius)?.iter().map(Vec::len).collect())
}

/// Indices of the other nodes within `radius` of each node, ascending.
pub fn neighbor_sets(positions: &[Point], radius: f64) -> Result<Vec<Vec<usize>>> {
    check_radius(radius)?;
    let n = positions.len();
    let mut sets = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if euclidean_distance(positions[i], positions[j]) <= radius {
                sets[i].push(j);
                sets[j].push(i);
            }
        }
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    Ok(sets)
}

/// `1 - mean neighbor distance / radius`, or 0 for a node with no neighbors.
pub fn convergence_metric(positions: &[Point], neighbors: &[Vec<usize>], radius: f64) -> Result<Vec<f64>> {
    check_radius(radius)?;
    if positions.len() != neighbors.len() {
        return Err(SimError::Shape(format!(
            "{} positions but {} neighbor sets",
            positions.len(),
            neighbors.len()
        )));
    }
    Ok(positions
        .iter()
        .zip(neighbors)
        .map(|(&p, nbrs)| {
            if nbrs.is_empty() {
                return 0.0;
            }
            let mean = nbrs.iter().map(|&j| euclidean_distance(p, positions[j])).sum::<f64>() / nbrs.len() as f64;
            (1.0 - mean / radius).clamp(0.0, 1.0)
        })
        .collect())
}

fn ratio_or_zero(value: f64, max: f64) -> f64 {
    if max > 0.0 {
        (value / max).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Normalizes the four criteria by their maxima over `raw`; `p_ch` is left at 0.
pub fn normalize_scores(raw: &[RawCriteria]) -> Result<Vec<NodeScore>> {
    if raw.is_empty() {
        return Err(SimError::State("cannot score an empty alive set".into()));
    }
    let max_of = |f: fn(&RawCriteria) -> f64| raw.iter().map(f).fold(0.0_f64, f64::max);
    let e_max = max_of(|r| r.energy);
    let d_max = max_of(|r| r.dist_to_bs);
    let c_max = max_of(|r| r.centrality);
    let t_max = max_of(|r| r.theta);

    Ok(raw
        .iter()
        .map(|r| NodeScore {
            node_id: r.node_id,
            e_norm: ratio_or_zero(r.energy, e_max),
            d_norm: if d_max > 0.0 { 1.0 - ratio_or_zero(r.dist_to_bs, d_max) } else { 0.0 },
            c_norm: ratio_or_zero(r.centrality, c_max),
            theta_norm: ratio_or_zero(r.theta, t_max),
            p_ch: 0.0,
        })
        .collect())
}

/// Arithmetic mean of the four normalized criteria.
pub fn ch_probability(score: &NodeScore) -> Result<f64> {
    let fields = [score.e_norm, score.d_norm, score.c_norm, score.theta_norm];
    if fields.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(SimError::Domain(format!(
            "normalized criteria must lie in [0, 1], got {fields:?} for node {}",
            score.node_id
        )));
    }
    Ok((score.e_norm + score.d_norm + score.c_norm + score.theta_norm) / 4.0)
}

/// Fills in `p_ch` on every score.
pub fn score_nodes(raw: &[RawCriteria]) -> Result<Vec<NodeScore>> {
    let mut scores = normalize_scores(raw)?;
    for s in &mut scores {
        s.p_ch = ch_probability(s)?;
    }
    Ok(scores)
}

/// Nearest-rank empirical quantile of `values` at `q` in `(0, 1)`.
pub fn nearest_rank_quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // The epsilon absorbs representation error in products like 0.95 * 100.
    let rank = ((q * n as f64) - 1e-9).ceil().clamp(1.0, n as f64) as usize;
    sorted[rank - 1]
}

/// Heads are the nodes scoring strictly above the `percentile` quantile of
/// `p_ch`. Falls back to the single best node (lowest id on ties) so the
/// result is never empty.
pub fn select_cluster_heads(scores: &[NodeScore], percentile: f64) -> Result<BTreeSet<usize>> {
    if scores.is_empty() {
        return Err(SimError::State("no alive nodes to elect cluster heads from".into()));
    }
    if !(percentile > 0.0 && percentile < 1.0) {
        return Err(SimError::Config(format!("ch_percentile must lie in (0, 1), got {percentile}")));
    }
    let values: Vec<f64> = scores.iter().map(|s| s.p_ch).collect();
    let threshold = nearest_rank_quantile(&values, percentile);
    let heads: BTreeSet<usize> = scores.iter().filter(|s| s.p_ch > threshold).map(|s| s.node_id).collect();
    if !heads.is_empty() {
        return Ok(heads);
    }
    let best = scores
        .iter()
        .max_by(|a, b| a.p_ch.total_cmp(&b.p_ch).then(b.node_id.cmp(&a.node_id)))
        .expect("scores is non-empty");
    Ok(BTreeSet::from([best.node_id]))
}

/// Assigns every alive non-head in `nodes` to its nearest head (lowest head id
/// on ties). With `strict`, nodes farther than `r_cluster` from every head are
/// orphaned instead.
pub fn assign_members(
    nodes: &[(usize, Point)],
    ch_ids: &BTreeSet<usize>,
    r_cluster: f64,
    strict: bool,
) -> Result<ClusterLayout> {
    if ch_ids.is_empty() {
        return Err(SimError::State("cannot assign members without cluster heads".into()));
    }
    let position: BTreeMap<usize, Point> = nodes.iter().copied().collect();
    let heads: Vec<(usize, Point)> = ch_ids
        .iter()
        .map(|&id| {
            position
                .get(&id)
                .map(|&p| (id, p))
                .ok_or_else(|| SimError::Input(format!("cluster head {id} is not among the alive nodes")))
        })
        .collect::<Result<_>>()?;

    let mut layout = ClusterLayout {
        ch_ids: ch_ids.clone(),
        ..ClusterLayout::default()
    };
    for &(id, p) in nodes {
        if ch_ids.contains(&id) {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for &(head, hp) in &heads {
            let d = euclidean_distance(p, hp);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((head, d));
            }
        }
        let (head, d) = best.expect("heads is non-empty");
        if strict && d > r_cluster {
            layout.orphan_ids.insert(id);
        } else {
            layout.assignment.insert(id, head);
        }
    }
    Ok(layout)
}
