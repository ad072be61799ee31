//! Round loop: election, routing, sensing, transmission, fusion, and energy
//! bookkeeping for every node, one round at a time.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::clustering::{
    assign_members, convergence_metric, neighbor_sets, score_nodes, select_cluster_heads, ClusterLayout, FuzzyLabel,
    NodeScore, RawCriteria,
};
use crate::config::{LatencyModel, Protocol, SimConfig};
use crate::energy::{
    ch_round_energy, ch_to_bs_energy, cluster_transmission_energy, idle_energy, member_round_energy_with_form,
    proc_energy, round_energy, rx_energy, tx_energy, EnergyBreakdown, RadioParams,
};
use crate::error::{Result, SimError};
use crate::fusion::{fit_width, init_weights_with, FusionModel, TrainBatch};
use crate::geometry::{euclidean_distance, Point};
use crate::metrics::{fused_quality, packet_loss_pct, RoundMetrics, RunSummary};
use crate::rng::{substream, Stream};
use crate::routing::{build_mst, transmission_schedule, ClusterTree};
use crate::sensing::{sense, Reading};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Sensor,
    Relay,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: usize,
    pub kind: NodeKind,
    pub position: Point,
    pub energy: f64,
    pub alive: bool,
}

/// Places sensors (ids `0..n_sensors`) then relays uniformly in the field.
pub fn generate_topology(config: &SimConfig) -> Result<Vec<NodeState>> {
    config.validate()?;
    let mut rng = substream(config.seed, Stream::Placement);
    let (w, h) = (config.field_size.width, config.field_size.height);
    Ok((0..config.node_count())
        .map(|id| {
            let (kind, energy) = if id < config.n_sensors {
                (NodeKind::Sensor, config.sensor_energy_j)
            } else {
                (NodeKind::Relay, config.relay_energy_j)
            };
            let position = Point::new(rng.gen_range(0.0..w), rng.gen_range(0.0..h));
            NodeState {
                id,
                kind,
                position,
                energy,
                alive: true,
            }
        })
        .collect())
}

/// Scores every alive node and forms this round's clusters.
pub fn form_clusters(nodes: &[NodeState], config: &SimConfig) -> Result<(ClusterLayout, Vec<NodeScore>)> {
    let alive: Vec<&NodeState> = nodes.iter().filter(|n| n.alive).collect();
    if alive.is_empty() {
        return Err(SimError::State("no alive nodes".into()));
    }
    let positions: Vec<Point> = alive.iter().map(|n| n.position).collect();
    let nbrs = neighbor_sets(&positions, config.r_cluster)?;
    let theta = convergence_metric(&positions, &nbrs, config.r_cluster)?;
    let raw: Vec<RawCriteria> = alive
        .iter()
        .enumerate()
        .map(|(k, n)| RawCriteria {
            node_id: n.id,
            energy: n.energy,
            dist_to_bs: euclidean_distance(n.position, config.bs_position),
            centrality: nbrs[k].len() as f64,
            theta: theta[k],
        })
        .collect();
    let scores = score_nodes(&raw)?;
    let heads = select_cluster_heads(&scores, config.ch_percentile)?;
    let id_pos: Vec<(usize, Point)> = alive.iter().map(|n| (n.id, n.position)).collect();
    let layout = assign_members(&id_pos, &heads, config.r_cluster, config.strict_radius)?;
    Ok((layout, scores))
}

/// Deepest MST times the per-hop delay, one more hop for the uplink, plus a
/// propagation term on the farthest cluster-head uplink.
pub fn latency_of_round(trees: &[ClusterTree], positions: &BTreeMap<usize, Point>, bs: Point, model: &LatencyModel) -> f64 {
    let max_depth = trees.iter().map(|t| t.depth).max().unwrap_or(0);
    let max_uplink = trees
        .iter()
        .map(|t| euclidean_distance(positions[&t.root], bs))
        .fold(0.0, f64::max);
    max_depth as f64 * model.per_hop_ms + model.per_hop_ms + model.per_meter_ms * max_uplink
}

/// Both accountings of one round's energy. `charges` is built node by node;
/// `composition_j` is built link by link and must agree with it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoundEnergyLedger {
    pub charges: BTreeMap<usize, EnergyBreakdown>,
    /// In-cluster transmission, reception, aggregation and idle energy.
    pub intra_j: f64,
    /// Cluster-head uplink transmit energy.
    pub ch_bs_j: f64,
    pub composition_j: f64,
    /// Energy actually removed from batteries (charges clamped at empty).
    pub drained_j: f64,
    /// Charged energy a dying node did not have.
    pub overdraw_j: f64,
}

impl RoundEnergyLedger {
    pub fn charged_j(&self) -> f64 {
        self.charges.values().map(|b| b.total).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadReport {
    pub round: usize,
    pub score: NodeScore,
    pub labels: [FuzzyLabel; 4],
    pub cluster_size: usize,
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub metrics: RoundMetrics,
    pub ledger: RoundEnergyLedger,
    pub heads: Vec<HeadReport>,
}

#[derive(Debug, Default)]
struct Traffic {
    transmissions: usize,
    losses: usize,
    qualities: Vec<f64>,
}

impl Traffic {
    fn send(&mut self, rng: &mut ChaCha8Rng, loss_probability: f64) -> bool {
        self.transmissions += 1;
        let lost = rng.gen::<f64>() < loss_probability;
        if lost {
            self.losses += 1;
        }
        !lost
    }
}

pub struct Simulation {
    config: SimConfig,
    radio: RadioParams,
    nodes: Vec<NodeState>,
    initial_energy: Vec<f64>,
    model: Option<FusionModel>,
    training_loss: Vec<f64>,
    sensing_rng: ChaCha8Rng,
    loss_rng: ChaCha8Rng,
    first_death: Option<usize>,
}

impl Simulation {
    /// Places the nodes and, for the clustered protocol, trains a fusion
    /// model unless one is supplied.
    pub fn new(config: SimConfig, model: Option<FusionModel>) -> Result<Self> {
        config.validate()?;
        let radio = config.radio.params()?;
        let nodes = generate_topology(&config)?;
        let initial_energy = nodes.iter().map(|n| n.energy).collect();

        let (model, training_loss) = match (config.protocol, model) {
            (Protocol::Direct, m) => (m, Vec::new()),
            (Protocol::Proposed, Some(m)) => (Some(m), Vec::new()),
            (Protocol::Proposed, None) => {
                let (layout, _) = form_clusters(&nodes, &config)?;
                let width = layout.max_cluster_size().clamp(1, config.bpnn.input_cap);
                let (m, history) = train_fusion_model(&config, width)?;
                (Some(m), history)
            }
        };

        Ok(Self {
            sensing_rng: substream(config.seed, Stream::Sensing),
            loss_rng: substream(config.seed, Stream::LinkLoss),
            config,
            radio,
            nodes,
            initial_energy,
            model,
            training_loss,
            first_death: None,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn model(&self) -> Option<&FusionModel> {
        self.model.as_ref()
    }

    pub fn training_loss(&self) -> &[f64] {
        &self.training_loss
    }

    pub fn first_death_round(&self) -> Option<usize> {
        self.first_death
    }

    pub fn dead_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.alive).count()
    }

    /// Runs round `round` (1-based) and advances the node state.
    pub fn run_round(&mut self, round: usize) -> Result<RoundOutcome> {
        if round == 0 {
            return Err(SimError::State("rounds are numbered from 1".into()));
        }
        let alive: Vec<usize> = self.nodes.iter().filter(|n| n.alive).map(|n| n.id).collect();
        if alive.is_empty() {
            return Ok(self.finish_round(round, RoundEnergyLedger::default(), Traffic::default(), 0.0, 0, Vec::new()));
        }

        // Sensing draws happen first, in id order, independent of the layout.
        let mut readings = BTreeMap::new();
        for &id in &alive {
            let n = &self.nodes[id];
            if n.kind == NodeKind::Sensor {
                readings.insert(id, sense(&self.config.sensing, n.position, n.alive, round, &mut self.sensing_rng)?);
            }
        }

        match self.config.protocol {
            Protocol::Proposed => self.clustered_round(round, &alive, &readings),
            Protocol::Direct => self.direct_round(round, &alive, &readings),
        }
    }

    fn clustered_round(&mut self, round: usize, alive: &[usize], readings: &BTreeMap<usize, Reading>) -> Result<RoundOutcome> {
        let cfg = &self.config;
        let radio = self.radio;
        let form = cfg.radio.energy_form;
        let packet = radio.packet_bits;
        let idle = idle_energy(&radio);
        let bs = cfg.bs_position;
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| SimError::State("clustered protocol needs a fusion model".into()))?;

        let (layout, scores) = form_clusters(&self.nodes, cfg)?;
        let position: BTreeMap<usize, Point> = alive.iter().map(|&id| (id, self.nodes[id].position)).collect();

        let mut ledger = RoundEnergyLedger::default();
        let mut traffic = Traffic::default();
        let mut trees = Vec::with_capacity(layout.ch_ids.len());
        let mut heads = Vec::with_capacity(layout.ch_ids.len());

        for &ch in &layout.ch_ids {
            let members = layout.members_of(ch);
            let cluster: Vec<(usize, Point)> =
                std::iter::once(ch).chain(members.iter().copied()).map(|id| (id, position[&id])).collect();
            let tree = build_mst(&cluster, ch)?;
            let schedule = transmission_schedule(&tree);

            // Reading ids each node currently holds.
            let mut carried: BTreeMap<usize, Vec<usize>> = cluster
                .iter()
                .map(|&(id, _)| (id, if readings.contains_key(&id) { vec![id] } else { Vec::new() }))
                .collect();
            let mut heard: BTreeMap<usize, u64> = BTreeMap::new();
            let mut parent_distance: BTreeMap<usize, f64> = BTreeMap::new();
            let mut edge_lengths = Vec::with_capacity(schedule.len());

            for send in &schedule {
                parent_distance.insert(send.sender, send.distance);
                edge_lengths.push(send.distance);
                let payload = std::mem::take(carried.get_mut(&send.sender).expect("sender is in the cluster"));
                if traffic.send(&mut self.loss_rng, cfg.loss_model.probability(send.distance)) {
                    carried.get_mut(&send.receiver).expect("receiver is in the cluster").extend(payload);
                    *heard.entry(send.receiver).or_insert(0) += 1;
                }
            }

            // Fusion input: the head's own reading first, then nearest members.
            let mut fused_ids = carried.remove(&ch).unwrap_or_default();
            let head_pos = position[&ch];
            fused_ids.sort_by(|&a, &b| {
                euclidean_distance(position[&a], head_pos)
                    .total_cmp(&euclidean_distance(position[&b], head_pos))
                    .then(a.cmp(&b))
            });
            let agg_bits = fused_ids.len() as u64 * packet;
            let uplink = ch_to_bs_energy(head_pos, bs, &radio);

            // Node-side accounting.
            for &m in &members {
                let relayed = rx_energy(heard.get(&m).copied().unwrap_or(0) * packet, &radio);
                let b = member_round_energy_with_form(parent_distance[&m], cfg.radio.control_bits, &radio, form)?
                    .combine(&EnergyBreakdown::new(0.0, relayed, 0.0, 0.0));
                ledger.charges.insert(m, b);
            }
            let head_heard = heard.get(&ch).copied().unwrap_or(0);
            ledger
                .charges
                .insert(ch, ch_round_energy(head_heard, agg_bits, uplink.distance, &radio)?);

            // Link-side accounting.
            let receivers: Vec<u64> = heard.values().copied().collect();
            ledger.intra_j += cluster_transmission_energy(&edge_lengths, &receivers, &radio, form)?
                + members.len() as f64 * rx_energy(cfg.radio.control_bits, &radio)
                + proc_energy(agg_bits, &radio);
            ledger.ch_bs_j += uplink.tx;

            let uplink_ok = traffic.send(&mut self.loss_rng, cfg.loss_model.probability(uplink.distance));
            if uplink_ok && !fused_ids.is_empty() {
                let values: Vec<f64> = fused_ids.iter().map(|id| readings[id].value).collect();
                let fd = model.fuse(&values)?;
                let truth = cfg.sensing.truth(head_pos, round as f64);
                traffic.qualities.push(fused_quality(fd, truth));
            }

            let score = *scores.iter().find(|s| s.node_id == ch).expect("head was scored");
            heads.push(HeadReport {
                round,
                score,
                labels: cfg.fuzzy.grade_score(&score)?,
                cluster_size: cluster.len(),
            });
            trees.push(tree);
        }

        for &o in &layout.orphan_ids {
            ledger.charges.insert(o, EnergyBreakdown::new(0.0, 0.0, 0.0, idle));
        }
        ledger.intra_j += idle * alive.len() as f64;
        ledger.composition_j = round_energy(ledger.intra_j, ledger.ch_bs_j);

        let latency = latency_of_round(&trees, &position, bs, &cfg.latency);
        let ch_count = layout.ch_ids.len();
        Ok(self.finish_round(round, ledger, traffic, latency, ch_count, heads))
    }

    fn direct_round(&mut self, round: usize, alive: &[usize], readings: &BTreeMap<usize, Reading>) -> Result<RoundOutcome> {
        let cfg = &self.config;
        let radio = self.radio;
        let idle = idle_energy(&radio);
        let bs = cfg.bs_position;

        let mut ledger = RoundEnergyLedger::default();
        let mut traffic = Traffic::default();
        let mut max_uplink: f64 = 0.0;

        for &id in alive {
            let pos = self.nodes[id].position;
            let d = euclidean_distance(pos, bs);
            max_uplink = max_uplink.max(d);
            let tx = tx_energy(radio.packet_bits, d, &radio)?;
            ledger.charges.insert(id, EnergyBreakdown::new(tx, 0.0, 0.0, idle));
            ledger.ch_bs_j += ch_to_bs_energy(pos, bs, &radio).tx;
            let delivered = traffic.send(&mut self.loss_rng, cfg.loss_model.probability(d));
            if let (true, Some(r)) = (delivered, readings.get(&id)) {
                traffic.qualities.push(fused_quality(r.value, r.truth));
            }
        }
        ledger.intra_j = idle * alive.len() as f64;
        ledger.composition_j = round_energy(ledger.intra_j, ledger.ch_bs_j);

        let latency = cfg.latency.per_hop_ms + cfg.latency.per_meter_ms * max_uplink;
        Ok(self.finish_round(round, ledger, traffic, latency, 0, Vec::new()))
    }

    /// Applies the charges, marks deaths, replenishes, and emits metrics.
    fn finish_round(
        &mut self,
        round: usize,
        mut ledger: RoundEnergyLedger,
        traffic: Traffic,
        latency_ms: f64,
        ch_count: usize,
        heads: Vec<HeadReport>,
    ) -> RoundOutcome {
        let mut died = false;
        for (&id, charge) in &ledger.charges {
            let node = &mut self.nodes[id];
            let drained = charge.total.min(node.energy);
            ledger.drained_j += drained;
            ledger.overdraw_j += charge.total - drained;
            node.energy -= charge.total;
            if node.energy <= 0.0 {
                node.energy = 0.0;
                node.alive = false;
                died = true;
            }
        }
        if died && self.first_death.is_none() {
            self.first_death = Some(round);
        }
        if let Some(period) = self.config.r_replenish {
            if round.is_multiple_of(period) {
                for (node, &e) in self.nodes.iter_mut().zip(&self.initial_energy) {
                    node.energy = e;
                    node.alive = true;
                }
            }
        }

        let dead_cum = self.dead_count();
        let fused_quality_pct = if traffic.qualities.is_empty() {
            0.0
        } else {
            traffic.qualities.iter().sum::<f64>() / traffic.qualities.len() as f64
        };
        let metrics = RoundMetrics {
            round,
            dead_cum,
            alive_cum: self.nodes.len() - dead_cum,
            latency_ms,
            packet_loss_pct: packet_loss_pct(traffic.transmissions, traffic.losses)
                .expect("losses are only counted on transmissions"),
            fused_quality_pct,
            energy_consumed_j: ledger.drained_j,
            ch_count,
        };
        RoundOutcome { metrics, ledger, heads }
    }

    pub fn summary(&self, rounds: &[RoundMetrics]) -> RunSummary {
        let dead = self.dead_count();
        // With no rounds run the state is still the initial one.
        RunSummary::from_rounds(rounds, dead, self.nodes.len() - dead, self.first_death, self.config.digest())
    }
}

/// Builds a synthetic supervision set and trains a fusion network of input
/// width `width`. Each sample is one cluster: the head's reading followed by
/// members scattered within `r_cluster`, nearest first; the target is the
/// noiseless field value at the head.
pub fn train_fusion_model(config: &SimConfig, width: usize) -> Result<(FusionModel, Vec<f64>)> {
    let field = &config.sensing;
    let mut rng = substream(config.seed, Stream::TrainingData);
    let mut raw_inputs = Vec::with_capacity(config.bpnn.train_samples);
    let mut raw_targets = Vec::with_capacity(config.bpnn.train_samples);

    for _ in 0..config.bpnn.train_samples {
        let head = Point::new(
            rng.gen_range(0.0..config.field_size.width),
            rng.gen_range(0.0..config.field_size.height),
        );
        let phase = rng.gen_range(0.0..field.period_rounds);
        let k = rng.gen_range(1..=width);
        let mut members: Vec<(f64, Point)> = (1..k)
            .map(|_| {
                let r = config.r_cluster * rng.gen::<f64>().sqrt();
                let a = rng.gen_range(0.0..std::f64::consts::TAU);
                (r, Point::new(head.x + r * a.cos(), head.y + r * a.sin()))
            })
            .collect();
        members.sort_by(|a, b| a.0.total_cmp(&b.0));
        let readings: Vec<f64> = std::iter::once(head)
            .chain(members.into_iter().map(|(_, p)| p))
            .map(|p| field.observe(p, phase, &mut rng).value)
            .collect();
        raw_inputs.push(readings);
        raw_targets.push(field.truth(head, phase));
    }

    let m = raw_targets.len() as f64;
    let shift = raw_targets.iter().sum::<f64>() / m;
    let std = (raw_targets.iter().map(|t| (t - shift).powi(2)).sum::<f64>() / m).sqrt();
    let scale = if std > 1e-9 { std } else { 1.0 };

    let inputs = raw_inputs
        .iter()
        .map(|r| fit_width(&r.iter().map(|v| (v - shift) / scale).collect::<Vec<_>>(), width))
        .collect::<Result<Vec<_>>>()?;
    let targets = raw_targets.iter().map(|t| (t - shift) / scale).collect();
    let batch = TrainBatch::new(inputs, targets)?;

    let mut sizes = vec![width];
    sizes.extend(&config.bpnn.hidden_layers);
    sizes.push(1);
    let mut mlp = init_weights_with(&sizes, &mut substream(config.seed, Stream::WeightInit))?;
    let history = mlp.train(&batch, config.bpnn.eta, config.bpnn.epochs)?;
    Ok((
        FusionModel {
            mlp,
            input_shift: shift,
            input_scale: scale,
        },
        history,
    ))
}

#[derive(Debug)]
pub struct SimulationRun {
    pub rounds: Vec<RoundMetrics>,
    pub ledgers: Vec<RoundEnergyLedger>,
    pub heads: Vec<HeadReport>,
    pub summary: RunSummary,
    pub model: Option<FusionModel>,
    pub training_loss: Vec<f64>,
}

pub fn run_simulation(config: &SimConfig, model: Option<FusionModel>) -> Result<SimulationRun> {
    let mut sim = Simulation::new(config.clone(), model)?;
    let mut rounds = Vec::with_capacity(config.rounds);
    let mut ledgers = Vec::with_capacity(config.rounds);
    let mut heads = Vec::new();
    for r in 1..=config.rounds {
        let outcome = sim.run_round(r)?;
        rounds.push(outcome.metrics);
        ledgers.push(outcome.ledger);
        heads.extend(outcome.heads);
    }
    let summary = sim.summary(&rounds);
    Ok(SimulationRun {
        rounds,
        ledgers,
        heads,
        summary,
        training_loss: sim.training_loss.clone(),
        model: sim.model,
    })
}

pub const HEADS_CSV_HEADER: &str = "round,node_id,cluster_size,p_ch,e_norm,d_norm,c_norm,theta_norm,energy_label,bs_label,centrality_label,convergence_label";

/// Diagnostic per-head listing with fuzzy grades of each criterion.
pub fn write_heads_csv(heads: &[HeadReport], path: &Path) -> Result<()> {
    use crate::metrics::format_sig6;
    let mut out = String::from(HEADS_CSV_HEADER);
    out.push('\n');
    for h in heads {
        let s = &h.score;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            h.round,
            s.node_id,
            h.cluster_size,
            format_sig6(s.p_ch),
            format_sig6(s.e_norm),
            format_sig6(s.d_norm),
            format_sig6(s.c_norm),
            format_sig6(s.theta_norm),
            h.labels[0].as_str(),
            h.labels[1].as_str(),
            h.labels[2].as_str(),
            h.labels[3].as_str()
        )
        .expect("writing to a String cannot fail");
    }
    std::fs::write(path, out).map_err(|e| SimError::io(path, e))
}

/// Distinct cluster heads ever elected, for diagnostics.
pub fn distinct_heads(heads: &[HeadReport]) -> BTreeSet<usize> {
    heads.iter().map(|h| h.score.node_id).collect()
}
