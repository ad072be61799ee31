use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use wsn_fusion::energy::{ch_round_energy, member_round_energy_with_form};
use wsn_fusion::metrics::rounds_csv_string;
use wsn_fusion::sim::{distinct_heads, generate_topology};
use wsn_fusion::{run_simulation, Protocol, SimConfig, Simulation};

fn short(seed: u64, rounds: usize) -> SimConfig {
    let mut cfg = SimConfig { seed, rounds, ..SimConfig::default() };
    cfg.bpnn.epochs = 200;
    cfg
}

#[test]
fn shipped_default_config_matches_builtin_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    let loaded = SimConfig::load(&path).unwrap();
    assert_eq!(loaded.to_json_pretty(), SimConfig::default().to_json_pretty());
}

#[test]
fn same_seed_same_rounds() {
    let a = run_simulation(&short(5, 25), None).unwrap();
    let b = run_simulation(&short(5, 25), None).unwrap();
    assert_eq!(rounds_csv_string(&a.rounds), rounds_csv_string(&b.rounds));
    assert_eq!(a.summary, b.summary);
}

#[test]
fn different_seeds_differ() {
    let a = run_simulation(&short(1, 10), None).unwrap();
    let b = run_simulation(&short(2, 10), None).unwrap();
    assert_ne!(rounds_csv_string(&a.rounds), rounds_csv_string(&b.rounds));
}

#[test]
fn placement_does_not_depend_on_training_settings() {
    let base = short(8, 5);
    let mut other = base.clone();
    other.bpnn.epochs = 10;
    other.bpnn.hidden_layers = vec![3, 3];
    let a: Vec<_> = generate_topology(&base).unwrap().iter().map(|n| n.position).collect();
    let b: Vec<_> = generate_topology(&other).unwrap().iter().map(|n| n.position).collect();
    assert_eq!(a, b);
}

#[test]
fn sensing_noise_does_not_move_topology_or_heads() {
    let base = short(4, 5);
    let mut noisy = base.clone();
    noisy.sensing.noise_sigma = 0.5;
    let a = run_simulation(&base, None).unwrap();
    let b = run_simulation(&noisy, None).unwrap();
    assert_eq!(distinct_heads(&a.heads), distinct_heads(&b.heads));
    let ch = |r: &wsn_fusion::SimulationRun| r.rounds.iter().map(|m| m.ch_count).collect::<Vec<_>>();
    assert_eq!(ch(&a), ch(&b));
}

#[test]
fn ledger_matches_drained_energy() {
    let cfg = short(3, 30);
    let mut sim = Simulation::new(cfg.clone(), None).unwrap();
    for round in 1..=cfg.rounds {
        let before: f64 = sim.nodes().iter().map(|n| n.energy).sum();
        let out = sim.run_round(round).unwrap();
        let after: f64 = sim.nodes().iter().map(|n| n.energy).sum();
        let drained = before - after;
        assert!((drained - out.ledger.drained_j).abs() <= 1e-12 * before);
        assert!((out.ledger.charged_j() - out.ledger.composition_j).abs() <= 1e-12 * out.ledger.composition_j);
        assert!((out.metrics.energy_consumed_j - out.ledger.drained_j).abs() <= 1e-15 + 1e-12 * drained);
    }
}

#[test]
fn per_node_charges_match_independent_formulas_without_loss() {
    let mut cfg = short(6, 1);
    cfg.loss_model.base = 0.0;
    cfg.loss_model.coeff_per_m = 0.0;
    let mut sim = Simulation::new(cfg.clone(), None).unwrap();
    let out = sim.run_round(1).unwrap();
    let p = cfg.radio.params().unwrap();
    let ch_ids: BTreeSet<usize> = out.heads.iter().map(|h| h.score.node_id).collect();
    let sizes: BTreeMap<usize, usize> = out.heads.iter().map(|h| (h.score.node_id, h.cluster_size)).collect();
    let positions: BTreeMap<usize, _> = sim.nodes().iter().map(|n| (n.id, n.position)).collect();
    let bs = cfg.bs_position;
    for (id, charge) in &out.ledger.charges {
        if ch_ids.contains(id) {
            let d_bs = positions[id].distance_to(&bs);
            let uplink_only = ch_round_energy(0, 0, d_bs, &p).unwrap();
            assert_eq!(charge.tx, uplink_only.tx);
            let full_cluster = ch_round_energy(0, sizes[id] as u64 * p.packet_bits, d_bs, &p).unwrap();
            assert!(charge.proc <= full_cluster.proc);
        } else {
            let floor = member_round_energy_with_form(0.0, cfg.radio.control_bits, &p, cfg.radio.energy_form).unwrap();
            assert!(charge.total >= floor.total);
            assert!(charge.tx > 0.0);
        }
    }
}

#[test]
fn clustering_beats_direct_on_energy() {
    let cfg = short(9, 20);
    let direct = SimConfig { protocol: Protocol::Direct, ..cfg.clone() };
    let p = run_simulation(&cfg, None).unwrap();
    let d = run_simulation(&direct, None).unwrap();
    assert!(p.summary.total_energy_j < d.summary.total_energy_j);
    assert!(d.rounds.iter().all(|m| m.ch_count == 0));
}

#[test]
fn exhausted_network_reports_zeroed_rounds() {
    let mut cfg = short(2, 40);
    cfg.protocol = Protocol::Direct;
    cfg.sensor_energy_j = 1e-4;
    cfg.relay_energy_j = 1e-4;
    let run = run_simulation(&cfg, None).unwrap();
    let last = run.rounds.last().unwrap();
    assert_eq!(last.alive_cum, 0);
    assert_eq!(last.dead_cum, cfg.node_count());
    assert_eq!(last.energy_consumed_j, 0.0);
    assert_eq!(run.summary.first_death_round, Some(1));
}

#[test]
fn replenishment_keeps_more_nodes_alive() {
    let mut cfg = short(2, 30);
    cfg.protocol = Protocol::Direct;
    let without = run_simulation(&cfg, None).unwrap();
    cfg.r_replenish = Some(5);
    let with = run_simulation(&cfg, None).unwrap();
    assert!(with.summary.final_alive >= without.summary.final_alive);
}

#[test]
fn round_zero_is_rejected() {
    let mut sim = Simulation::new(short(1, 1), None).unwrap();
    assert!(sim.run_round(0).is_err());
}
