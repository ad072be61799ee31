//! First-order radio energy accounting.
//!
//! Every joule charged to a node in the simulator is computed here. Transmit
//! cost follows the two-branch path-loss model: free-space (`d²`) up to the
//! crossover distance `d0`, multipath (`d⁴`) beyond it. Reception and
//! processing are linear in the number of bits.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::{euclidean_distance, Point};

/// Selects the amplifier term used on intra-cluster MST edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EnergyForm {
    /// Two-branch model with raw `d²` / `d⁴` terms.
    #[default]
    #[serde(rename = "eq1")]
    TwoBranch,
    /// Free-space term on the normalized distance, `L·E_fs·(d/d0)²`, for every edge length.
    #[serde(rename = "eq24")]
    NormalizedFreeSpace,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams {
    /// TX/RX electronics energy, J/bit.
    pub e_elec: f64,
    /// Free-space amplifier coefficient, J/bit/m².
    pub e_fs: f64,
    /// Multipath amplifier coefficient, J/bit/m⁴.
    pub e_mp: f64,
    /// Processing energy, J/bit.
    pub e_cpu: f64,
    /// Idle listening power, W.
    pub p_idle: f64,
    /// Idle time per round, s.
    pub t_idle: f64,
    /// Crossover distance between the free-space and multipath branches, m.
    pub d0: f64,
    /// Data packet size `L`, bits.
    pub packet_bits: u64,
}

pub const DEFAULT_E_ELEC: f64 = 50e-9;
pub const DEFAULT_E_FS: f64 = 10e-12;
pub const DEFAULT_E_MP: f64 = 1.3e-15;
pub const DEFAULT_E_CPU: f64 = 5e-9;
pub const DEFAULT_PACKET_BITS: u64 = 1000;

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            e_elec: DEFAULT_E_ELEC,
            e_fs: DEFAULT_E_FS,
            e_mp: DEFAULT_E_MP,
            e_cpu: DEFAULT_E_CPU,
            p_idle: 0.0,
            t_idle: 1.0,
            d0: crossover_distance(DEFAULT_E_FS, DEFAULT_E_MP),
            packet_bits: DEFAULT_PACKET_BITS,
        }
    }
}

/// Distance at which the free-space and multipath amplifier terms are equal.
pub fn crossover_distance(e_fs: f64, e_mp: f64) -> f64 {
    (e_fs / e_mp).sqrt()
}

impl RadioParams {
    pub fn validate(&self) -> Result<()> {
        let strictly_positive = [
            ("e_elec", self.e_elec),
            ("e_fs", self.e_fs),
            ("e_mp", self.e_mp),
            ("d0", self.d0),
        ];
        for (name, v) in strictly_positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Config(format!("radio.{name} must be finite and > 0, got {v}")));
            }
        }
        let non_negative = [
            ("e_cpu", self.e_cpu),
            ("p_idle", self.p_idle),
            ("t_idle", self.t_idle),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::Config(format!("radio.{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.packet_bits == 0 {
            return Err(SimError::Config("radio.packet_bits must be > 0".into()));
        }
        Ok(())
    }

    /// True when `d0` matches `sqrt(e_fs / e_mp)`, i.e. [`tx_energy`] is continuous.
    pub fn is_continuous(&self) -> bool {
        let expected = crossover_distance(self.e_fs, self.e_mp);
        ((self.d0 - expected) / expected).abs() < 1e-12
    }
}

/// Per-node energy for one round, split by cause.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EnergyBreakdown {
    pub tx: f64,
    pub rx: f64,
    pub proc: f64,
    pub idle: f64,
    pub total: f64,
}

impl EnergyBreakdown {
    pub fn new(tx: f64, rx: f64, proc: f64, idle: f64) -> Self {
        Self {
            tx,
            rx,
            proc,
            idle,
            total: tx + rx + proc + idle,
        }
    }

    /// Component-wise sum; the total is recomputed from the summed components.
    pub fn combine(&self, other: &EnergyBreakdown) -> Self {
        Self::new(
            self.tx + other.tx,
            self.rx + other.rx,
            self.proc + other.proc,
            self.idle + other.idle,
        )
    }
}

fn check_distance(distance: f64) -> Result<()> {
    if distance.is_nan() || distance < 0.0 {
        return Err(SimError::Domain(format!("distance must be >= 0, got {distance}")));
    }
    Ok(())
}

/// Energy to transmit `bits` over `distance` metres.
pub fn tx_energy(bits: u64, distance: f64, params: &RadioParams) -> Result<f64> {
    check_distance(distance)?;
    let l = bits as f64;
    let amp = if distance <= params.d0 {
        l * params.e_fs * distance * distance
    } else {
        l * params.e_mp * distance.powi(4)
    };
    Ok(l * params.e_elec + amp)
}

pub fn rx_energy(bits: u64, params: &RadioParams) -> f64 {
    bits as f64 * params.e_elec
}

pub fn proc_energy(bits: u64, params: &RadioParams) -> f64 {
    bits as f64 * params.e_cpu
}

pub fn idle_energy(params: &RadioParams) -> f64 {
    params.p_idle * params.t_idle
}

/// Transmit cost along one intra-cluster MST edge.
pub fn mst_edge_tx_energy(bits: u64, d_ij: f64, params: &RadioParams, form: EnergyForm) -> Result<f64> {
    match form {
        EnergyForm::TwoBranch => tx_energy(bits, d_ij, params),
        EnergyForm::NormalizedFreeSpace => {
            check_distance(d_ij)?;
            let l = bits as f64;
            let ratio = d_ij / params.d0;
            Ok(l * params.e_elec + l * params.e_fs * ratio * ratio)
        }
    }
}

/// Round energy of a cluster member sending one packet `dist_to_ch` metres and
/// listening to `control_bits` of control traffic.
pub fn member_round_energy(dist_to_ch: f64, control_bits: u64, params: &RadioParams) -> Result<EnergyBreakdown> {
    member_round_energy_with_form(dist_to_ch, control_bits, params, EnergyForm::TwoBranch)
}

/// [`member_round_energy`] with the transmit leg priced by `form`.
pub fn member_round_energy_with_form(
    dist_to_ch: f64,
    control_bits: u64,
    params: &RadioParams,
    form: EnergyForm,
) -> Result<EnergyBreakdown> {
    let tx = mst_edge_tx_energy(params.packet_bits, dist_to_ch, params, form)?;
    let rx = rx_energy(control_bits, params);
    Ok(EnergyBreakdown::new(tx, rx, 0.0, idle_energy(params)))
}

/// Round energy of a cluster head: hears `member_count` packets, aggregates
/// `agg_bits`, sends one packet `dist_to_bs` metres to the base station.
pub fn ch_round_energy(
    member_count: u64,
    agg_bits: u64,
    dist_to_bs: f64,
    params: &RadioParams,
) -> Result<EnergyBreakdown> {
    let tx = tx_energy(params.packet_bits, dist_to_bs, params)?;
    let rx = member_count as f64 * rx_energy(params.packet_bits, params);
    let proc = proc_energy(agg_bits, params);
    Ok(EnergyBreakdown::new(tx, rx, proc, idle_energy(params)))
}

/// Transmission plus reception energy over a cluster's MST.
///
/// `edge_lengths` holds one entry per transmitting edge; `receiver_counts`
/// holds, per receiving node, how many packets it heard.
pub fn cluster_transmission_energy(
    edge_lengths: &[f64],
    receiver_counts: &[u64],
    params: &RadioParams,
    form: EnergyForm,
) -> Result<f64> {
    let mut tx = 0.0;
    for &d in edge_lengths {
        tx += mst_edge_tx_energy(params.packet_bits, d, params, form)?;
    }
    let rx: f64 = receiver_counts
        .iter()
        .map(|&c| rx_energy(c * params.packet_bits, params))
        .sum();
    Ok(tx + rx)
}

/// Cluster-head to base-station link cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChToBsEnergy {
    pub distance: f64,
    /// Charged to the cluster head.
    pub tx: f64,
    /// Spent by the base station, which is mains powered and never depletes.
    pub bs_rx: f64,
}

impl ChToBsEnergy {
    pub fn total(&self) -> f64 {
        self.tx + self.bs_rx
    }
}

pub fn ch_to_bs_energy(ch_pos: Point, bs_pos: Point, params: &RadioParams) -> ChToBsEnergy {
    let distance = euclidean_distance(ch_pos, bs_pos);
    let tx = tx_energy(params.packet_bits, distance, params).expect("euclidean distance is non-negative");
    ChToBsEnergy {
        distance,
        tx,
        bs_rx: rx_energy(params.packet_bits, params),
    }
}

/// Total energy for one round: in-cluster traffic plus cluster-head uplinks.
pub fn round_energy(intra: f64, ch_bs: f64) -> f64 {
    intra + ch_bs
}
