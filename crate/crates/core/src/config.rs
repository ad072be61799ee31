//! Simulation configuration: defaults, JSON loading, dotted-key overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::clustering::FuzzyGrader;
use crate::energy::{crossover_distance, EnergyForm, RadioParams, DEFAULT_E_CPU, DEFAULT_E_ELEC, DEFAULT_E_FS, DEFAULT_E_MP, DEFAULT_PACKET_BITS};
use crate::error::{Result, SimError};
use crate::geometry::Point;
use crate::sensing::SensingField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Fuzzy-scored cluster heads, MST routing, MLP fusion.
    #[default]
    Proposed,
    /// Every alive node sends straight to the base station.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSize {
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub e_elec: f64,
    pub e_fs: f64,
    pub e_mp: f64,
    pub e_cpu: f64,
    pub p_idle: f64,
    pub t_idle: f64,
    /// Pinned crossover distance; `null` derives it as `sqrt(e_fs / e_mp)`.
    pub d0: Option<f64>,
    pub packet_bits: u64,
    /// Bits of cluster-head advertisement each member hears per round.
    pub control_bits: u64,
    pub energy_form: EnergyForm,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            e_elec: DEFAULT_E_ELEC,
            e_fs: DEFAULT_E_FS,
            e_mp: DEFAULT_E_MP,
            e_cpu: DEFAULT_E_CPU,
            p_idle: 0.0,
            t_idle: 1.0,
            d0: None,
            packet_bits: DEFAULT_PACKET_BITS,
            control_bits: 0,
            energy_form: EnergyForm::TwoBranch,
        }
    }
}

impl RadioConfig {
    pub fn params(&self) -> Result<RadioParams> {
        let params = RadioParams {
            e_elec: self.e_elec,
            e_fs: self.e_fs,
            e_mp: self.e_mp,
            e_cpu: self.e_cpu,
            p_idle: self.p_idle,
            t_idle: self.t_idle,
            d0: self.d0.unwrap_or_else(|| crossover_distance(self.e_fs, self.e_mp)),
            packet_bits: self.packet_bits,
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BpnnConfig {
    pub hidden_layers: Vec<usize>,
    /// Upper bound on the network input width.
    pub input_cap: usize,
    pub eta: f64,
    pub epochs: usize,
    pub train_samples: usize,
}

impl Default for BpnnConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![8],
            input_cap: 16,
            eta: 0.01,
            epochs: 2000,
            train_samples: 256,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    pub per_hop_ms: f64,
    pub per_meter_ms: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            per_hop_ms: 1.0,
            per_meter_ms: 0.05,
        }
    }
}

/// Per-link Bernoulli loss with probability `min(1, base + coeff_per_m·d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossModel {
    pub base: f64,
    pub coeff_per_m: f64,
}

impl Default for LossModel {
    fn default() -> Self {
        Self {
            base: 0.0003,
            coeff_per_m: 1e-6,
        }
    }
}

impl LossModel {
    pub fn probability(&self, distance: f64) -> f64 {
        (self.base + self.coeff_per_m * distance).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_sensors: usize,
    pub n_relays: usize,
    pub sensor_energy_j: f64,
    pub relay_energy_j: f64,
    pub bs_position: Point,
    pub field_size: FieldSize,
    pub rounds: usize,
    pub r_cluster: f64,
    pub ch_percentile: f64,
    /// Restore every node to its initial energy each time the round index is
    /// a multiple of this value; `null` disables replenishment.
    pub r_replenish: Option<usize>,
    pub strict_radius: bool,
    pub protocol: Protocol,
    pub radio: RadioConfig,
    pub bpnn: BpnnConfig,
    pub sensing: SensingField,
    pub latency: LatencyModel,
    pub loss_model: LossModel,
    pub fuzzy: FuzzyGrader,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_sensors: 90,
            n_relays: 10,
            sensor_energy_j: 1.0,
            relay_energy_j: 2.0,
            bs_position: Point::new(250.0, 500.0),
            field_size: FieldSize {
                width: 500.0,
                height: 500.0,
            },
            rounds: 100,
            r_cluster: 75.0,
            ch_percentile: 0.95,
            r_replenish: None,
            strict_radius: false,
            protocol: Protocol::Proposed,
            radio: RadioConfig::default(),
            bpnn: BpnnConfig::default(),
            sensing: SensingField::default(),
            latency: LatencyModel::default(),
            loss_model: LossModel::default(),
            fuzzy: FuzzyGrader::default(),
            seed: 1,
        }
    }
}

fn config_err(msg: impl Into<String>) -> SimError {
    SimError::Config(msg.into())
}

impl SimConfig {
    pub fn node_count(&self) -> usize {
        self.n_sensors + self.n_relays
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_count() == 0 {
            return Err(config_err("network needs at least one node"));
        }
        for (name, v) in [("sensor_energy_j", self.sensor_energy_j), ("relay_energy_j", self.relay_energy_j)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(config_err(format!("{name} must be > 0, got {v}")));
            }
        }
        let FieldSize { width, height } = self.field_size;
        if !(width.is_finite() && height.is_finite() && width > 0.0 && height > 0.0) {
            return Err(config_err(format!("field must have positive area, got {width} x {height}")));
        }
        if !(self.bs_position.x.is_finite() && self.bs_position.y.is_finite()) {
            return Err(config_err("bs_position must be finite"));
        }
        if !(self.r_cluster.is_finite() && self.r_cluster > 0.0) {
            return Err(config_err(format!("r_cluster must be > 0, got {}", self.r_cluster)));
        }
        if !(self.ch_percentile > 0.0 && self.ch_percentile < 1.0) {
            return Err(config_err(format!("ch_percentile must lie in (0, 1), got {}", self.ch_percentile)));
        }
        if self.r_replenish == Some(0) {
            return Err(config_err("r_replenish must be >= 1 or null"));
        }
        self.radio.params()?;

        let b = &self.bpnn;
        if b.hidden_layers.is_empty() || b.hidden_layers.contains(&0) {
            return Err(config_err("bpnn.hidden_layers must be non-empty with positive widths"));
        }
        if b.input_cap == 0 || b.epochs == 0 || b.train_samples == 0 {
            return Err(config_err("bpnn.input_cap, bpnn.epochs and bpnn.train_samples must be >= 1"));
        }
        if !(b.eta.is_finite() && b.eta >= 0.0) {
            return Err(config_err(format!("bpnn.eta must be >= 0, got {}", b.eta)));
        }

        self.sensing.validate()?;
        let l = &self.latency;
        if !(l.per_hop_ms.is_finite() && l.per_hop_ms >= 0.0 && l.per_meter_ms.is_finite() && l.per_meter_ms >= 0.0) {
            return Err(config_err("latency coefficients must be >= 0"));
        }
        let m = &self.loss_model;
        if !((0.0..=1.0).contains(&m.base) && m.coeff_per_m.is_finite() && m.coeff_per_m >= 0.0) {
            return Err(config_err("loss_model.base must lie in [0, 1] and coeff_per_m must be >= 0"));
        }
        self.fuzzy.validate()
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(text).map_err(|e| config_err(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Any failure here, including a missing file, is a
    /// config error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Applies `key=value` overrides where `key` is a dotted path to an
    /// existing field, e.g. `radio.e_fs=1e-11`. Values are parsed as JSON,
    /// falling back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        for ov in overrides {
            let ov = ov.as_ref();
            let (key, raw) = ov
                .split_once('=')
                .ok_or_else(|| config_err(format!("override `{ov}` is not of the form key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, key.trim(), value)?;
        }
        let cfg: SimConfig =
            serde_json::from_value(doc).map_err(|e| config_err(format!("override produced an invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the compact JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hex::encode(&hash[..8])
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cursor = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cursor
            .as_object_mut()
            .ok_or_else(|| config_err(format!("`{}` is not a section", parts[..i].join("."))))?;
        let slot = obj
            .get_mut(*part)
            .ok_or_else(|| config_err(format!("unknown config key `{key}`")))?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        cursor = slot;
    }
    Err(config_err("empty override key"))
}
