//! Per-round metrics, run summaries, and their on-disk formats.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub dead_cum: usize,
    pub alive_cum: usize,
    pub latency_ms: f64,
    pub packet_loss_pct: f64,
    pub fused_quality_pct: f64,
    pub energy_consumed_j: f64,
    pub ch_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub final_dead: usize,
    pub final_alive: usize,
    pub mean_latency_ms: f64,
    pub mean_packet_loss_pct: f64,
    pub mean_fused_quality_pct: f64,
    pub total_energy_j: f64,
    pub first_death_round: Option<usize>,
    pub config_digest: String,
}

impl RunSummary {
    pub fn node_count(&self) -> usize {
        self.final_dead + self.final_alive
    }

    /// Aggregates `rounds`; with no rounds, reports the initial population.
    pub fn from_rounds(
        rounds: &[RoundMetrics],
        initial_dead: usize,
        initial_alive: usize,
        first_death_round: Option<usize>,
        config_digest: String,
    ) -> Self {
        let mean = |f: fn(&RoundMetrics) -> f64| {
            if rounds.is_empty() {
                0.0
            } else {
                rounds.iter().map(f).sum::<f64>() / rounds.len() as f64
            }
        };
        let (final_dead, final_alive) = rounds
            .last()
            .map_or((initial_dead, initial_alive), |r| (r.dead_cum, r.alive_cum));
        Self {
            final_dead,
            final_alive,
            mean_latency_ms: mean(|r| r.latency_ms),
            mean_packet_loss_pct: mean(|r| r.packet_loss_pct),
            mean_fused_quality_pct: mean(|r| r.fused_quality_pct),
            total_energy_j: rounds.iter().map(|r| r.energy_consumed_j).sum(),
            first_death_round,
            config_digest,
        }
    }
}

const QUALITY_EPS: f64 = 1e-9;

/// `100·(1 − |fd − truth| / max(|truth|, ε))`, clipped to `[0, 100]`.
pub fn fused_quality(fd: f64, truth: f64) -> f64 {
    if !fd.is_finite() {
        return 0.0;
    }
    let rel = (fd - truth).abs() / truth.abs().max(QUALITY_EPS);
    (100.0 * (1.0 - rel)).clamp(0.0, 100.0)
}

/// `100·losses/transmissions`, 0 when nothing was sent.
pub fn packet_loss_pct(transmissions: usize, losses: usize) -> Result<f64> {
    if losses > transmissions {
        return Err(SimError::Accounting(format!(
            "{losses} losses recorded for {transmissions} transmissions"
        )));
    }
    if transmissions == 0 {
        return Ok(0.0);
    }
    Ok(100.0 * losses as f64 / transmissions as f64)
}

/// Renders `x` with 6 significant digits in the style of C's `%g`.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    // Scientific form first so the exponent reflects rounding to 6 digits.
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_fraction(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp) as usize;
    trim_fraction(&format!("{x:.decimals$}")).to_string()
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub const ROUNDS_CSV_HEADER: &str =
    "round,dead_cum,alive_cum,latency_ms,packet_loss_pct,fused_quality_pct,energy_consumed_j,ch_count";

pub fn rounds_csv_string(metrics: &[RoundMetrics]) -> String {
    let mut out = String::with_capacity(64 * (metrics.len() + 1));
    out.push_str(ROUNDS_CSV_HEADER);
    out.push('\n');
    for m in metrics {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            m.round,
            m.dead_cum,
            m.alive_cum,
            format_sig6(m.latency_ms),
            format_sig6(m.packet_loss_pct),
            format_sig6(m.fused_quality_pct),
            format_sig6(m.energy_consumed_j),
            m.ch_count
        )
        .expect("writing to a String cannot fail");
    }
    out
}

pub fn write_rounds_csv(metrics: &[RoundMetrics], path: &Path) -> Result<()> {
    std::fs::write(path, rounds_csv_string(metrics)).map_err(|e| SimError::io(path, e))
}

pub fn parse_rounds_csv(text: &str) -> std::result::Result<Vec<RoundMetrics>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == ROUNDS_CSV_HEADER => {}
        other => return Err(format!("unexpected header {other:?}")),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(format!("line {}: expected 8 fields, got {}", i + 2, f.len()));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| format!("line {}: {e}", i + 2));
            let float = |s: &str| s.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2));
            Ok(RoundMetrics {
                round: int(f[0])?,
                dead_cum: int(f[1])?,
                alive_cum: int(f[2])?,
                latency_ms: float(f[3])?,
                packet_loss_pct: float(f[4])?,
                fused_quality_pct: float(f[5])?,
                energy_consumed_j: float(f[6])?,
                ch_count: int(f[7])?,
            })
        })
        .collect()
}

pub fn read_rounds_csv(path: &Path) -> Result<Vec<RoundMetrics>> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    parse_rounds_csv(&text).map_err(|message| SimError::Parse {
        path: path.to_path_buf(),
        message,
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(value).expect("metrics serialize");
    std::fs::write(path, json + "\n").map_err(|e| SimError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| SimError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_summary_json(summary: &RunSummary, path: &Path) -> Result<()> {
    write_json(summary, path)
}

pub fn read_summary_json(path: &Path) -> Result<RunSummary> {
    read_json(path)
}

/// A metric where lower is better; reduction = baseline − proposed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostDelta {
    pub proposed: f64,
    pub baseline: f64,
    pub reduction: f64,
    /// `100·reduction/baseline`; `null` when the baseline is zero.
    pub reduction_pct: Option<f64>,
}

impl CostDelta {
    fn new(proposed: f64, baseline: f64) -> Self {
        let reduction = baseline - proposed;
        Self {
            proposed,
            baseline,
            reduction,
            reduction_pct: (baseline != 0.0).then(|| 100.0 * reduction / baseline),
        }
    }
}

/// A metric where higher is better; gain = proposed − baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainDelta {
    pub proposed: f64,
    pub baseline: f64,
    pub gain: f64,
    /// `100·gain/baseline`; `null` when the baseline is zero.
    pub gain_pct: Option<f64>,
}

impl GainDelta {
    fn new(proposed: f64, baseline: f64) -> Self {
        let gain = proposed - baseline;
        Self {
            proposed,
            baseline,
            gain,
            gain_pct: (baseline != 0.0).then(|| 100.0 * gain / baseline),
        }
    }
}

/// First-death comparison. `None` means no node died during the run, which
/// ranks after every finite round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstDeathDelta {
    pub proposed: Option<usize>,
    pub baseline: Option<usize>,
    /// Rounds gained (proposed − baseline) when both runs saw a death.
    pub gain: Option<i64>,
    pub gain_pct: Option<f64>,
    pub proposed_not_earlier: bool,
}

impl FirstDeathDelta {
    fn new(proposed: Option<usize>, baseline: Option<usize>) -> Self {
        let (gain, gain_pct) = match (proposed, baseline) {
            (Some(p), Some(b)) => {
                let g = p as i64 - b as i64;
                (Some(g), (b != 0).then(|| 100.0 * g as f64 / b as f64))
            }
            _ => (None, None),
        };
        let proposed_not_earlier = match (proposed, baseline) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(p), Some(b)) => p >= b,
        };
        Self {
            proposed,
            baseline,
            gain,
            gain_pct,
            proposed_not_earlier,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub total_energy_j: CostDelta,
    pub mean_latency_ms: CostDelta,
    pub final_alive: GainDelta,
    pub first_death_round: FirstDeathDelta,
}

pub fn compare_runs(proposed: &RunSummary, baseline: &RunSummary) -> Result<Comparison> {
    if proposed.node_count() != baseline.node_count() {
        return Err(SimError::Comparison(format!(
            "runs have different node counts: {} vs {}",
            proposed.node_count(),
            baseline.node_count()
        )));
    }
    Ok(Comparison {
        total_energy_j: CostDelta::new(proposed.total_energy_j, baseline.total_energy_j),
        mean_latency_ms: CostDelta::new(proposed.mean_latency_ms, baseline.mean_latency_ms),
        final_alive: GainDelta::new(proposed.final_alive as f64, baseline.final_alive as f64),
        first_death_round: FirstDeathDelta::new(proposed.first_death_round, baseline.first_death_round),
    })
}

pub fn write_comparison_json(cmp: &Comparison, path: &Path) -> Result<()> {
    write_json(cmp, path)
}
