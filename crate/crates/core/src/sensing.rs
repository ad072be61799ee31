//! Synthetic environmental field sampled by the sensor nodes.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::geometry::Point;

/// `offset + amplitude·sin(2π·round/period) + gradient·position`, observed
/// with additive Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingField {
    pub offset: f64,
    pub amplitude: f64,
    pub period_rounds: f64,
    /// Units per metre along x.
    pub gradient_x: f64,
    /// Units per metre along y.
    pub gradient_y: f64,
    pub noise_sigma: f64,
}

impl Default for SensingField {
    fn default() -> Self {
        Self {
            offset: 25.0,
            amplitude: 2.0,
            period_rounds: 50.0,
            gradient_x: 0.002,
            gradient_y: 0.002,
            noise_sigma: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reading {
    pub value: f64,
    pub truth: f64,
}

impl SensingField {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.offset, self.amplitude, self.gradient_x, self.gradient_y]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(SimError::Config("sensing parameters must be finite".into()));
        }
        if !(self.period_rounds.is_finite() && self.period_rounds > 0.0) {
            return Err(SimError::Config(format!("sensing.period_rounds must be > 0, got {}", self.period_rounds)));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(SimError::Config(format!("sensing.noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }

    pub fn truth(&self, at: Point, round: f64) -> f64 {
        let phase = 2.0 * std::f64::consts::PI * round / self.period_rounds;
        self.offset + self.amplitude * phase.sin() + self.gradient_x * at.x + self.gradient_y * at.y
    }

    /// One noisy observation at `at`. Always consumes exactly one normal draw.
    pub fn observe<R: Rng + ?Sized>(&self, at: Point, round: f64, rng: &mut R) -> Reading {
        let truth = self.truth(at, round);
        let noise = Normal::new(0.0, self.noise_sigma).expect("validated sigma");
        Reading {
            value: truth + noise.sample(rng),
            truth,
        }
    }
}

/// Reading of an alive node; dead nodes cannot sense.
pub fn sense<R: Rng + ?Sized>(
    field: &SensingField,
    position: Point,
    alive: bool,
    round: usize,
    rng: &mut R,
) -> Result<Reading> {
    if !alive {
        return Err(SimError::State("dead node cannot sense".into()));
    }
    Ok(field.observe(position, round as f64, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    #[test]
    fn noiseless_reading_is_truth() {
        let field = SensingField { noise_sigma: 0.0, ..SensingField::default() };
        let mut rng = substream(1, Stream::Sensing);
        let p = Point::new(120.0, 33.0);
        let r = sense(&field, p, true, 7, &mut rng).unwrap();
        assert_eq!(r.value, r.truth);
        let q = sense(&field, p, true, 7, &mut rng).unwrap();
        assert_eq!(q.value, r.value);
    }

    #[test]
    fn dead_node_cannot_sense() {
        let mut rng = substream(1, Stream::Sensing);
        assert!(matches!(
            sense(&SensingField::default(), Point::default(), false, 1, &mut rng),
            Err(SimError::State(_))
        ));
    }

    #[test]
    fn noise_std_matches_sigma() {
        let field = SensingField { noise_sigma: 0.3, ..SensingField::default() };
        let mut rng = substream(11, Stream::Sensing);
        let n = 10_000;
        let errs: Vec<f64> = (0..n)
            .map(|_| {
                let r = field.observe(Point::new(10.0, 10.0), 3.0, &mut rng);
                r.value - r.truth
            })
            .collect();
        let mean = errs.iter().sum::<f64>() / n as f64;
        let std = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((std - 0.3).abs() / 0.3 < 0.05, "std = {std}");
    }

    #[test]
    fn rejects_negative_sigma() {
        let field = SensingField { noise_sigma: -1.0, ..SensingField::default() };
        assert!(field.validate().is_err());
    }
}
