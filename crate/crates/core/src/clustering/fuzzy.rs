//! Trapezoidal membership grading of normalized election criteria.
//!
//! Election itself uses the arithmetic mean in [`super::ch_probability`]; the
//! grades here only label each criterion low / medium / high for reports.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

use super::NodeScore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapezoidParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl TrapezoidParams {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        let p = Self { a, b, c, d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = self.a <= self.b && self.b <= self.c && self.c <= self.d;
        let finite = [self.a, self.b, self.c, self.d].iter().all(|v| v.is_finite());
        if !(ordered && finite) {
            return Err(SimError::Config(format!(
                "trapezoid breakpoints must be finite and ordered a <= b <= c <= d, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Degree of membership of `x`. Coincident breakpoints resolve toward the
/// plateau, so `a == b` is a step up at `a` and `c == d` a step down at `d`.
pub fn trapezoid_membership(x: f64, p: &TrapezoidParams) -> Result<f64> {
    p.validate()?;
    let mu = if x >= p.b && x <= p.c {
        1.0
    } else if x <= p.a || x >= p.d {
        0.0
    } else if x < p.b {
        (x - p.a) / (p.b - p.a)
    } else {
        (p.d - x) / (p.d - p.c)
    };
    Ok(mu)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FuzzyLabel {
    Low,
    Medium,
    High,
}

impl FuzzyLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            FuzzyLabel::Low => "low",
            FuzzyLabel::Medium => "medium",
            FuzzyLabel::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FuzzyGrader {
    pub low: TrapezoidParams,
    pub medium: TrapezoidParams,
    pub high: TrapezoidParams,
}

impl Default for FuzzyGrader {
    fn default() -> Self {
        Self {
            low: TrapezoidParams { a: 0.0, b: 0.0, c: 0.2, d: 0.4 },
            medium: TrapezoidParams { a: 0.2, b: 0.4, c: 0.6, d: 0.8 },
            high: TrapezoidParams { a: 0.6, b: 0.8, c: 1.0, d: 1.0 },
        }
    }
}

impl FuzzyGrader {
    pub fn validate(&self) -> Result<()> {
        self.low.validate()?;
        self.medium.validate()?;
        self.high.validate()
    }

    /// Label with the largest membership; ties go to the lower label.
    pub fn grade(&self, x: f64) -> Result<FuzzyLabel> {
        let candidates = [
            (FuzzyLabel::Low, trapezoid_membership(x, &self.low)?),
            (FuzzyLabel::Medium, trapezoid_membership(x, &self.medium)?),
            (FuzzyLabel::High, trapezoid_membership(x, &self.high)?),
        ];
        let mut best = candidates[0];
        for c in &candidates[1..] {
            if c.1 > best.1 {
                best = *c;
            }
        }
        Ok(best.0)
    }

    /// Labels for energy, BS proximity, centrality and convergence, in that order.
    pub fn grade_score(&self, score: &NodeScore) -> Result<[FuzzyLabel; 4]> {
        Ok([
            self.grade(score.e_norm)?,
            self.grade(score.d_norm)?,
            self.grade(score.c_norm)?,
            self.grade(score.theta_norm)?,
        ])
    }
}
