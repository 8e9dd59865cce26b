//! Daily sensitivity (urgency) distributions.
//!
//! Agents draw one sensitivity per travelling day from a common
//! distribution. The chain analysis needs the exact CDF at the
//! best-response thresholds, while the simulation needs samples, so both
//! live here.

use rand::Rng;
use rand_distr::{Distribution, Exp, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{KarmaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensitivitySpec {
    /// Exponential on `[0, inf)` with the given mean.
    Exponential { mean: f64 },
    /// Uniform on `[min, max]`.
    Uniform { min: f64, max: f64 },
}

impl Default for SensitivitySpec {
    fn default() -> Self {
        SensitivitySpec::Exponential { mean: 1.0 }
    }
}

impl SensitivitySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SensitivitySpec::Exponential { mean } if !(mean > 0.0 && mean.is_finite()) => {
                Err(KarmaError::InvalidParameter(format!(
                    "exponential mean must be positive, got {mean}"
                )))
            }
            SensitivitySpec::Uniform { min, max }
                if !(min >= 0.0 && max > min && max.is_finite()) =>
            {
                Err(KarmaError::InvalidParameter(format!(
                    "uniform sensitivity needs 0 <= min < max, got [{min}, {max}]"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Mean sensitivity `s_bar`.
    pub fn mean(&self) -> f64 {
        match *self {
            SensitivitySpec::Exponential { mean } => mean,
            SensitivitySpec::Uniform { min, max } => 0.5 * (min + max),
        }
    }

    /// Probability that a draw lies strictly below `threshold` (agent takes the slow arc).
    pub fn p_chill(&self, threshold: f64) -> f64 {
        if threshold <= 0.0 {
            return 0.0;
        }
        match *self {
            SensitivitySpec::Exponential { mean } => -(-threshold / mean).exp_m1(),
            SensitivitySpec::Uniform { min, max } => {
                ((threshold - min) / (max - min)).clamp(0.0, 1.0)
            }
        }
    }

    /// Probability that a draw exceeds `threshold` (agent takes the fast arc).
    pub fn p_rush(&self, threshold: f64) -> f64 {
        1.0 - self.p_chill(threshold)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            SensitivitySpec::Exponential { mean } => Exp::new(1.0 / mean)
                .expect("validated exponential mean")
                .sample(rng),
            SensitivitySpec::Uniform { min, max } => Uniform::new_inclusive(min, max)
                .expect("validated uniform range")
                .sample(rng),
        }
    }
}
