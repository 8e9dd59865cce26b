//! Karma-conserving prices and their integer rationalisation.
//!
//! In steady state the population must neither gain nor lose Karma, so the
//! toll `p1` and reward `r2` satisfy `p1 * x1* = r2 * x2*`. Only the ratio is
//! fixed; the scale is a free choice that gets rounded to integers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{KarmaError, Result};
use crate::network::FlowVector;

/// Default bound on the larger integer price.
pub const DEFAULT_MAX_PRICE: u32 = 20;

/// Integer toll on arc 1 and reward on arc 2, both in Karma units.
///
/// The signed price vector is `p = (p1, -r2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PriceVector {
    pub p1: u32,
    pub r2: u32,
}

impl PriceVector {
    pub fn new(p1: u32, r2: u32) -> Result<Self> {
        if p1 == 0 || r2 == 0 {
            return Err(KarmaError::InvalidParameter(format!(
                "toll and reward must be positive, got ({p1}, {r2})"
            )));
        }
        Ok(Self { p1, r2 })
    }

    pub fn toll(&self) -> f64 {
        self.p1 as f64
    }

    pub fn reward(&self) -> f64 {
        self.r2 as f64
    }

    /// `p1 + r2`, the Karma swing between the two choices.
    pub fn spread(&self) -> f64 {
        (self.p1 + self.r2) as f64
    }

    pub fn gcd(&self) -> u32 {
        gcd(self.p1, self.r2)
    }

    pub fn is_coprime(&self) -> bool {
        self.gcd() == 1
    }

    /// Co-prime representative with the same ratio.
    pub fn reduced(&self) -> PriceVector {
        let g = self.gcd();
        PriceVector {
            p1: self.p1 / g,
            r2: self.r2 / g,
        }
    }

    pub fn scaled(&self, factor: u32) -> PriceVector {
        PriceVector {
            p1: self.p1 * factor,
            r2: self.r2 * factor,
        }
    }

    /// Whether `r2 / p1` lies in `[1/T, T]`.
    pub fn fits_horizon(&self, horizon: u32) -> bool {
        let t = horizon as u64;
        let (p1, r2) = (self.p1 as u64, self.r2 as u64);
        r2 * t >= p1 && r2 <= t * p1
    }

    /// Karma change of the population per unit of flow: `p^T x`.
    pub fn karma_flux(&self, x: &FlowVector) -> f64 {
        self.toll() * x.x1 - self.reward() * x.x2
    }
}

impl fmt::Display for PriceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, -{})", self.p1, self.r2)
    }
}

pub(crate) fn gcd(mut a: u32, mut b: u32) -> u32 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Real-valued conservation prices, normalised so the reward is 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PriceRatio {
    pub toll: f64,
    pub reward: f64,
}

impl PriceRatio {
    /// `p1 / r2`, equal to `x2* / x1*`.
    pub fn toll_per_reward(&self) -> f64 {
        self.toll / self.reward
    }
}

/// Prices with `p^T x* = 0`.
pub fn conservation_prices(x_star: &FlowVector) -> Result<PriceRatio> {
    if !(x_star.x1 > 0.0 && x_star.x2 > 0.0) {
        return Err(KarmaError::DegenerateOptimum {
            x1: x_star.x1,
            x2: x_star.x2,
        });
    }
    Ok(PriceRatio {
        toll: x_star.x2 / x_star.x1,
        reward: 1.0,
    })
}

/// Scale the larger price to `max_price` and round the other one.
///
/// This is the best integer approximation of the ratio among pairs whose
/// larger component equals `max_price`. The pair is returned at that scale;
/// use [`PriceVector::reduced`] for the co-prime representative that the
/// chain analysis expects.
pub fn rationalize_prices(ratio: PriceRatio, max_price: u32, horizon: u32) -> Result<PriceVector> {
    check_max_price(max_price)?;
    let target = ratio.toll_per_reward();
    let m = max_price as f64;
    let prices = if target <= 1.0 {
        let p1 = round_half_down(m * target).max(1.0) as u32;
        PriceVector { p1, r2: max_price }
    } else {
        let r2 = round_half_down(m / target).max(1.0) as u32;
        PriceVector { p1: max_price, r2 }
    };
    if !prices.fits_horizon(horizon) {
        return Err(KarmaError::InfeasibleHorizon { max_price, horizon });
    }
    Ok(prices)
}

/// Co-prime pair with `max(p1, r2) <= max_price` closest to the target ratio,
/// restricted to `r2 / p1` in `[1/T, T]`. Ties go to the smaller `max(p1, r2)`.
pub fn best_coprime_prices(ratio: PriceRatio, max_price: u32, horizon: u32) -> Result<PriceVector> {
    check_max_price(max_price)?;
    let target = ratio.toll_per_reward();
    let t = horizon.max(1);
    let mut best: Option<(f64, u32, PriceVector)> = None;
    for r2 in 1..=max_price {
        // p1 in [ceil(r2 / T), min(T * r2, max_price)]
        let lo = r2.div_ceil(t).max(1);
        let hi = (r2.saturating_mul(t)).min(max_price);
        if lo > hi {
            continue;
        }
        let raw = target * r2 as f64;
        for p1 in [raw.floor(), raw.ceil()] {
            let p1 = (p1.max(lo as f64).min(hi as f64)) as u32;
            let err = (p1 as f64 / r2 as f64 - target).abs();
            let size = p1.max(r2);
            let better = match best {
                None => true,
                Some((e, s, _)) => err < e || (err == e && size < s),
            };
            if better {
                best = Some((err, size, PriceVector { p1, r2 }));
            }
        }
    }
    best.map(|(_, _, p)| p.reduced())
        .ok_or(KarmaError::InfeasibleHorizon { max_price, horizon })
}

/// Choice between [`rationalize_prices`] and [`best_coprime_prices`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingRule {
    #[default]
    FixedScale,
    BestCoprime,
}

impl RoundingRule {
    pub fn round(&self, ratio: PriceRatio, max_price: u32, horizon: u32) -> Result<PriceVector> {
        match self {
            RoundingRule::FixedScale => rationalize_prices(ratio, max_price, horizon),
            RoundingRule::BestCoprime => best_coprime_prices(ratio, max_price, horizon),
        }
    }
}

fn check_max_price(max_price: u32) -> Result<()> {
    if max_price < 2 {
        return Err(KarmaError::InvalidParameter(format!(
            "max price must be at least 2, got {max_price}"
        )));
    }
    Ok(())
}

fn round_half_down(v: f64) -> f64 {
    let f = v.floor();
    if v - f > 0.5 {
        f + 1.0
    } else {
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ratio(x1: f64, x2: f64) -> PriceRatio {
        conservation_prices(&FlowVector { x1, x2 }).unwrap()
    }

    #[test]
    fn conservation_ratio() {
        assert_eq!(ratio(0.5, 0.5).toll_per_reward(), 1.0);
        let r = ratio(0.56, 0.39);
        assert!((r.toll_per_reward() - 0.39 / 0.56).abs() < 1e-15);
        assert!((r.toll * 0.56 - r.reward * 0.39).abs() < 1e-15);
    }

    #[test]
    fn degenerate_optimum() {
        let err = conservation_prices(&FlowVector { x1: 0.95, x2: 0.0 }).unwrap_err();
        assert!(matches!(err, KarmaError::DegenerateOptimum { .. }));
    }

    #[test]
    fn rationalize_reproduces_commute_prices() {
        assert_eq!(
            rationalize_prices(ratio(0.56, 0.39), 14, 6).unwrap(),
            PriceVector { p1: 10, r2: 14 }
        );
        assert_eq!(
            rationalize_prices(ratio(0.57, 0.43), 13, 6).unwrap(),
            PriceVector { p1: 10, r2: 13 }
        );
        let sym = rationalize_prices(ratio(0.475, 0.475), 10, 6).unwrap();
        assert_eq!(sym, PriceVector { p1: 10, r2: 10 });
        assert_eq!(sym.reduced(), PriceVector { p1: 1, r2: 1 });
    }

    #[test]
    fn rationalize_rejects_short_horizon() {
        // r2 / p1 = 9 needs T >= 9
        let err = rationalize_prices(ratio(0.9, 0.1), 18, 6).unwrap_err();
        assert!(matches!(err, KarmaError::InfeasibleHorizon { .. }));
        assert!(rationalize_prices(ratio(0.9, 0.1), 18, 9).is_ok());
    }

    #[test]
    fn best_coprime_examples() {
        assert_eq!(
            best_coprime_prices(ratio(0.56, 0.39), 14, 6).unwrap(),
            PriceVector { p1: 7, r2: 10 }
        );
        assert_eq!(
            best_coprime_prices(ratio(0.475, 0.475), 10, 6).unwrap(),
            PriceVector { p1: 1, r2: 1 }
        );
    }

    #[test]
    fn best_coprime_respects_band() {
        // the unconstrained best is (1, 9); with T = 6 the band forces r2 <= 6 p1
        let p = best_coprime_prices(ratio(0.9, 0.1), 20, 6).unwrap();
        assert!(p.fits_horizon(6));
        assert!(p.is_coprime());
    }

    #[test]
    fn price_vector_helpers() {
        let p = PriceVector::new(10, 14).unwrap();
        assert_eq!(p.gcd(), 2);
        assert_eq!(p.reduced(), PriceVector { p1: 5, r2: 7 });
        assert_eq!(p.reduced().scaled(2), p);
        assert!(p.fits_horizon(2) && !p.fits_horizon(1));
        assert_eq!(p.to_string(), "(10, -14)");
        assert!(PriceVector::new(0, 3).is_err());
        assert!(rationalize_prices(ratio(0.5, 0.5), 1, 6).is_err());
    }
}
