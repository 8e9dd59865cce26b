use karma_core::{
    best_coprime_prices, rationalize_prices, FlowVector, KarmaError, PriceRatio, PriceVector,
};
use proptest::prelude::*;

fn ratio(target: f64) -> PriceRatio {
    PriceRatio {
        toll: target,
        reward: 1.0,
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

proptest! {
    #[test]
    fn fixed_scale_is_the_best_pair_at_that_scale(target in 0.2..5.0f64, max in 2u32..30, t in 1u32..9) {
        // the rule rounds the smaller price, so compare in smaller / larger
        let exact = target.min(1.0 / target);
        let err = |p: &PriceVector| (p.p1.min(p.r2) as f64 / p.p1.max(p.r2) as f64 - exact).abs();
        // all pairs whose larger component is `max`, ordered like the rounding rule
        let brute = (1..=max)
            .flat_map(|v| [PriceVector { p1: v, r2: max }, PriceVector { p1: max, r2: v }])
            .filter(|p| (p.p1 <= p.r2) == (target <= 1.0))
            .min_by(|a, b| err(a).partial_cmp(&err(b)).unwrap());
        match rationalize_prices(ratio(target), max, t) {
            Ok(p) => {
                let b = brute.unwrap();
                prop_assert!(err(&p) <= err(&b) + 1e-12);
                prop_assert!(p.fits_horizon(t));
                prop_assert_eq!(p.p1.max(p.r2), max);
            }
            Err(e) => {
                let horizon_error = matches!(e, KarmaError::InfeasibleHorizon { .. });
                prop_assert!(horizon_error);
            }
        }
    }

    #[test]
    fn best_coprime_beats_every_feasible_pair(target in 0.2..5.0f64, max in 2u32..=50, t in 1u32..9) {
        let p = best_coprime_prices(ratio(target), max, t).unwrap();
        prop_assert_eq!(gcd(p.p1, p.r2), 1);
        prop_assert!(p.fits_horizon(t) && p.p1.max(p.r2) <= max);
        let err = (p.p1 as f64 / p.r2 as f64 - target).abs();
        for p1 in 1..=max {
            for r2 in 1..=max {
                let q = PriceVector { p1, r2 };
                if q.fits_horizon(t) {
                    prop_assert!(err <= (p1 as f64 / r2 as f64 - target).abs() + 1e-12, "{q} beats {p}");
                }
            }
        }
    }

    #[test]
    fn conservation_prices_zero_the_flux(x1 in 0.01..0.99f64, frac in 0.01..0.99f64) {
        let x = FlowVector { x1, x2: (1.0 - x1) * frac };
        let r = karma_core::conservation_prices(&x).unwrap();
        prop_assert!((r.toll * x.x1 - r.reward * x.x2).abs() < 1e-12);
    }
}
