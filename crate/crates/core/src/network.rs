//! Two-arc parallel network: BPR discomfort, societal cost, the operator's
//! system optimum, and the balanced (uncontrolled) flow.

use serde::{Deserialize, Serialize};

use crate::error::{KarmaError, Result};
use crate::sensitivity::SensitivitySpec;

/// Default accuracy in `x_1` for the one-dimensional solvers.
pub const DEFAULT_FLOW_TOL: f64 = 1e-6;

/// Bureau of Public Roads volume-delay parameters for both arcs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BprParams {
    /// Free-flow discomfort per arc.
    pub free_flow: [f64; 2],
    /// Capacity per arc, as a fraction of the population.
    pub capacity: [f64; 2],
    pub alpha: f64,
    pub beta: f64,
}

impl BprParams {
    /// Fast arc with half the free-flow discomfort of the slow arc but less
    /// capacity: `d0 = (1, 2)`, `kappa = (1/2, 2/3)`, `alpha = 0.15`, `beta = 4`.
    pub fn commute() -> Self {
        Self {
            free_flow: [1.0, 2.0],
            capacity: [0.5, 2.0 / 3.0],
            alpha: 0.15,
            beta: 4.0,
        }
    }

    fn arc(&self, j: usize, flow: f64) -> f64 {
        self.free_flow[j] * (1.0 + self.alpha * (flow / self.capacity[j]).powf(self.beta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SocietalCostKind {
    /// `c(x) = d(x)`: the operator minimises total discomfort.
    #[default]
    SumOfDiscomforts,
    /// `c(x) = x`.
    LinearFlow,
}

/// Flow fractions on arc 1 and arc 2.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FlowVector {
    pub x1: f64,
    pub x2: f64,
}

impl FlowVector {
    pub fn new(x1: f64, x2: f64) -> Result<Self> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        if !ok(x1) || !ok(x2) {
            return Err(KarmaError::InvalidParameter(format!(
                "flows must lie in [0, 1], got ({x1}, {x2})"
            )));
        }
        Ok(Self { x1, x2 })
    }

    pub fn total(&self) -> f64 {
        self.x1 + self.x2
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.x1, self.x2]
    }

    pub fn max_abs_diff(&self, other: &FlowVector) -> f64 {
        (self.x1 - other.x1).abs().max((self.x2 - other.x2).abs())
    }
}

/// Per-arc discomfort and societal cost functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcCostModel {
    pub bpr: BprParams,
    pub societal_cost: SocietalCostKind,
}

impl ArcCostModel {
    pub fn new(bpr: BprParams, societal_cost: SocietalCostKind) -> Result<Self> {
        let model = Self { bpr, societal_cost };
        model.validate()?;
        Ok(model)
    }

    pub fn commute(societal_cost: SocietalCostKind) -> Self {
        Self {
            bpr: BprParams::commute(),
            societal_cost,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bpr;
        for j in 0..2 {
            if !(b.free_flow[j] > 0.0 && b.capacity[j] > 0.0) {
                return Err(KarmaError::InvalidParameter(format!(
                    "arc {} needs positive free-flow discomfort and capacity",
                    j + 1
                )));
            }
        }
        if b.alpha.is_nan() || b.alpha < 0.0 || b.beta.is_nan() || b.beta < 1.0 {
            return Err(KarmaError::InvalidParameter(format!(
                "BPR needs alpha >= 0 and beta >= 1, got alpha={}, beta={}",
                b.alpha, b.beta
            )));
        }
        Ok(())
    }

    /// Discomfort `d_j(x_j)` on both arcs.
    pub fn discomfort(&self, x: &FlowVector) -> [f64; 2] {
        [self.bpr.arc(0, x.x1), self.bpr.arc(1, x.x2)]
    }

    /// Societal cost `c(x)^T x`.
    pub fn societal_cost(&self, x: &FlowVector) -> f64 {
        match self.societal_cost {
            SocietalCostKind::SumOfDiscomforts => {
                let d = self.discomfort(x);
                d[0] * x.x1 + d[1] * x.x2
            }
            SocietalCostKind::LinearFlow => x.x1 * x.x1 + x.x2 * x.x2,
        }
    }

    fn split_cost(&self, x1: f64, p_go: f64) -> f64 {
        self.societal_cost(&FlowVector { x1, x2: p_go - x1 })
    }

    fn discomfort_gap(&self, x1: f64, p_go: f64) -> f64 {
        self.bpr.arc(0, x1) - self.bpr.arc(1, p_go - x1)
    }

    /// Minimiser of `c(x)^T x` subject to `x_1 + x_2 = p_go`, accurate to
    /// `tol` in `x_1`.
    pub fn system_optimum(&self, p_go: f64, tol: f64) -> Result<FlowVector> {
        check_demand(p_go, tol)?;
        let g = |x1: f64| self.split_cost(x1, p_go);

        // golden-section search
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let (mut a, mut b) = (0.0, p_go);
        let mut c = b - inv_phi * (b - a);
        let mut d = a + inv_phi * (b - a);
        let (mut gc, mut gd) = (g(c), g(d));
        let mut iterations = 0;
        while b - a > tol {
            iterations += 1;
            if iterations > 500 || !gc.is_finite() || !gd.is_finite() {
                return Err(KarmaError::NonConvergence(format!(
                    "golden-section bracket [{a}, {b}] after {iterations} steps"
                )));
            }
            if gc < gd {
                b = d;
                d = c;
                gd = gc;
                c = b - inv_phi * (b - a);
                gc = g(c);
            } else {
                a = c;
                c = d;
                gc = gd;
                d = a + inv_phi * (b - a);
                gd = g(d);
            }
        }

        // local grid sweep over the final bracket, plus the box edges
        let steps = 64;
        let lo = (a - tol).max(0.0);
        let hi = (b + tol).min(p_go);
        let mut best = (0.5 * (a + b), g(0.5 * (a + b)));
        let candidates = (0..=steps)
            .map(|i| lo + (hi - lo) * i as f64 / steps as f64)
            .chain([0.0, p_go]);
        for x1 in candidates {
            let v = g(x1);
            if v < best.1 {
                best = (x1, v);
            }
        }
        Ok(FlowVector {
            x1: best.0,
            x2: p_go - best.0,
        })
    }

    /// Split with equal discomfort on both arcs, found by bisection.
    ///
    /// Returns `None` when the discomfort curves never cross on `[0, p_go]`.
    /// The returned point sits on the side where `d_1 <= d_2`.
    pub fn balanced_flow(&self, p_go: f64, tol: f64) -> Result<Option<FlowVector>> {
        check_demand(p_go, tol)?;
        let h = |x1: f64| self.discomfort_gap(x1, p_go);
        if h(p_go) < 0.0 || h(0.0) > 0.0 {
            return Ok(None);
        }
        let (mut lo, mut hi) = (0.0, p_go);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= tol * 1e-3 && h(lo).abs() <= tol {
                break;
            }
        }
        Ok(Some(FlowVector {
            x1: lo,
            x2: p_go - lo,
        }))
    }
}

fn check_demand(p_go: f64, tol: f64) -> Result<()> {
    if !(p_go > 0.0 && p_go <= 1.0) {
        return Err(KarmaError::InvalidParameter(format!(
            "travelling fraction must lie in (0, 1], got {p_go}"
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(KarmaError::InvalidParameter(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    Ok(())
}

/// Uniform range `[lo, hi]` used for Karma initialisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }
}

/// How initial Karma and reference levels are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KarmaInit {
    pub k_ref: Range,
    pub k0: Range,
    /// Round draws to whole Karma units.
    #[serde(default)]
    pub integer: bool,
}

/// Population-level experiment settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub p_home: f64,
    /// Planning horizon in days.
    pub horizon: u32,
    pub population: usize,
    pub sensitivity: SensitivitySpec,
    pub karma_init: KarmaInit,
    pub seed: u64,
}

impl Scenario {
    pub fn p_go(&self) -> f64 {
        1.0 - self.p_home
    }

    pub fn s_bar(&self) -> f64 {
        self.sensitivity.mean()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_home) {
            return Err(KarmaError::InvalidParameter(format!(
                "P_home must lie in [0, 1], got {}",
                self.p_home
            )));
        }
        if self.horizon == 0 {
            return Err(KarmaError::InvalidParameter(
                "horizon must be at least one day".into(),
            ));
        }
        if self.population == 0 {
            return Err(KarmaError::InvalidParameter(
                "population must be non-empty".into(),
            ));
        }
        self.sensitivity.validate()?;
        for (name, r) in [("k_ref", self.karma_init.k_ref), ("k0", self.karma_init.k0)] {
            if !(r.lo >= 0.0 && r.hi >= r.lo && r.hi.is_finite()) {
                return Err(KarmaError::InvalidParameter(format!(
                    "{name} range must satisfy 0 <= lo <= hi, got [{}, {}]",
                    r.lo, r.hi
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> ArcCostModel {
        ArcCostModel::commute(SocietalCostKind::SumOfDiscomforts)
    }

    fn flows(x1: f64, x2: f64) -> FlowVector {
        FlowVector::new(x1, x2).unwrap()
    }

    #[test]
    fn free_flow_discomfort() {
        assert_eq!(model().discomfort(&flows(0.0, 0.0)), [1.0, 2.0]);
    }

    #[test]
    fn discomfort_at_optimum() {
        let d = model().discomfort(&flows(0.56, 0.39));
        assert!((d[0] - (1.0 + 0.15 * 1.12f64.powi(4))).abs() < 1e-12);
        assert!((d[0] - 1.236).abs() < 1e-3);
    }

    #[test]
    fn discomfort_nearly_balanced_at_080() {
        let d = model().discomfort(&flows(0.80, 0.15));
        assert!((d[0] - 1.983).abs() < 1e-3);
        assert!((d[1] - 2.001).abs() < 1e-3);
        assert!((d[0] - d[1]).abs() / d[1] < 0.02);
    }

    #[test]
    fn societal_cost_cases() {
        let lin = ArcCostModel::commute(SocietalCostKind::LinearFlow);
        assert_eq!(lin.societal_cost(&flows(0.5, 0.5)), 0.5);
        assert_eq!(model().societal_cost(&flows(0.0, 0.0)), 0.0);
        let x = flows(0.56, 0.39);
        let d = model().discomfort(&x);
        assert!((model().societal_cost(&x) - (d[0] * 0.56 + d[1] * 0.39)).abs() < 1e-15);
    }

    #[test]
    fn system_optimum_commute() {
        let x = model().system_optimum(0.95, DEFAULT_FLOW_TOL).unwrap();
        assert!(
            (x.x1 - 0.56).abs() < 0.01 && (x.x2 - 0.39).abs() < 0.01,
            "{x:?}"
        );
        assert_eq!(x.x1 + x.x2, 0.95);
        let x = model().system_optimum(1.0, DEFAULT_FLOW_TOL).unwrap();
        assert!(
            (x.x1 - 0.57).abs() < 0.01 && (x.x2 - 0.43).abs() < 0.01,
            "{x:?}"
        );
    }

    #[test]
    fn system_optimum_linear_is_symmetric() {
        let lin = ArcCostModel::commute(SocietalCostKind::LinearFlow);
        for p_go in [0.3, 0.95, 1.0] {
            let x = lin.system_optimum(p_go, 1e-9).unwrap();
            assert!((x.x1 - p_go / 2.0).abs() < 1e-8);
        }
    }

    #[test]
    fn system_optimum_beats_dense_grid() {
        let m = model();
        for p_go in [0.5, 0.95, 1.0] {
            let x = m.system_optimum(p_go, DEFAULT_FLOW_TOL).unwrap();
            let g = |x1: f64| m.societal_cost(&FlowVector { x1, x2: p_go - x1 });
            let grid_min = (0..=(p_go * 1e4) as usize)
                .map(|i| g(i as f64 * 1e-4))
                .fold(f64::INFINITY, f64::min);
            assert!(g(x.x1) <= grid_min + 1e-12, "p_go={p_go}");
        }
    }

    #[test]
    fn balanced_flow_commute() {
        for p_go in [0.95, 1.0] {
            let xb = model()
                .balanced_flow(p_go, DEFAULT_FLOW_TOL)
                .unwrap()
                .unwrap();
            assert!((xb.x1 - 0.80).abs() < 0.01, "{xb:?}");
            let d = model().discomfort(&xb);
            assert!((d[0] - d[1]).abs() <= DEFAULT_FLOW_TOL);
            assert!(d[0] <= d[1]);
        }
    }

    #[test]
    fn balanced_flow_absent_for_constant_costs() {
        let bpr = BprParams {
            free_flow: [1.0, 10.0],
            capacity: [0.5, 0.5],
            alpha: 0.0,
            beta: 4.0,
        };
        let m = ArcCostModel::new(bpr, SocietalCostKind::SumOfDiscomforts).unwrap();
        for p_go in [0.2, 0.95, 1.0] {
            assert_eq!(m.balanced_flow(p_go, DEFAULT_FLOW_TOL).unwrap(), None);
        }
    }

    #[test]
    fn balanced_flow_right_of_optimum() {
        let m = model();
        for p_go in [0.95, 1.0] {
            let opt = m.system_optimum(p_go, DEFAULT_FLOW_TOL).unwrap();
            let d = m.discomfort(&opt);
            assert!(d[0] < d[1]);
            let xb = m.balanced_flow(p_go, DEFAULT_FLOW_TOL).unwrap().unwrap();
            assert!(xb.x1 > opt.x1);
        }
        let lin = ArcCostModel::commute(SocietalCostKind::LinearFlow);
        let opt = lin.system_optimum(0.95, DEFAULT_FLOW_TOL).unwrap();
        let xb = lin.balanced_flow(0.95, DEFAULT_FLOW_TOL).unwrap().unwrap();
        assert!(xb.x1 > opt.x1);
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(FlowVector::new(-0.1, 0.5).is_err());
        assert!(model().system_optimum(0.0, 1e-6).is_err());
        assert!(model().system_optimum(0.5, 0.0).is_err());
        let mut bpr = BprParams::commute();
        bpr.beta = 0.5;
        assert!(ArcCostModel::new(bpr, SocietalCostKind::LinearFlow).is_err());
    }

    #[test]
    fn discomfort_is_monotone() {
        let m = model();
        let mut prev = m.discomfort(&flows(0.0, 0.0));
        for i in 1..=100 {
            let v = i as f64 / 100.0;
            let d = m.discomfort(&flows(v, v));
            assert!(d[0] > prev[0] && d[1] > prev[1]);
            prev = d;
        }
    }
}
