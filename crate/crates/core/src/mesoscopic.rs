//! Quantised Karma-distribution Markov chain.
//!
//! The chain state is an agent's Karma deviation from its reference level,
//! shifted so index `i = k - k_ref + T*r2` (zero-based) runs over
//! `0..N` with `N = (T + 1)(p1 + r2)`. Each day a fraction `P_home` stays
//! put, and travellers either pay `p1` (move down by `p1`) or earn `r2`
//! (move up by `r2`) according to the best-response rule. The transition
//! matrix therefore has a diagonal plus one sub- and one super-diagonal,
//! and is stored that way.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{KarmaError, Result};
use crate::network::FlowVector;
use crate::pricing::PriceVector;
use crate::sensitivity::SensitivitySpec;

/// Largest chain for which [`KarmaChain::stationary_dense`] is offered.
pub const DENSE_LIMIT: usize = 200;

/// Probability vector over quantised Karma deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedDistribution {
    probs: Vec<f64>,
}

impl QuantizedDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|&v| v.is_nan() || v < 0.0) {
            return Err(KarmaError::InvalidParameter(
                "distribution must be non-empty and non-negative".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(KarmaError::InvalidParameter(format!(
                "distribution must sum to 1, got {total}"
            )));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    /// All mass on zero-based cell `index`.
    pub fn point_mass(n: usize, index: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[index] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn l1_distance(&self, other: &QuantizedDistribution) -> f64 {
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum()
    }

    pub fn total_variation(&self, other: &QuantizedDistribution) -> f64 {
        0.5 * self.l1_distance(other)
    }

    /// Mass in the poor, ok, rich and wealthy bands.
    pub fn band_masses(&self, p: &PriceVector, horizon: u32) -> [f64; 4] {
        let (p1, r2, t) = (p.p1 as usize, p.r2 as usize, horizon as usize);
        let widths = [p1, (t - 1) * (p1 + r2), p1 + r2, r2];
        let mut out = [0.0; 4];
        let mut start = 0;
        for (band, w) in widths.iter().enumerate() {
            let end = (start + w).min(self.probs.len());
            out[band] = self.probs[start..end].iter().sum();
            start = end;
        }
        out
    }

    fn renormalize(&mut self) {
        let total = self.total();
        self.probs.iter_mut().for_each(|v| *v /= total);
    }
}

/// Stationary distribution together with solver diagnostics.
#[derive(Debug, Clone)]
pub struct Stationary {
    pub distribution: QuantizedDistribution,
    pub iterations: usize,
    /// `||A P - P||_1` at the returned distribution.
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct KarmaChain {
    prices: PriceVector,
    horizon: u32,
    p_home: f64,
    sensitivity: SensitivitySpec,
    /// `chill[i]`: probability that the agent in cell `i - r2` takes arc 2.
    chill: Vec<f64>,
    /// `rush[i]`: probability that the agent in cell `i + p1` takes arc 1.
    rush: Vec<f64>,
}

impl KarmaChain {
    /// Build the transition structure for co-prime prices with `r2 >= p1`.
    pub fn build(
        prices: PriceVector,
        horizon: u32,
        p_home: f64,
        sensitivity: SensitivitySpec,
    ) -> Result<Self> {
        if !prices.is_coprime() || prices.r2 < prices.p1 {
            return Err(KarmaError::NonCanonicalPrices {
                p1: prices.p1,
                r2: prices.r2,
            });
        }
        if horizon == 0 {
            return Err(KarmaError::InvalidParameter(
                "horizon must be at least one day".into(),
            ));
        }
        if !(0.0..=1.0).contains(&p_home) {
            return Err(KarmaError::InvalidParameter(format!(
                "P_home must lie in [0, 1], got {p_home}"
            )));
        }
        sensitivity.validate()?;

        let (p1, r2, t) = (prices.p1 as usize, prices.r2 as usize, horizon as usize);
        let spread = p1 + r2;
        let n = (t + 1) * spread;
        let s_bar = sensitivity.mean();
        let scaled = |numerator: usize| s_bar * numerator as f64 / spread as f64;

        // rows use the one-based index convention of the transition equations
        let mut chill = vec![0.0; n];
        let mut rush = vec![0.0; n];
        for i in 1..=n {
            chill[i - 1] = if (r2 + 1..=r2 + p1).contains(&i) {
                1.0
            } else if (spread + 1..=t * spread).contains(&i) {
                sensitivity.p_chill(s_bar)
            } else if (t * spread + 1..=n).contains(&i) {
                sensitivity.p_chill(scaled(n + 1 - i))
            } else {
                0.0
            };
            rush[i - 1] = if (1..=(t - 1) * spread).contains(&i) {
                sensitivity.p_rush(s_bar)
            } else if ((t - 1) * spread + 1..=t * spread).contains(&i) {
                sensitivity.p_rush(scaled(t * spread + 1 - i))
            } else if (t * spread + 1..=t * p1 + (t + 1) * r2).contains(&i) {
                1.0
            } else {
                0.0
            };
        }
        Ok(Self {
            prices,
            horizon,
            p_home,
            sensitivity,
            chill,
            rush,
        })
    }

    pub fn dim(&self) -> usize {
        self.chill.len()
    }

    pub fn prices(&self) -> PriceVector {
        self.prices
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn p_home(&self) -> f64 {
        self.p_home
    }

    pub fn p_go(&self) -> f64 {
        1.0 - self.p_home
    }

    pub fn sensitivity(&self) -> SensitivitySpec {
        self.sensitivity
    }

    /// `(row, column, value)` for every non-zero of `A_chill` (zero-based).
    pub fn chill_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let r2 = self.prices.r2 as usize;
        self.chill
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(move |(i, &v)| (i, i - r2, v))
    }

    /// `(row, column, value)` for every non-zero of `A_rush` (zero-based).
    pub fn rush_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let p1 = self.prices.p1 as usize;
        self.rush
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(move |(i, &v)| (i, i + p1, v))
    }

    /// Non-zeros of `A = P_home I + P_go (A_chill + A_rush)`, zero-based.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(3 * self.dim());
        if self.p_home > 0.0 {
            out.extend((0..self.dim()).map(|i| (i, i, self.p_home)));
        }
        if self.p_go() > 0.0 {
            let p_go = self.p_go();
            out.extend(self.chill_entries().map(|(i, j, v)| (i, j, p_go * v)));
            out.extend(self.rush_entries().map(|(i, j, v)| (i, j, p_go * v)));
        }
        out.sort_by_key(|&(i, j, _)| (i, j));
        out
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.dim(), self.dim());
        for (i, j, v) in self.entries() {
            a[(i, j)] += v;
        }
        a
    }

    /// Column sums of `A`, accumulated column by column.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.dim()];
        for (_, j, v) in self.entries() {
            sums[j] += v;
        }
        sums
    }

    /// `A P`.
    pub fn step(&self, dist: &QuantizedDistribution) -> QuantizedDistribution {
        let mut out = vec![0.0; self.dim()];
        self.apply(dist.probs(), &mut out);
        QuantizedDistribution { probs: out }
    }

    fn apply(&self, input: &[f64], out: &mut [f64]) {
        let n = self.dim();
        let (p1, r2) = (self.prices.p1 as usize, self.prices.r2 as usize);
        let (p_home, p_go) = (self.p_home, self.p_go());
        for i in 0..n {
            let mut go = 0.0;
            if i >= r2 {
                go += self.chill[i] * input[i - r2];
            }
            if i + p1 < n {
                go += self.rush[i] * input[i + p1];
            }
            out[i] = p_home * input[i] + p_go * go;
        }
    }

    pub fn residual(&self, dist: &QuantizedDistribution) -> f64 {
        self.step(dist).l1_distance(dist)
    }

    /// Power iteration from the uniform distribution until `||A P - P||_1 <= tol`.
    pub fn stationary_distribution(&self, tol: f64, max_iter: usize) -> Result<Stationary> {
        if self.p_home <= 0.0 {
            return Err(KarmaError::PeriodicChain);
        }
        let n = self.dim();
        let mut current = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        let mut residual = f64::INFINITY;
        for iteration in 1..=max_iter {
            self.apply(&current, &mut next);
            residual = current.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut current, &mut next);
            if residual <= tol {
                let mut distribution = QuantizedDistribution { probs: current };
                distribution.renormalize();
                let residual = self.residual(&distribution);
                return Ok(Stationary {
                    distribution,
                    iterations: iteration,
                    residual,
                });
            }
            if iteration % 64 == 0 {
                let total: f64 = current.iter().sum();
                current.iter_mut().for_each(|v| *v /= total);
            }
        }
        Err(KarmaError::StationaryNonConvergence {
            iterations: max_iter,
            residual,
        })
    }

    /// Stationary distribution from a dense linear solve of `(A - I) P = 0`,
    /// `1^T P = 1`. Works for `P_home = 0` as long as the chain is irreducible.
    pub fn stationary_dense(&self) -> Result<QuantizedDistribution> {
        let n = self.dim();
        if n > DENSE_LIMIT {
            return Err(KarmaError::InvalidParameter(format!(
                "dense solve limited to {DENSE_LIMIT} states, chain has {n}"
            )));
        }
        let mut m = self.dense() - DMatrix::identity(n, n);
        for j in 0..n {
            m[(n - 1, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(n);
        rhs[n - 1] = 1.0;
        let sol = m.lu().solve(&rhs).ok_or_else(|| {
            KarmaError::NonConvergence("singular system: chain is not irreducible".into())
        })?;
        let probs: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
        let mut dist = QuantizedDistribution { probs };
        dist.renormalize();
        Ok(dist)
    }

    /// Mean daily flows `(P_go 1^T A_rush P, P_go 1^T A_chill P)`.
    pub fn equilibrium_flows(&self, dist: &QuantizedDistribution) -> FlowVector {
        let n = self.dim();
        let (p1, r2) = (self.prices.p1 as usize, self.prices.r2 as usize);
        let probs = dist.probs();
        let rush: f64 = (0..n.saturating_sub(p1))
            .map(|i| self.rush[i] * probs[i + p1])
            .sum();
        let chill: f64 = (r2..n).map(|i| self.chill[i] * probs[i - r2]).sum();
        FlowVector {
            x1: self.p_go() * rush,
            x2: self.p_go() * chill,
        }
    }

    pub fn write_matrix<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        #[derive(Serialize)]
        struct Entry {
            row: usize,
            column: usize,
            value: f64,
        }
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .delimiter(b' ')
            .from_path(path)?;
        for (i, j, value) in self.entries() {
            w.serialize(Entry {
                row: i + 1,
                column: j + 1,
                value,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// CSV with the one-based index, the Karma deviation `k - k_ref` and the probability.
    pub fn write_distribution<P: AsRef<Path>>(
        &self,
        dist: &QuantizedDistribution,
        path: P,
    ) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            index: usize,
            deviation: i64,
            probability: f64,
        }
        let offset = (self.horizon * self.prices.r2) as i64;
        let mut w = csv::Writer::from_path(path)?;
        for (i, &probability) in dist.probs().iter().enumerate() {
            w.serialize(Row {
                index: i + 1,
                deviation: i as i64 - offset,
                probability,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Histogram of agents over the chain's cells, normalised to a distribution.
#[derive(Debug, Clone)]
pub struct PopulationHistogram {
    pub counts: Vec<usize>,
    pub distribution: QuantizedDistribution,
    /// Agents outside the invariant band, moved to the nearest edge cell.
    pub clamped: usize,
}

/// Zero-based cell of Karma `k` for reference `k_ref`, unclamped.
pub fn cell_index(k: f64, k_ref: f64, p: &PriceVector, horizon: u32) -> i64 {
    let shift = k - k_ref + (horizon * p.r2) as f64;
    (shift + 1e-9).floor() as i64
}

/// Quantise `(k, k_ref)` pairs onto `N = (T + 1)(p1 + r2)` cells.
pub fn quantize_population(
    agents: &[(f64, f64)],
    p: &PriceVector,
    horizon: u32,
) -> PopulationHistogram {
    let n = (horizon as usize + 1) * (p.p1 + p.r2) as usize;
    let mut counts = vec![0usize; n];
    let mut clamped = 0;
    for &(k, k_ref) in agents {
        let idx = cell_index(k, k_ref, p, horizon);
        let cell = idx.clamp(0, n as i64 - 1);
        if cell != idx {
            clamped += 1;
        }
        counts[cell as usize] += 1;
    }
    let total = agents.len().max(1) as f64;
    let probs = if agents.is_empty() {
        vec![1.0 / n as f64; n]
    } else {
        counts.iter().map(|&c| c as f64 / total).collect()
    };
    PopulationHistogram {
        counts,
        distribution: QuantizedDistribution { probs },
        clamped,
    }
}
