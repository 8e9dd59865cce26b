//! Run configuration: a TOML file, the built-in presets and validation.
//!
//! ```toml
//! preset = "fig3"        # optional; pins the scenario, model and prices
//! days = 500
//! out = "out"
//!
//! [scenario]
//! p_home = 0.05
//! horizon = 6
//! population = 1000
//! seed = 42
//! sensitivity = { kind = "exponential", mean = 1.0 }
//! karma_init = { k_ref = { lo = 0.0, hi = 100.0 }, k0 = { lo = 0.0, hi = 500.0 } }
//!
//! [model]
//! societal_cost = "sum_of_discomforts"   # or "linear_flow"
//! bpr = { free_flow = [1.0, 2.0], capacity = [0.5, 0.6666666666666666], alpha = 0.15, beta = 4.0 }
//!
//! [pricing]
//! prices = { p1 = 10, r2 = 14 }   # omit to design from the system optimum
//! max_price = 20
//! rule = "fixed_scale"            # or "best_coprime"
//!
//! [wardrop]
//! tol = 1e-9
//! max_iter = 50
//! damping = 1.0
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use karma_core::network::DEFAULT_FLOW_TOL;
use karma_core::pricing::DEFAULT_MAX_PRICE;
use karma_core::{
    conservation_prices, ArcCostModel, KarmaError, KarmaInit, PriceVector, Range, RoundingRule,
    Scenario, SensitivitySpec, SocietalCostKind, WardropOptions,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_DAYS: usize = 500;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// Karma-rich start with 5% staying home, `p = (10, -14)`.
    Fig3,
    /// Everyone travels every day, `p = (10, -13)`.
    Fig5,
    /// Societal cost `c(x) = x`, `p = (10, -10)`.
    Fig6,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Fig3, Preset::Fig5, Preset::Fig6];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Fig3 => "fig3",
            Preset::Fig5 => "fig5",
            Preset::Fig6 => "fig6",
        }
    }

    pub fn p_home(&self) -> f64 {
        match self {
            Preset::Fig5 => 0.0,
            _ => 0.05,
        }
    }

    pub fn prices(&self) -> PriceVector {
        match self {
            Preset::Fig3 => PriceVector { p1: 10, r2: 14 },
            Preset::Fig5 => PriceVector { p1: 10, r2: 13 },
            Preset::Fig6 => PriceVector { p1: 10, r2: 10 },
        }
    }

    pub fn societal_cost(&self) -> SocietalCostKind {
        match self {
            Preset::Fig6 => SocietalCostKind::LinearFlow,
            _ => SocietalCostKind::SumOfDiscomforts,
        }
    }

    pub fn karma_init(&self) -> KarmaInit {
        let k0 = match self {
            Preset::Fig5 => Range::new(0.0, 100.0),
            _ => Range::new(0.0, 500.0),
        };
        KarmaInit {
            k_ref: Range::new(0.0, 100.0),
            k0,
            integer: false,
        }
    }

    pub fn scenario(&self, seed: u64) -> Scenario {
        Scenario {
            p_home: self.p_home(),
            horizon: 6,
            population: 1000,
            sensitivity: SensitivitySpec::Exponential { mean: 1.0 },
            karma_init: self.karma_init(),
            seed,
        }
    }

    pub fn model(&self) -> ArcCostModel {
        ArcCostModel::commute(self.societal_cost())
    }

    /// Complete configuration for this preset.
    pub fn config(&self) -> RunConfig {
        let mut cfg = RunConfig {
            preset: Some(*self),
            ..RunConfig::default()
        };
        cfg.apply_preset();
        cfg
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig3" => Ok(Preset::Fig3),
            "fig5" => Ok(Preset::Fig5),
            "fig6" => Ok(Preset::Fig6),
            other => Err(CliError::Config(format!(
                "unknown preset '{other}', expected fig3, fig5 or fig6"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PricingConfig {
    /// Pinned prices; designed from the system optimum when absent.
    pub prices: Option<PriceVector>,
    pub max_price: u32,
    pub rule: RoundingRule,
    /// Accuracy in `x_1` of the system optimum used for design.
    pub tol: f64,
}

impl Default for PricingConfig {
    fn default() -> Self {
        Self {
            prices: None,
            max_price: DEFAULT_MAX_PRICE,
            rule: RoundingRule::FixedScale,
            tol: DEFAULT_FLOW_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub days: usize,
    pub out: PathBuf,
    pub scenario: Scenario,
    pub model: ArcCostModel,
    pub pricing: PricingConfig,
    pub wardrop: WardropOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: None,
            days: DEFAULT_DAYS,
            out: PathBuf::from("out"),
            scenario: Preset::Fig3.scenario(DEFAULT_SEED),
            model: Preset::Fig3.model(),
            pricing: PricingConfig::default(),
            wardrop: WardropOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text)
            .map_err(|e| CliError::Config(format!("cannot parse config: {e}")))?;
        cfg.apply_preset();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialise config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_toml()?)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
    }

    /// Overwrite the fields a preset pins; day count, seed and output stay.
    pub fn apply_preset(&mut self) {
        let Some(preset) = self.preset else { return };
        let seed = self.scenario.seed;
        self.scenario = preset.scenario(seed);
        self.model = preset.model();
        self.pricing.prices = Some(preset.prices());
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.days == 0 {
            return Err(CliError::Config("days must be at least 1".into()));
        }
        self.scenario.validate()?;
        self.model.validate()?;
        if let Some(p) = self.pricing.prices {
            PriceVector::new(p.p1, p.r2)?;
            if !p.fits_horizon(self.scenario.horizon) {
                return Err(CliError::Config(format!(
                    "prices {p} violate r2/p1 in [1/T, T] for T = {}",
                    self.scenario.horizon
                )));
            }
        }
        if !(self.wardrop.damping > 0.0 && self.wardrop.damping <= 1.0) {
            return Err(CliError::Config(
                "wardrop damping must lie in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    /// Pinned prices, or prices designed from the system optimum.
    pub fn resolve_prices(&self) -> Result<PriceDesign, CliError> {
        let design = design_prices(
            &self.model,
            self.scenario.p_go().max(f64::MIN_POSITIVE),
            self,
        )?;
        Ok(match self.pricing.prices {
            Some(p) => PriceDesign {
                prices: p,
                ..design
            },
            None => design,
        })
    }
}

/// System optimum and the prices derived from it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PriceDesign {
    pub optimum: karma_core::FlowVector,
    pub toll_per_reward: f64,
    pub designed: Option<PriceVector>,
    pub prices: PriceVector,
}

fn design_prices(
    model: &ArcCostModel,
    p_go: f64,
    cfg: &RunConfig,
) -> Result<PriceDesign, CliError> {
    let optimum = model.system_optimum(p_go, cfg.pricing.tol)?;
    let ratio = conservation_prices(&optimum)?;
    let designed = cfg
        .pricing
        .rule
        .round(ratio, cfg.pricing.max_price, cfg.scenario.horizon);
    let prices = match (&designed, cfg.pricing.prices) {
        (_, Some(p)) => p,
        (Ok(p), None) => *p,
        (Err(e), None) => return Err(e.clone().into()),
    };
    Ok(PriceDesign {
        optimum,
        toll_per_reward: ratio.toll_per_reward(),
        designed: designed.ok(),
        prices,
    })
}

impl From<KarmaError> for CliError {
    fn from(e: KarmaError) -> Self {
        CliError::Karma(e)
    }
}
