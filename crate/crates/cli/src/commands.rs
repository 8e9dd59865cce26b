//! The four subcommands, each usable as a library call.

use std::fs;
use std::path::{Path, PathBuf};

use karma_core::simulation::init_population;
use karma_core::{
    quantize_population, FlowVector, KarmaChain, PriceVector, QuantizedDistribution, Simulation,
    Summary,
};
use log::info;
use serde::Serialize;

use crate::config::{PriceDesign, RunConfig};
use crate::CliError;

/// Default residual target of the stationary solver.
pub const DEFAULT_CHAIN_TOL: f64 = 1e-13;
const CHAIN_MAX_ITER: usize = 5_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub preset: Option<String>,
    pub days: usize,
    pub seed: u64,
    pub design: PriceDesign,
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

/// Design (or take) prices, simulate, write run.csv, karma_hist.csv and summary.toml.
pub fn run(cfg: &RunConfig) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let design = cfg.resolve_prices()?;
    info!("simulating {} days with prices {}", cfg.days, design.prices);
    let mut sim = Simulation::new(cfg.scenario, cfg.model, design.prices, cfg.wardrop)?;
    if sim.population().clamped_at_init > 0 {
        info!(
            "{} agents start outside the invariant band",
            sim.population().clamped_at_init
        );
    }
    let result = sim.run(cfg.days)?;

    fs::create_dir_all(&cfg.out)?;
    let run_csv = cfg.out.join("run.csv");
    let hist_csv = cfg.out.join("karma_hist.csv");
    let summary_path = cfg.out.join("summary.toml");
    result.write_days_csv(&run_csv)?;
    result.write_histogram_csv(&hist_csv)?;
    let report = RunReport {
        preset: cfg.preset.map(|p| p.name().to_string()),
        days: cfg.days,
        seed: cfg.scenario.seed,
        design,
        summary: result.summary,
        files: vec![run_csv, hist_csv, summary_path.clone()],
    };
    write_toml(&summary_path, &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    /// Co-prime prices the chain is built on.
    pub prices: PriceVector,
    pub horizon: u32,
    pub p_home: f64,
    pub states: usize,
    pub stationary: Option<StationaryReport>,
    pub trajectory: Option<TrajectoryReport>,
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryReport {
    pub iterations: usize,
    pub residual: f64,
    pub flows: FlowVector,
    /// `x1 / x2`, equal to `r2 / p1` at stationarity.
    pub flow_ratio: f64,
    pub target_ratio: f64,
    pub ratio_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryReport {
    pub days: usize,
    pub final_flows: FlowVector,
    /// Total-variation distance between the last two days.
    pub last_step_change: f64,
}

/// Build the chain and write `chain_matrix.txt` plus either the stationary
/// distribution or a distribution trajectory from the initial population.
pub fn analyze_chain(
    cfg: &RunConfig,
    tol: Option<f64>,
    trajectory_only: bool,
) -> Result<ChainReport, CliError> {
    cfg.validate()?;
    let p_home = cfg.scenario.p_home;
    if p_home <= 0.0 && !trajectory_only {
        return Err(CliError::Refused(
            "stationary analysis needs P_home > 0 (the chain may be periodic); \
             pass --trajectory-only to iterate the distribution instead"
                .into(),
        ));
    }
    let scaled = cfg.resolve_prices()?.prices;
    let prices = scaled.reduced();
    if prices.r2 < prices.p1 {
        return Err(CliError::Refused(format!(
            "chain analysis expects r2 >= p1, got {scaled}"
        )));
    }
    let horizon = cfg.scenario.horizon;
    let chain = KarmaChain::build(prices, horizon, p_home, cfg.scenario.sensitivity)?;
    fs::create_dir_all(&cfg.out)?;
    let matrix_path = cfg.out.join("chain_matrix.txt");
    chain.write_matrix(&matrix_path)?;
    let mut files = vec![matrix_path];

    let mut report = ChainReport {
        prices,
        horizon,
        p_home,
        states: chain.dim(),
        stationary: None,
        trajectory: None,
        files: Vec::new(),
    };

    if trajectory_only {
        // the chain works in units of gcd(p1, r2) Karma
        let g = scaled.gcd() as f64;
        let pop = init_population(&cfg.scenario, &scaled)?;
        let pairs: Vec<(f64, f64)> = pop
            .karma_pairs()
            .iter()
            .map(|&(k, r)| (k / g, r / g))
            .collect();
        let mut dist = quantize_population(&pairs, &prices, horizon).distribution;
        let traj_path = cfg.out.join("chain_trajectory.csv");
        let mut rows = Vec::with_capacity(cfg.days);
        let mut last_change = 0.0;
        for day in 0..cfg.days {
            let next = chain.step(&dist);
            last_change = next.total_variation(&dist);
            let flows = chain.equilibrium_flows(&dist);
            rows.push((day, flows));
            dist = next;
        }
        write_trajectory(&traj_path, &rows)?;
        let dist_path = cfg.out.join("distribution.csv");
        chain.write_distribution(&dist, &dist_path)?;
        files.extend([traj_path, dist_path]);
        report.trajectory = Some(TrajectoryReport {
            days: cfg.days,
            final_flows: chain.equilibrium_flows(&dist),
            last_step_change: last_change,
        });
    } else {
        let st = chain.stationary_distribution(tol.unwrap_or(DEFAULT_CHAIN_TOL), CHAIN_MAX_ITER)?;
        let dist_path = cfg.out.join("stationary.csv");
        chain.write_distribution(&st.distribution, &dist_path)?;
        files.push(dist_path);
        report.stationary = Some(stationary_report(
            &chain,
            &st.distribution,
            st.iterations,
            st.residual,
        ));
    }

    let summary_path = cfg.out.join("chain_summary.toml");
    files.push(summary_path.clone());
    report.files = files;
    write_toml(&summary_path, &report)?;
    Ok(report)
}

fn stationary_report(
    chain: &KarmaChain,
    dist: &QuantizedDistribution,
    iterations: usize,
    residual: f64,
) -> StationaryReport {
    let flows = chain.equilibrium_flows(dist);
    let p = chain.prices();
    let flow_ratio = flows.x1 / flows.x2;
    let target_ratio = p.reward() / p.toll();
    StationaryReport {
        iterations,
        residual,
        flows,
        flow_ratio,
        target_ratio,
        ratio_error: (flow_ratio - target_ratio).abs(),
    }
}

fn write_trajectory(path: &Path, rows: &[(usize, FlowVector)]) -> Result<(), CliError> {
    let mut text = String::from("day,x1,x2\n");
    for (day, x) in rows {
        text.push_str(&format!("{day},{},{}\n", x.x1, x.x2));
    }
    fs::write(path, text)?;
    Ok(())
}

/// System optimum, conservation ratio and its integer rationalisations.
#[derive(Debug, Clone, Serialize)]
pub struct PriceReport {
    pub optimum: FlowVector,
    pub toll_per_reward: f64,
    pub fixed_scale: Option<PriceVector>,
    pub best_coprime: Option<PriceVector>,
    pub reduced: Option<PriceVector>,
}

pub fn design_prices(cfg: &RunConfig, tol: Option<f64>) -> Result<PriceReport, CliError> {
    cfg.validate()?;
    let mut c = cfg.clone();
    c.pricing.prices = None;
    if let Some(t) = tol {
        c.pricing.tol = t;
    }
    let optimum = c.model.system_optimum(c.scenario.p_go(), c.pricing.tol)?;
    let ratio = karma_core::conservation_prices(&optimum)?;
    let (max, t) = (c.pricing.max_price, c.scenario.horizon);
    let fixed_scale = karma_core::rationalize_prices(ratio, max, t).ok();
    let best_coprime = karma_core::best_coprime_prices(ratio, max, t).ok();
    Ok(PriceReport {
        optimum,
        toll_per_reward: ratio.toll_per_reward(),
        fixed_scale,
        best_coprime,
        reduced: fixed_scale.map(|p| p.reduced()),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimumReport {
    pub p_go: f64,
    pub optimum: FlowVector,
    pub cost: f64,
    pub discomfort: [f64; 2],
    /// Flow with equal discomforts, when it exists.
    pub balanced: Option<FlowVector>,
}

pub fn system_optimum(cfg: &RunConfig, tol: Option<f64>) -> Result<OptimumReport, CliError> {
    cfg.validate()?;
    let tol = tol.unwrap_or(cfg.pricing.tol);
    let p_go = cfg.scenario.p_go();
    let optimum = cfg.model.system_optimum(p_go, tol)?;
    Ok(OptimumReport {
        p_go,
        optimum,
        cost: cfg.model.societal_cost(&optimum),
        discomfort: cfg.model.discomfort(&optimum),
        balanced: cfg.model.balanced_flow(p_go, tol)?,
    })
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = toml::to_string(value)
        .map_err(|e| CliError::Io(format!("cannot serialise report: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    #[test]
    fn chain_refuses_zero_home_probability() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = Preset::Fig5.config();
        cfg.out = dir.path().to_path_buf();
        let err = analyze_chain(&cfg, None, false).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn chain_ratio_for_commute_prices() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = Preset::Fig3.config();
        cfg.out = dir.path().to_path_buf();
        let r = analyze_chain(&cfg, None, false).unwrap();
        let st = r.stationary.unwrap();
        assert!(st.ratio_error < 1e-9, "{}", st.ratio_error);
        assert!((st.flows.x1 - 0.554).abs() < 0.005 && (st.flows.x2 - 0.396).abs() < 0.005);
        for f in &r.files {
            assert!(f.exists());
        }
    }

    #[test]
    fn trajectory_mode_at_zero_home_probability() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = Preset::Fig5.config();
        cfg.out = dir.path().to_path_buf();
        cfg.days = 50;
        let r = analyze_chain(&cfg, None, true).unwrap();
        let t = r.trajectory.unwrap();
        assert_eq!(t.days, 50);
        assert!((t.final_flows.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn design_reports_both_rules() {
        let mut cfg = RunConfig::default();
        cfg.pricing.max_price = 14;
        let r = design_prices(&cfg, None).unwrap();
        assert_eq!(r.fixed_scale, Some(PriceVector { p1: 10, r2: 14 }));
        assert_eq!(r.reduced, Some(PriceVector { p1: 5, r2: 7 }));
        assert_eq!(r.best_coprime, Some(PriceVector { p1: 7, r2: 10 }));
    }

    #[test]
    fn optimum_report() {
        let r = system_optimum(&Preset::Fig6.config(), None).unwrap();
        assert!((r.optimum.x1 - 0.475).abs() < 0.01);
        let b = r.balanced.unwrap();
        assert!((b.x1 - 0.80).abs() < 0.01);
    }

    #[test]
    fn short_run_writes_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = Preset::Fig6.config();
        cfg.out = dir.path().join("nested");
        cfg.days = 5;
        let r = run(&cfg).unwrap();
        for f in &r.files {
            assert!(f.exists(), "{}", f.display());
        }
        let csv = fs::read_to_string(&r.files[0]).unwrap();
        assert!(csv.starts_with(
            "day,x1,x2,cost,cost_opt_ratio,delta_d,delta_s,mean_karma,regime,nash_iters"
        ));
        assert_eq!(csv.lines().count(), 6);
    }
}
