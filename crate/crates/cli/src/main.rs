use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use karma_cli::{commands, CliError, Preset, RunConfig};

#[derive(Parser)]
#[command(
    name = "karma",
    version,
    about = "Karma-priced routing on two parallel arcs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the repeated game and write run.csv, karma_hist.csv, summary.toml
    Run(Common),
    /// Build the Karma Markov chain and solve for its stationary distribution
    AnalyzeChain {
        #[command(flatten)]
        common: Common,
        /// Iterate the distribution from the initial population instead
        #[arg(long)]
        trajectory_only: bool,
    },
    /// Conservation prices from the system optimum and their integer roundings
    DesignPrices(Common),
    /// System optimum and balanced flow
    SystemOptimum(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Bound on the larger integer price
    #[arg(long)]
    max_price: Option<u32>,
    /// Solver tolerance (stationary residual or optimum accuracy)
    #[arg(long)]
    tol: Option<f64>,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

impl Common {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.preset {
            cfg.preset = Some(p);
        }
        if let Some(d) = self.days {
            cfg.days = d;
        }
        if let Some(s) = self.seed {
            cfg.scenario.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(m) = self.max_price {
            cfg.pricing.max_price = m;
        }
        cfg.apply_preset();
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<String, CliError> {
    let text = match cli.command {
        Command::Run(c) => {
            let r = commands::run(&c.config()?)?;
            let s = &r.summary;
            let mut out = format!(
                "prices {}  tail window {} days\nmean flows ({:.4}, {:.4})\n",
                r.design.prices, s.window_days, s.mean_flows.x1, s.mean_flows.x2
            );
            if let Some(x) = s.optimum {
                out += &format!("system optimum ({:.4}, {:.4})\n", x.x1, x.x2);
            }
            if let Some(v) = s.mean_cost_ratio {
                out += &format!("cost / optimum {v:.5}\n");
            }
            if let Some(v) = s.mean_delta_d {
                out += &format!("perceived discomfort {:+.2}%\n", 100.0 * v);
            }
            out += &format!("uncontrolled days {}\n", s.uncontrolled_days);
            for f in &r.files {
                out += &format!("wrote {}\n", f.display());
            }
            out
        }
        Command::AnalyzeChain {
            common,
            trajectory_only,
        } => {
            let r = commands::analyze_chain(&common.config()?, common.tol, trajectory_only)?;
            let mut out = format!("prices {}  T = {}  N = {}\n", r.prices, r.horizon, r.states);
            if let Some(st) = &r.stationary {
                out += &format!(
                    "stationary after {} iterations, residual {:.3e}\nflows ({:.6}, {:.6})\nx1/x2 = {:.12}  r2/p1 = {:.12}  error {:.3e}\n",
                    st.iterations, st.residual, st.flows.x1, st.flows.x2, st.flow_ratio, st.target_ratio, st.ratio_error
                );
            }
            if let Some(t) = &r.trajectory {
                out += &format!(
                    "{} days, final flows ({:.6}, {:.6}), last daily change {:.3e}\n",
                    t.days, t.final_flows.x1, t.final_flows.x2, t.last_step_change
                );
            }
            for f in &r.files {
                out += &format!("wrote {}\n", f.display());
            }
            out
        }
        Command::DesignPrices(c) => {
            let r = commands::design_prices(&c.config()?, c.tol)?;
            let show = |p: Option<karma_core::PriceVector>| {
                p.map_or("none".to_string(), |p| p.to_string())
            };
            format!(
                "system optimum ({:.4}, {:.4})\np1/r2 = {:.6}\nfixed scale  {}\nreduced      {}\nbest coprime {}\n",
                r.optimum.x1,
                r.optimum.x2,
                r.toll_per_reward,
                show(r.fixed_scale),
                show(r.reduced),
                show(r.best_coprime)
            )
        }
        Command::SystemOptimum(c) => {
            let r = commands::system_optimum(&c.config()?, c.tol)?;
            let mut out = format!(
                "P_go = {}\nsystem optimum ({:.6}, {:.6})  cost {:.6}\ndiscomfort ({:.6}, {:.6})\n",
                r.p_go, r.optimum.x1, r.optimum.x2, r.cost, r.discomfort[0], r.discomfort[1]
            );
            match r.balanced {
                Some(b) => out += &format!("balanced flow ({:.6}, {:.6})\n", b.x1, b.x2),
                None => out += "balanced flow: none\n",
            }
            out
        }
    };
    Ok(text)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KARMA_LOG_LEVEL", "warn"))
        .init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
