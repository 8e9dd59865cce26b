//! Repeated-game simulation over a finite population.
//!
//! Every day each agent stays home with probability `P_home`; travellers
//! draw a fresh sensitivity, the population settles into the day's Wardrop
//! equilibrium, and Karma is charged or credited. All randomness for a day
//! is drawn up front in agent order from a seeded ChaCha stream, so runs
//! are bit-reproducible.

use std::path::Path;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::agent::{apply_choice, AgentState, RouteChoice, Thresholds};
use crate::error::{KarmaError, Result};
use crate::mesoscopic::{quantize_population, PopulationHistogram};
use crate::network::{ArcCostModel, FlowVector, Range, Scenario, DEFAULT_FLOW_TOL};
use crate::pricing::PriceVector;
use crate::wardrop::{wardrop_equilibrium, DayAgent, Regime, WardropOptions};

/// Fraction of the run used for summary statistics.
pub const TAIL_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentKarma {
    pub k: f64,
    pub k_ref: f64,
    pub thresholds: Thresholds,
}

#[derive(Debug, Clone)]
pub struct Population {
    agents: Vec<AgentKarma>,
    rng: ChaCha8Rng,
    /// Agents whose initial Karma was raised to `k_inf`.
    pub clamped_at_init: usize,
}

impl Population {
    pub fn agents(&self) -> &[AgentKarma] {
        &self.agents
    }

    pub fn total_karma(&self) -> f64 {
        self.agents.iter().map(|a| a.k).sum()
    }

    pub fn mean_karma(&self) -> f64 {
        self.total_karma() / self.agents.len() as f64
    }

    pub fn karma_pairs(&self) -> Vec<(f64, f64)> {
        self.agents.iter().map(|a| (a.k, a.k_ref)).collect()
    }
}

fn draw(rng: &mut ChaCha8Rng, r: Range, integer: bool) -> f64 {
    let v = if r.hi > r.lo {
        rng.random_range(r.lo..=r.hi)
    } else {
        r.lo
    };
    if integer {
        v.round()
    } else {
        v
    }
}

/// Draw reference and initial Karma levels, lifting any `k(0) < k_inf`.
pub fn init_population(scenario: &Scenario, prices: &PriceVector) -> Result<Population> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let init = scenario.karma_init;
    let mut clamped = 0;
    let agents = (0..scenario.population)
        .map(|_| {
            let k_ref = draw(&mut rng, init.k_ref, init.integer);
            let mut k = draw(&mut rng, init.k0, init.integer);
            let thresholds = Thresholds::new(k_ref, prices, scenario.horizon);
            if k < thresholds.k_inf {
                k = thresholds.k_inf;
                clamped += 1;
            }
            AgentKarma {
                k,
                k_ref,
                thresholds,
            }
        })
        .collect();
    if clamped > 0 {
        info!("raised {clamped} agents to their Karma floor at initialisation");
    }
    Ok(Population {
        agents,
        rng,
        clamped_at_init: clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DayRecord {
    pub day: usize,
    pub flows: FlowVector,
    pub travellers: usize,
    pub societal_cost: f64,
    /// Societal cost relative to the optimum at the nominal travelling fraction.
    pub cost_ratio: Option<f64>,
    pub delta_d: Option<f64>,
    pub delta_s: Option<f64>,
    /// Mean Karma after the day's payments.
    pub mean_karma: f64,
    pub total_karma: f64,
    pub regime: Regime,
    pub nash_iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayMetrics {
    pub delta_d: Option<f64>,
    pub delta_s: Option<f64>,
    pub mean_karma: f64,
    pub societal_cost: f64,
}

/// Perceived-discomfort gain over a sensitivity-unaware assignment to the
/// same flows, relative sensitivity deviation, mean Karma and societal cost.
///
/// `sensitivities` is indexed like `choices`; entries of non-travellers are
/// ignored. The two relative metrics are `None` when nobody travels.
pub fn compute_metrics(
    choices: &[RouteChoice],
    sensitivities: &[f64],
    flows: &FlowVector,
    karma: &[f64],
    model: &ArcCostModel,
    s_bar: f64,
) -> DayMetrics {
    let d = model.discomfort(flows);
    let (mut excess, mut baseline, mut ds, mut travellers) = (0.0, 0.0, 0.0, 0usize);
    for (choice, &s) in choices.iter().zip(sensitivities) {
        let dj = match choice {
            RouteChoice::Arc1 => d[0],
            RouteChoice::Arc2 => d[1],
            RouteChoice::Stay => continue,
        };
        travellers += 1;
        excess += (s - s_bar) * dj;
        baseline += s_bar * dj;
        ds += s - s_bar;
    }
    let m = choices.len().max(1) as f64;
    let (delta_d, delta_s) = if travellers > 0 {
        (Some(excess / baseline), Some(ds / (m * s_bar)))
    } else {
        (None, None)
    };
    DayMetrics {
        delta_d,
        delta_s,
        mean_karma: karma.iter().sum::<f64>() / karma.len().max(1) as f64,
        societal_cost: model.societal_cost(flows),
    }
}

/// Tail-window averages of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub window_days: usize,
    pub optimum: Option<FlowVector>,
    pub optimal_cost: Option<f64>,
    pub mean_flows: FlowVector,
    pub mean_cost: f64,
    pub mean_cost_ratio: Option<f64>,
    pub mean_delta_d: Option<f64>,
    pub mean_delta_s: Option<f64>,
    pub mean_karma: f64,
    pub uncontrolled_days: usize,
    pub max_nash_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub days: Vec<DayRecord>,
    pub final_histogram: PopulationHistogram,
    pub summary: Summary,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl RunResult {
    /// One row per day: day, x1, x2, cost, cost_opt_ratio, delta_d,
    /// delta_s, mean_karma, regime, nash_iters.
    pub fn write_days_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        #[derive(Serialize)]
        struct Row {
            day: usize,
            x1: f64,
            x2: f64,
            cost: f64,
            cost_opt_ratio: Option<f64>,
            delta_d: Option<f64>,
            delta_s: Option<f64>,
            mean_karma: f64,
            regime: Regime,
            nash_iters: usize,
        }
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.days {
            w.serialize(Row {
                day: r.day,
                x1: r.flows.x1,
                x2: r.flows.x2,
                cost: r.societal_cost,
                cost_opt_ratio: r.cost_ratio,
                delta_d: r.delta_d,
                delta_s: r.delta_s,
                mean_karma: r.mean_karma,
                regime: r.regime,
                nash_iters: r.nash_iterations,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Final Karma histogram over deviation cells: index, count.
    pub fn write_histogram_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["index", "count"])?;
        for (i, c) in self.final_histogram.counts.iter().enumerate() {
            w.write_record([(i + 1).to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Owns the population and advances it one day at a time.
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    model: ArcCostModel,
    prices: PriceVector,
    options: WardropOptions,
    population: Population,
    optimum: Option<FlowVector>,
    optimal_cost: Option<f64>,
    last_flows: FlowVector,
    day: usize,
}

impl Simulation {
    pub fn new(
        scenario: Scenario,
        model: ArcCostModel,
        prices: PriceVector,
        options: WardropOptions,
    ) -> Result<Self> {
        model.validate()?;
        let population = init_population(&scenario, &prices)?;
        let optimum = if scenario.p_go() > 0.0 {
            Some(model.system_optimum(scenario.p_go(), DEFAULT_FLOW_TOL)?)
        } else {
            None
        };
        let optimal_cost = optimum.map(|x| model.societal_cost(&x));
        Ok(Self {
            scenario,
            model,
            prices,
            options,
            population,
            optimum,
            optimal_cost,
            last_flows: optimum.unwrap_or_default(),
            day: 0,
        })
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn optimum(&self) -> Option<FlowVector> {
        self.optimum
    }

    pub fn simulate_day(&mut self) -> Result<DayRecord> {
        let s_bar = self.scenario.s_bar();
        let p_go = self.scenario.p_go();
        let sensitivity = self.scenario.sensitivity;
        let pop = &mut self.population;

        let mut sensitivities = vec![0.0; pop.agents.len()];
        let mut day_agents = Vec::with_capacity(pop.agents.len());
        for (i, a) in pop.agents.iter().enumerate() {
            let travels = pop.rng.random_bool(p_go);
            if travels {
                sensitivities[i] = sensitivity.sample(&mut pop.rng);
            }
            day_agents.push(DayAgent {
                state: AgentState {
                    k: a.k,
                    k_ref: a.k_ref,
                    s: sensitivities[i],
                },
                thresholds: a.thresholds,
                travels,
            });
        }

        let outcome = wardrop_equilibrium(
            &day_agents,
            &self.model,
            &self.prices,
            s_bar,
            self.last_flows,
            &self.options,
        )?;

        for (a, &choice) in pop.agents.iter_mut().zip(&outcome.choices) {
            a.k = apply_choice(a.k, choice, &self.prices)?;
            if a.k < a.thresholds.k_inf {
                return Err(KarmaError::InfeasibleKarma {
                    k: a.k,
                    k_inf: a.thresholds.k_inf,
                });
            }
        }

        let karma: Vec<f64> = pop.agents.iter().map(|a| a.k).collect();
        let metrics = compute_metrics(
            &outcome.choices,
            &sensitivities,
            &outcome.flows,
            &karma,
            &self.model,
            s_bar,
        );
        let travellers = day_agents.iter().filter(|a| a.travels).count();
        if outcome.flows.total() > 0.0 {
            self.last_flows = outcome.flows;
        }
        let record = DayRecord {
            day: self.day,
            flows: outcome.flows,
            travellers,
            societal_cost: metrics.societal_cost,
            cost_ratio: self.optimal_cost.map(|c| metrics.societal_cost / c),
            delta_d: metrics.delta_d,
            delta_s: metrics.delta_s,
            mean_karma: metrics.mean_karma,
            total_karma: karma.iter().sum(),
            regime: outcome.regime,
            nash_iterations: outcome.iterations,
        };
        debug!(
            "day {} flows ({:.4}, {:.4}) regime {:?} mean karma {:.2}",
            record.day, record.flows.x1, record.flows.x2, record.regime, record.mean_karma
        );
        self.day += 1;
        Ok(record)
    }

    pub fn run(&mut self, days: usize) -> Result<RunResult> {
        if days == 0 {
            return Err(KarmaError::InvalidParameter(
                "day count must be at least 1".into(),
            ));
        }
        let records = (0..days)
            .map(|_| self.simulate_day())
            .collect::<Result<Vec<_>>>()?;
        let final_histogram = quantize_population(
            &self.population.karma_pairs(),
            &self.prices,
            self.scenario.horizon,
        );
        let summary = self.summarize(&records);
        Ok(RunResult {
            days: records,
            final_histogram,
            summary,
        })
    }

    fn summarize(&self, records: &[DayRecord]) -> Summary {
        let window =
            ((records.len() as f64 * TAIL_FRACTION).ceil() as usize).clamp(1, records.len());
        let tail = &records[records.len() - window..];
        let n = tail.len() as f64;
        Summary {
            window_days: window,
            optimum: self.optimum,
            optimal_cost: self.optimal_cost,
            mean_flows: FlowVector {
                x1: tail.iter().map(|r| r.flows.x1).sum::<f64>() / n,
                x2: tail.iter().map(|r| r.flows.x2).sum::<f64>() / n,
            },
            mean_cost: tail.iter().map(|r| r.societal_cost).sum::<f64>() / n,
            mean_cost_ratio: mean_of(tail.iter().filter_map(|r| r.cost_ratio)),
            mean_delta_d: mean_of(tail.iter().filter_map(|r| r.delta_d)),
            mean_delta_s: mean_of(tail.iter().filter_map(|r| r.delta_s)),
            mean_karma: tail.iter().map(|r| r.mean_karma).sum::<f64>() / n,
            uncontrolled_days: records
                .iter()
                .filter(|r| r.regime == Regime::Uncontrolled)
                .count(),
            max_nash_iterations: records.iter().map(|r| r.nash_iterations).max().unwrap_or(0),
        }
    }
}

/// Run `days` days of the repeated game with default equilibrium options.
pub fn run_scenario(
    scenario: &Scenario,
    model: &ArcCostModel,
    prices: &PriceVector,
    days: usize,
) -> Result<RunResult> {
    Simulation::new(*scenario, *model, *prices, WardropOptions::default())?.run(days)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{KarmaInit, SocietalCostKind};
    use crate::sensitivity::SensitivitySpec;

    fn scenario(p_home: f64, k_ref: Range, k0: Range) -> Scenario {
        Scenario {
            p_home,
            horizon: 6,
            population: 200,
            sensitivity: SensitivitySpec::Exponential { mean: 1.0 },
            karma_init: KarmaInit {
                k_ref,
                k0,
                integer: false,
            },
            seed: 7,
        }
    }

    fn model() -> ArcCostModel {
        ArcCostModel::commute(SocietalCostKind::SumOfDiscomforts)
    }

    #[test]
    fn degenerate_ranges_give_identical_agents() {
        let p = PriceVector::new(10, 14).unwrap();
        let s = scenario(0.05, Range::new(40.0, 40.0), Range::new(70.0, 70.0));
        let pop = init_population(&s, &p).unwrap();
        assert!(pop.agents().iter().all(|a| a.k == 70.0 && a.k_ref == 40.0));
        assert_eq!(pop.clamped_at_init, 0);
    }

    #[test]
    fn init_lifts_to_floor() {
        let p = PriceVector::new(10, 14).unwrap();
        let s = scenario(0.05, Range::new(300.0, 300.0), Range::new(0.0, 10.0));
        let pop = init_population(&s, &p).unwrap();
        assert_eq!(pop.clamped_at_init, 200);
        assert!(pop.agents().iter().all(|a| a.k == 300.0 - 7.0 * 14.0));
    }

    #[test]
    fn everyone_home() {
        let p = PriceVector::new(10, 14).unwrap();
        let s = scenario(1.0, Range::new(0.0, 100.0), Range::new(0.0, 100.0));
        let mut sim = Simulation::new(s, model(), p, WardropOptions::default()).unwrap();
        let before = sim.population().total_karma();
        let rec = sim.simulate_day().unwrap();
        assert_eq!(rec.flows.total(), 0.0);
        assert_eq!(rec.societal_cost, 0.0);
        assert_eq!(rec.delta_d, None);
        assert_eq!(sim.population().total_karma(), before);
    }

    #[test]
    fn metrics_vanish_at_mean_sensitivity() {
        let choices = [RouteChoice::Arc1, RouteChoice::Arc2, RouteChoice::Stay];
        let flows = FlowVector {
            x1: 1.0 / 3.0,
            x2: 1.0 / 3.0,
        };
        let m = compute_metrics(
            &choices,
            &[1.0, 1.0, 5.0],
            &flows,
            &[3.0, 6.0, 9.0],
            &model(),
            1.0,
        );
        assert_eq!(m.delta_d, Some(0.0));
        assert_eq!(m.delta_s, Some(0.0));
        assert_eq!(m.mean_karma, 6.0);
    }

    #[test]
    fn metrics_hand_example() {
        let model = model();
        let flows = FlowVector { x1: 0.5, x2: 0.5 };
        let d = model.discomfort(&flows);
        let choices = [RouteChoice::Arc1, RouteChoice::Arc2];
        let m = compute_metrics(&choices, &[2.0, 0.5], &flows, &[0.0, 0.0], &model, 1.0);
        let expected = (1.0 * d[0] - 0.5 * d[1]) / (d[0] + d[1]);
        assert!((m.delta_d.unwrap() - expected).abs() < 1e-15);
        assert!((m.delta_s.unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_zero_days() {
        let p = PriceVector::new(10, 14).unwrap();
        let s = scenario(0.05, Range::new(0.0, 100.0), Range::new(0.0, 100.0));
        assert!(run_scenario(&s, &model(), &p, 0).is_err());
    }

    #[test]
    fn short_run_records_every_day() {
        let p = PriceVector::new(10, 14).unwrap();
        let s = scenario(0.05, Range::new(0.0, 100.0), Range::new(0.0, 500.0));
        let res = run_scenario(&s, &model(), &p, 30).unwrap();
        assert_eq!(res.days.len(), 30);
        assert_eq!(res.summary.window_days, 6);
        for r in &res.days {
            assert!((r.flows.total() - r.travellers as f64 / 200.0).abs() < 1e-12);
        }
        assert_eq!(res.final_histogram.counts.iter().sum::<usize>(), 200);
    }
}
