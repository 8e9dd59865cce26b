//! Artificial-currency ("Karma") incentives for repeated routing on two
//! parallel arcs.
//!
//! Agents pay a toll in Karma to use the fast arc and earn a reward on the
//! slow one. With prices that conserve Karma at the system optimum, selfish
//! best responses drive the daily flows to that optimum while letting
//! urgent agents buy the fast arc on the days they need it.
//!
//! - [`network`]: discomfort and societal cost, system optimum, balanced flow
//! - [`pricing`]: conservation prices and integer rounding
//! - [`agent`]: closed-form best response and an enumeration oracle
//! - [`mesoscopic`]: quantised Karma-distribution Markov chain
//! - [`wardrop`]: daily equilibrium of a finite population
//! - [`simulation`]: day-by-day repeated game and metrics

pub mod agent;
pub mod error;
pub mod mesoscopic;
pub mod network;
pub mod pricing;
pub mod sensitivity;
pub mod simulation;
pub mod wardrop;

pub use agent::{
    apply_choice, best_response, plan_for_choice, plan_oracle, thresholds, AgentState,
    DiscomfortOrder, Plan, RouteChoice, Thresholds,
};
pub use error::{KarmaError, Result};
pub use mesoscopic::{quantize_population, KarmaChain, QuantizedDistribution, Stationary};
pub use network::{
    ArcCostModel, BprParams, FlowVector, KarmaInit, Range, Scenario, SocietalCostKind,
};
pub use pricing::{
    best_coprime_prices, conservation_prices, rationalize_prices, PriceRatio, PriceVector,
    RoundingRule,
};
pub use sensitivity::SensitivitySpec;
pub use simulation::{run_scenario, DayRecord, RunResult, Simulation, Summary};
pub use wardrop::{
    aggregate_best_response, wardrop_equilibrium, Regime, WardropOptions, WardropOutcome,
};
