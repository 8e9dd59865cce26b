//! Daily Wardrop equilibrium for a finite population.
//!
//! Each day the flows must be reproduced by the agents' best responses to
//! them. When `d1 < d2` the best response does not depend on the discomfort
//! values, so plain best-response iteration settles in a couple of steps.
//! If the iteration lands where arc 1 is at least as slow as arc 2, the
//! population holds too much Karma and the equilibrium is the balanced
//! (uncontrolled) split: poor agents take arc 2 and the indifferent rest
//! fill arc 1 up to the balanced flow.

use serde::{Deserialize, Serialize};

use crate::agent::{best_response, AgentState, DiscomfortOrder, RouteChoice, Thresholds};
use crate::error::{KarmaError, Result};
use crate::network::{ArcCostModel, FlowVector, DEFAULT_FLOW_TOL};
use crate::pricing::PriceVector;

/// One agent's inputs for today's equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayAgent {
    pub state: AgentState,
    pub thresholds: Thresholds,
    pub travels: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Equilibrium reproduced by the best response with `d1 < d2`.
    Controlled,
    /// Balanced split with `d1 ~ d2`.
    Uncontrolled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WardropOptions {
    /// Stop when successive iterates differ by at most this in the sup norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Step size in `(0, 1]` applied to the best-response update.
    pub damping: f64,
    /// Accuracy of the balanced-flow search.
    pub flow_tol: f64,
}

impl Default for WardropOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 50,
            damping: 1.0,
            flow_tol: DEFAULT_FLOW_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WardropOutcome {
    pub flows: FlowVector,
    /// Realised choice per agent, `Stay` for non-travellers.
    pub choices: Vec<RouteChoice>,
    pub regime: Regime,
    pub iterations: usize,
}

fn flows_from(choices: &[RouteChoice], population: usize) -> FlowVector {
    let (mut n1, mut n2) = (0usize, 0usize);
    for c in choices {
        match c {
            RouteChoice::Arc1 => n1 += 1,
            RouteChoice::Arc2 => n2 += 1,
            RouteChoice::Stay => {}
        }
    }
    let m = population as f64;
    FlowVector {
        x1: n1 as f64 / m,
        x2: n2 as f64 / m,
    }
}

/// Flows produced when every traveller best-responds to `x_assumed`.
pub fn aggregate_best_response(
    agents: &[DayAgent],
    x_assumed: &FlowVector,
    model: &ArcCostModel,
    p: &PriceVector,
    s_bar: f64,
) -> Result<(FlowVector, Vec<RouteChoice>)> {
    let order = DiscomfortOrder::classify(model.discomfort(x_assumed));
    let choices = agents
        .iter()
        .map(|a| {
            if a.travels {
                best_response(&a.state, &a.thresholds, s_bar, p, order)
            } else {
                Ok(RouteChoice::Stay)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((flows_from(&choices, agents.len()), choices))
}

/// Iterate best responses from `warm_start` to today's equilibrium.
pub fn wardrop_equilibrium(
    agents: &[DayAgent],
    model: &ArcCostModel,
    p: &PriceVector,
    s_bar: f64,
    warm_start: FlowVector,
    opts: &WardropOptions,
) -> Result<WardropOutcome> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(KarmaError::InvalidParameter(format!(
            "damping must lie in (0, 1], got {}",
            opts.damping
        )));
    }
    let travellers = agents.iter().filter(|a| a.travels).count();
    if travellers == 0 {
        return Ok(WardropOutcome {
            flows: FlowVector::default(),
            choices: vec![RouteChoice::Stay; agents.len()],
            regime: Regime::Controlled,
            iterations: 0,
        });
    }

    let mut x = warm_start;
    let mut previous = x;
    for iteration in 1..=opts.max_iter {
        let order = DiscomfortOrder::classify(model.discomfort(&x));
        if order != DiscomfortOrder::D1LessD2 && iteration > 1 {
            return balanced_assignment(agents, model, opts, iteration);
        }
        let (x_br, choices) = aggregate_best_response(agents, &x, model, p, s_bar)?;
        if order == DiscomfortOrder::D1LessD2 && x_br.max_abs_diff(&x) <= opts.tol {
            return Ok(WardropOutcome {
                flows: x_br,
                choices,
                regime: Regime::Controlled,
                iterations: iteration,
            });
        }
        previous = x;
        x = FlowVector {
            x1: x.x1 + opts.damping * (x_br.x1 - x.x1),
            x2: x.x2 + opts.damping * (x_br.x2 - x.x2),
        };
    }
    Err(KarmaError::WardropNonConvergence {
        iterations: opts.max_iter,
        previous: previous.as_array(),
        last: x.as_array(),
    })
}

/// Poor travellers take arc 2; the rest fill arc 1 in agent order up to the
/// balanced flow, and the remainder takes arc 2.
fn balanced_assignment(
    agents: &[DayAgent],
    model: &ArcCostModel,
    opts: &WardropOptions,
    iterations: usize,
) -> Result<WardropOutcome> {
    let m = agents.len();
    let travelling = agents.iter().filter(|a| a.travels).count();
    let fraction = travelling as f64 / m as f64;
    let target_x1 = match model.balanced_flow(fraction, opts.flow_tol)? {
        Some(xb) => xb.x1,
        None => {
            // arc 1 slower even when empty: everyone takes arc 2
            let d = model.discomfort(&FlowVector {
                x1: 0.0,
                x2: fraction,
            });
            if d[0] > d[1] {
                0.0
            } else {
                fraction
            }
        }
    };
    // largest count that keeps d1 <= d2
    let mut quota = ((target_x1 * m as f64) + 1e-9).floor() as usize;
    let mut choices = Vec::with_capacity(m);
    for a in agents {
        let choice = if !a.travels {
            RouteChoice::Stay
        } else if a.state.k < a.thresholds.k_poor || quota == 0 {
            RouteChoice::Arc2
        } else {
            quota -= 1;
            RouteChoice::Arc1
        };
        choices.push(choice);
    }
    Ok(WardropOutcome {
        flows: flows_from(&choices, m),
        choices,
        regime: Regime::Uncontrolled,
        iterations,
    })
}
