//! Individual agent decision: the closed-form best response and an
//! enumeration oracle over today's choice.
//!
//! A travelling agent trades off today's discomfort, weighted by its
//! sensitivity `s`, against the average discomfort over the next `T` days,
//! subject to ending the horizon with at least `k_ref` Karma. The optimal
//! choice only depends on which arc is faster, the Karma level and `s`.

use serde::{Deserialize, Serialize};

use crate::error::{KarmaError, Result};
use crate::pricing::PriceVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RouteChoice {
    Arc1,
    Arc2,
    Stay,
}

/// Sign of `d1 - d2` at the assumed flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscomfortOrder {
    D1LessD2,
    D1EqualD2,
    D1GreaterD2,
}

impl DiscomfortOrder {
    pub fn classify(d: [f64; 2]) -> Self {
        if d[0] < d[1] {
            DiscomfortOrder::D1LessD2
        } else if d[0] > d[1] {
            DiscomfortOrder::D1GreaterD2
        } else {
            DiscomfortOrder::D1EqualD2
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState {
    pub k: f64,
    pub k_ref: f64,
    /// Today's sensitivity.
    pub s: f64,
}

/// Karma breakpoints of the best-response rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    /// Below this level the agent's planning problem is infeasible.
    pub k_inf: f64,
    pub k_poor: f64,
    pub k_rich: f64,
    pub k_wealthy: f64,
}

impl Thresholds {
    pub fn new(k_ref: f64, p: &PriceVector, horizon: u32) -> Self {
        let (p1, r2, t) = (p.toll(), p.reward(), horizon as f64);
        Thresholds {
            k_inf: (k_ref - (t + 1.0) * r2).max(0.0),
            k_poor: p1.max(k_ref + p1 - t * r2),
            k_rich: k_ref + t * p1 - r2,
            k_wealthy: k_ref + (t + 1.0) * p1,
        }
    }

    /// Upper end of the positively invariant Karma band `[k_inf, k_wealthy + r2)`.
    pub fn invariant_top(&self, p: &PriceVector) -> f64 {
        self.k_wealthy + p.reward()
    }
}

/// Thresholds for a reference level; see [`Thresholds::new`].
pub fn thresholds(k_ref: f64, p: &PriceVector, horizon: u32) -> Thresholds {
    Thresholds::new(k_ref, p, horizon)
}

/// Closed-form best response of a travelling agent.
///
/// Karma bands are half-open with the lower end inclusive. Within a band
/// with a sensitivity threshold, `s` strictly above it picks arc 1. When the
/// arcs are equally uncomfortable the agent is indifferent above `k_poor`
/// and this returns arc 2; equilibrium selection happens in `wardrop`.
pub fn best_response(
    state: &AgentState,
    th: &Thresholds,
    s_bar: f64,
    p: &PriceVector,
    order: DiscomfortOrder,
) -> Result<RouteChoice> {
    let k = state.k;
    if k < th.k_inf {
        return Err(KarmaError::InfeasibleKarma { k, k_inf: th.k_inf });
    }
    if order != DiscomfortOrder::D1LessD2 || k < th.k_poor {
        return Ok(RouteChoice::Arc2);
    }
    let threshold = if k < th.k_rich {
        s_bar
    } else if k < th.k_wealthy {
        s_bar * (th.k_wealthy - k) / p.spread()
    } else {
        return Ok(RouteChoice::Arc1);
    };
    Ok(if state.s > threshold {
        RouteChoice::Arc1
    } else {
        RouteChoice::Arc2
    })
}

/// Sensitivity above which a non-poor agent picks arc 1 when `d1 < d2`.
pub fn sensitivity_threshold(k: f64, th: &Thresholds, s_bar: f64, p: &PriceVector) -> f64 {
    if k < th.k_rich {
        s_bar
    } else if k < th.k_wealthy {
        s_bar * (th.k_wealthy - k) / p.spread()
    } else {
        0.0
    }
}

/// Optimal plan for a fixed choice of today's arc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plan {
    pub choice: RouteChoice,
    /// Average future split `(y1, y2)` over the horizon.
    pub future: [f64; 2],
    pub objective: f64,
}

/// Best plan when today's arc is fixed to `choice`, or `None` if that
/// choice admits no Karma-feasible plan.
pub fn plan_for_choice(
    state: &AgentState,
    d: [f64; 2],
    p: &PriceVector,
    horizon: u32,
    s_bar: f64,
    choice: RouteChoice,
) -> Option<Plan> {
    let (p1, r2, t) = (p.toll(), p.reward(), horizon as f64);
    let (j, price) = match choice {
        RouteChoice::Arc1 => (0, p1),
        RouteChoice::Arc2 => (1, -r2),
        RouteChoice::Stay => return None,
    };
    // today's payment must be affordable
    if price > state.k || state.k < 0.0 {
        return None;
    }
    // budget over the horizon caps the future share of arc 1
    let cap = (state.k - state.k_ref - price + t * r2) / (t * (p1 + r2));
    if cap < 0.0 {
        return None;
    }
    let y1 = if d[0] < d[1] { cap.min(1.0) } else { 0.0 };
    let future = [y1, 1.0 - y1];
    let objective = state.s * d[j] + s_bar * t * (d[0] * future[0] + d[1] * future[1]);
    Some(Plan {
        choice,
        future,
        objective,
    })
}

/// Solve the agent's problem by enumerating today's two options.
///
/// Ties in the objective go to arc 2, matching [`best_response`].
pub fn plan_oracle(
    state: &AgentState,
    d: [f64; 2],
    p: &PriceVector,
    horizon: u32,
    s_bar: f64,
) -> Result<Plan> {
    let arc1 = plan_for_choice(state, d, p, horizon, s_bar, RouteChoice::Arc1);
    let arc2 = plan_for_choice(state, d, p, horizon, s_bar, RouteChoice::Arc2);
    match (arc1, arc2) {
        (Some(a), Some(b)) => Ok(if a.objective < b.objective { a } else { b }),
        (Some(a), None) => Ok(a),
        (None, Some(b)) => Ok(b),
        (None, None) => Err(KarmaError::InfeasibleKarma {
            k: state.k,
            k_inf: Thresholds::new(state.k_ref, p, horizon).k_inf,
        }),
    }
}

/// Karma after today's trip: `k - p^T y`.
pub fn apply_choice(k: f64, choice: RouteChoice, p: &PriceVector) -> Result<f64> {
    match choice {
        RouteChoice::Arc1 if k < p.toll() => {
            Err(KarmaError::InsufficientKarma { k, toll: p.toll() })
        }
        RouteChoice::Arc1 => Ok(k - p.toll()),
        RouteChoice::Arc2 => Ok(k + p.reward()),
        RouteChoice::Stay => Ok(k),
    }
}
