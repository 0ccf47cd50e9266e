//! Quadratic Lyapunov function, the per-slot drift-plus-penalty objective and
//! a pathwise check of its upper bound.
//!
//! Queue quantities enter the quadratic terms divided by `workload_unit`
//! (e.g. `1e9` to work in GFLOPs), so `V` trades seconds of delay against
//! squared backlog in those units. With `workload_unit = 1` every formula
//! reads directly in FLOPs.
//!
//! For one queue `Q' = max(Q - b + a, 0)` with `a, b >= 0`:
//!
//! ```text
//! Q'^2 <= (Q - b + a)^2 = Q^2 + (a - b)^2 + 2 Q (a - b) <= Q^2 + a^2 + b^2 + 2 Q (a - b)
//! ```
//!
//! so the drift is bounded by `sum Q (a - b) + chi`, where `chi` collects the
//! halved squares with arrivals replaced by full-model workloads.

use serde::{Deserialize, Serialize};

use crate::queueing::{arrivals, DelayBreakdown, QueueState};
use crate::scenario::{Decision, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovParams {
    /// Penalty weight on the summed delay.
    pub v: f64,
    /// FLOPs per queue unit.
    pub workload_unit: f64,
}

impl LyapunovParams {
    pub fn new(v: f64, workload_unit: f64) -> Self {
        Self { v, workload_unit }
    }
}

impl Default for LyapunovParams {
    fn default() -> Self {
        Self {
            v: 10.0,
            workload_unit: 1e9,
        }
    }
}

/// `½ Σ Q²` over every queue (in queue units).
pub fn lyapunov_value(q: &QueueState, params: &LyapunovParams) -> f64 {
    let u = params.workload_unit;
    0.5 * q.iter().map(|x| (x / u) * (x / u)).sum::<f64>()
}

/// `L(next) - L(state)` for one realized transition.
pub fn exact_drift(state: &QueueState, next: &QueueState, params: &LyapunovParams) -> f64 {
    lyapunov_value(next, params) - lyapunov_value(state, params)
}

/// `Σ Q (arrivals - service)` across all queues, in squared queue units.
pub fn queue_pressure(
    state: &QueueState,
    decision: &Decision,
    scenario: &Scenario,
    params: &LyapunovParams,
) -> f64 {
    let u2 = params.workload_unit * params.workload_unit;
    let tau = scenario.tau;
    let a = arrivals(&decision.actions, scenario);
    let term = |q: &[f64], arr: &[f64], service: &dyn Fn(usize) -> f64| -> f64 {
        q.iter()
            .zip(arr)
            .enumerate()
            .map(|(n, (&q, &a))| q * (a - service(n) * tau))
            .sum::<f64>()
    };
    (term(&state.q_loc, &a.loc, &|i| scenario.f_loc[i])
        + term(&state.q_rsu, &a.rsu, &|k| decision.f_rsu[k])
        + term(&state.q_veh, &a.veh, &|j| scenario.f_veh[j]))
        / u2
}

fn total_delay(delays: &[DelayBreakdown]) -> f64 {
    delays.iter().map(|d| d.d_total).sum()
}

/// Drift-plus-penalty objective of one slot: `V Σ d_i + Σ Q (A - f τ)`.
pub fn per_slot_objective(
    state: &QueueState,
    decision: &Decision,
    delays: &[DelayBreakdown],
    scenario: &Scenario,
    params: &LyapunovParams,
) -> f64 {
    penalty(params.v, delays) + queue_pressure(state, decision, scenario, params)
}

/// `V Σ d_i`, taken as zero when `V = 0` even if a delay is infinite.
fn penalty(v: f64, delays: &[DelayBreakdown]) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v * total_delay(delays)
    }
}

/// Common reward shared by every agent: the negated per-slot objective.
pub fn common_reward(
    state: &QueueState,
    decision: &Decision,
    delays: &[DelayBreakdown],
    scenario: &Scenario,
    params: &LyapunovParams,
) -> f64 {
    -per_slot_objective(state, decision, delays, scenario, params)
}

/// Decision-independent constant of the drift bound, using full-model
/// workloads as arrival bounds and the current RSU allocation for its service term.
pub fn chi_constant(scenario: &Scenario, f_rsu: &[f64], params: &LyapunovParams) -> f64 {
    let u = params.workload_unit;
    let tau = scenario.tau;
    let sq = |x: f64| (x / u) * (x / u);
    let full: Vec<f64> = (0..scenario.num_cv())
        .map(|i| scenario.model_of(i).total_workload() as f64)
        .collect();
    let mut per_type = vec![0.0; scenario.num_types()];
    for (i, w) in full.iter().enumerate() {
        per_type[scenario.cv_type[i]] += w;
    }
    let all: f64 = full.iter().sum();

    let local = full.iter().map(|&w| sq(w)).sum::<f64>()
        + scenario.f_loc.iter().map(|&f| sq(f * tau)).sum::<f64>();
    let rsu = per_type.iter().map(|&w| sq(w)).sum::<f64>()
        + f_rsu.iter().map(|&f| sq(f * tau)).sum::<f64>();
    let veh = scenario.num_sv() as f64 * sq(all)
        + scenario.f_veh.iter().map(|&f| sq(f * tau)).sum::<f64>();
    0.5 * (local + rsu + veh)
}

/// Outcome of one pathwise bound check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub holds: bool,
    /// Exact drift plus `V Σ d_i`.
    pub lhs: f64,
    /// Queue-pressure bound plus `V Σ d_i` plus `chi`.
    pub rhs: f64,
}

/// Checks `L(Q(t+1)) - L(Q(t)) + V Σ d <= Σ Q (A - f τ) + V Σ d + chi` for the
/// realized transition under `decision`, with slack `1e-6 max(1, |rhs|)`.
pub fn verify_drift_bound(
    state: &QueueState,
    decision: &Decision,
    delays: &[DelayBreakdown],
    scenario: &Scenario,
    params: &LyapunovParams,
) -> BoundCheck {
    let next = crate::queueing::update_queues(state, decision, scenario);
    let drift = exact_drift(state, &next, params);
    let bound = queue_pressure(state, decision, scenario, params)
        + chi_constant(scenario, &decision.f_rsu, params);
    let penalty = penalty(params.v, delays);
    // Infinite delays sit on both sides; compare the finite parts.
    let (lhs, rhs) = if penalty.is_finite() {
        (drift + penalty, bound + penalty)
    } else {
        (drift, bound)
    };
    let slack = 1e-6 * rhs.abs().max(1.0);
    BoundCheck {
        holds: lhs <= rhs + slack,
        lhs,
        rhs,
    }
}
