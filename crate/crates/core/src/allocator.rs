//! RSU compute allocation across DNN types for fixed partition and offload
//! decisions.
//!
//! With the discrete decisions fixed, the RSU part of the per-slot objective is
//! `Σ_k Γ_k / F_k - Σ_k Q_k F_k τ` subject to `Σ_k F_k <= f_max`. It is convex
//! in `F`, so the stationarity condition gives `F_k = sqrt(Γ_k / (η - Q_k τ))`
//! and the multiplier `η` is found by bisection on `Σ_k F_k(η) = f_max`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::LyapunovParams;
use crate::queueing::QueueState;
use crate::scenario::{CvAction, EdgeNode, Scenario};

/// Inputs of one allocation.
///
/// `q_rsu` holds the backlog weights that multiply `F_k τ` in the objective,
/// i.e. `Q_k / u²` for workload unit `u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocProblem {
    pub gamma: Vec<f64>,
    pub q_rsu: Vec<f64>,
    pub tau: f64,
    pub f_rsu_max: f64,
}

impl AllocProblem {
    pub fn validate(&self) -> Result<()> {
        if self.gamma.len() != self.q_rsu.len() {
            return Err(Error::Shape {
                expected: self.gamma.len(),
                got: self.q_rsu.len(),
            });
        }
        if !(self.f_rsu_max > 0.0 && self.f_rsu_max.is_finite()) || !(self.tau > 0.0) {
            return Err(Error::Domain("f_rsu_max and tau must be positive".into()));
        }
        if self
            .gamma
            .iter()
            .chain(&self.q_rsu)
            .any(|&x| !(x >= 0.0 && x.is_finite()))
        {
            return Err(Error::Domain("gamma and q_rsu must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    pub f: Vec<f64>,
    /// Optimal multiplier; `None` when every `Γ_k` is zero.
    pub eta: Option<f64>,
}

/// CVs of type `k` that offload a non-empty remainder to the RSU.
fn rsu_offloaders<'a>(
    actions: &'a [CvAction],
    scenario: &'a Scenario,
    k: usize,
) -> impl Iterator<Item = usize> + 'a {
    (0..scenario.num_cv()).filter(move |&i| {
        scenario.cv_type[i] == k
            && actions[i].target == EdgeNode::Rsu
            && actions[i].phi != scenario.model_of(i).num_partitions()
    })
}

/// `Γ_k = V Q_k + V Σ_i W_i + (V/2) Σ_i Σ_{i'≠i} W_{i'}` over the type-`k`
/// RSU offloaders, with `W_i` the remote FLOPs of CV `i`.
pub fn gamma_k(
    state: &QueueState,
    actions: &[CvAction],
    scenario: &Scenario,
    params: &LyapunovParams,
    k: usize,
) -> f64 {
    let w: Vec<f64> = rsu_offloaders(actions, scenario, k)
        .map(|i| scenario.model_of(i).remote_workload(actions[i].phi))
        .collect();
    let sum: f64 = w.iter().sum();
    let pairs: f64 = w.iter().map(|wi| sum - wi).sum();
    params.v * (state.q_rsu[k] + sum + 0.5 * pairs)
}

/// Builds the allocation problem for the given discrete actions.
pub fn allocation_problem(
    state: &QueueState,
    actions: &[CvAction],
    scenario: &Scenario,
    params: &LyapunovParams,
) -> AllocProblem {
    let u2 = params.workload_unit * params.workload_unit;
    AllocProblem {
        gamma: (0..scenario.num_types())
            .map(|k| gamma_k(state, actions, scenario, params, k))
            .collect(),
        q_rsu: state.q_rsu.iter().map(|q| q / u2).collect(),
        tau: scenario.tau,
        f_rsu_max: scenario.f_rsu_max,
    }
}

/// `Σ_k Γ_k / F_k - Σ_k Q_k F_k τ`, with `Γ_k / 0 = ∞` for positive `Γ_k`.
pub fn alloc_objective(f: &[f64], problem: &AllocProblem) -> f64 {
    f.iter()
        .zip(&problem.gamma)
        .zip(&problem.q_rsu)
        .map(|((&f, &g), &q)| {
            let first = if g == 0.0 {
                0.0
            } else if f <= 0.0 {
                f64::INFINITY
            } else {
                g / f
            };
            first - q * f * problem.tau
        })
        .sum()
}

/// Optimal allocation. Types with `Γ_k = 0` get nothing; if all are zero the
/// capacity is split evenly.
pub fn allocate(problem: &AllocProblem) -> Result<Allocation> {
    problem.validate()?;
    let kk = problem.gamma.len();
    if kk == 0 {
        return Ok(Allocation { f: vec![], eta: None });
    }
    let f_max = problem.f_rsu_max;
    if problem.gamma.iter().all(|&g| g == 0.0) {
        return Ok(Allocation {
            f: vec![f_max / kk as f64; kk],
            eta: None,
        });
    }

    let active: Vec<usize> = (0..kk).filter(|&k| problem.gamma[k] > 0.0).collect();
    let qt = |k: usize| problem.q_rsu[k] * problem.tau;
    let base = active.iter().map(|&k| qt(k)).fold(0.0, f64::max);
    // Parameterize by the offset s = η - base > 0 so terms at the max stay exact.
    let gaps: Vec<f64> = active.iter().map(|&k| base - qt(k)).collect();
    let share = |s: f64, n: usize| (problem.gamma[active[n]] / (s + gaps[n])).sqrt();
    let total = |s: f64| (0..active.len()).map(|n| share(s, n)).sum::<f64>();

    let g_sum: f64 = active.iter().map(|&k| problem.gamma[k]).sum();
    let mut lo = g_sum / (f_max * f_max);
    let mut guard = 0;
    while total(lo) <= f_max {
        lo *= 0.5;
        guard += 1;
        if guard > 4000 || lo == 0.0 {
            return Err(Error::Domain("allocation bracket did not close from below".into()));
        }
    }
    let mut hi = lo;
    guard = 0;
    while total(hi) >= f_max {
        hi *= 2.0;
        guard += 1;
        if guard > 4000 || !hi.is_finite() {
            return Err(Error::Domain("allocation bracket did not close from above".into()));
        }
    }

    let tol = 1e-12 * f_max;
    let mut s = 0.5 * (lo + hi);
    for _ in 0..400 {
        s = 0.5 * (lo + hi);
        let g = total(s);
        if (g - f_max).abs() <= tol || hi - lo <= 1e-15 * hi {
            break;
        }
        if g > f_max {
            lo = s;
        } else {
            hi = s;
        }
    }

    let mut f = vec![0.0; kk];
    for (n, &k) in active.iter().enumerate() {
        f[k] = share(s, n);
    }
    let residual = (f.iter().sum::<f64>() - f_max).abs();
    debug_assert!(residual <= 1e-9 * f_max, "allocation residual {residual}");
    Ok(Allocation {
        f,
        eta: Some(base + s),
    })
}

/// Allocation for the given actions in the current state.
pub fn allocate_for(
    state: &QueueState,
    actions: &[CvAction],
    scenario: &Scenario,
    params: &LyapunovParams,
) -> Result<Vec<f64>> {
    Ok(allocate(&allocation_problem(state, actions, scenario, params))?.f)
}
