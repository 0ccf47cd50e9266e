//! Randomized check of the drift-plus-penalty upper bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::allocate_for;
use crate::dnn::DnnModel;
use crate::error::Result;
use crate::lyapunov::{verify_drift_bound, LyapunovParams};
use crate::network::SlotRates;
use crate::queueing::{slot_delays, QueueState};
use crate::scenario::{CvAction, Decision, EdgeNode, Scenario};
use crate::seed::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub scenarios: usize,
    pub samples: usize,
    pub violations: usize,
    /// Largest `lhs - rhs` seen (negative when every sample has room).
    pub worst_gap: f64,
}

fn random_scenario<R: Rng + ?Sized>(rng: &mut R) -> Result<Scenario> {
    let names = ["alexnet", "resnet18", "vgg16"];
    let n_types = rng.random_range(1..=names.len());
    let models = names[..n_types]
        .iter()
        .map(|n| DnnModel::builtin(n))
        .collect::<Result<Vec<_>>>()?;
    let n_cv = rng.random_range(1..=6);
    let n_sv = rng.random_range(0..=4);
    let cv_type = (0..n_cv).map(|_| rng.random_range(0..n_types)).collect();
    let f_loc = (0..n_cv).map(|_| rng.random_range(4e9..6e9)).collect();
    let f_veh = (0..n_sv).map(|_| rng.random_range(6e9..8e9)).collect();
    Scenario::new(models, cv_type, f_loc, f_veh, 30e9, rng.random_range(0.5..2.0))
}

fn random_queue<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<f64>() < 0.2 {
        0.0
    } else {
        rng.random_range(0.0..2e11)
    }
}

fn random_decision<R: Rng + ?Sized>(
    rng: &mut R,
    q: &QueueState,
    sc: &Scenario,
    params: &LyapunovParams,
) -> Result<Decision> {
    let actions: Vec<CvAction> = (0..sc.num_cv())
        .map(|i| {
            let phi = rng.random_range(1..=sc.model_of(i).num_partitions());
            CvAction::new(phi, EdgeNode::from_index(rng.random_range(1..=sc.num_nodes())))
        })
        .collect();
    let f_rsu = if rng.random::<bool>() {
        allocate_for(q, &actions, sc, params)?
    } else {
        let w: Vec<f64> = (0..sc.num_types()).map(|_| rng.random::<f64>()).collect();
        let total: f64 = w.iter().sum::<f64>() + rng.random::<f64>();
        w.iter().map(|x| x / total * sc.f_rsu_max).collect()
    };
    Ok(Decision { actions, f_rsu })
}

/// Draws `samples` random transitions spread over `scenarios` random scenarios
/// and checks the bound on each.
pub fn random_bound_trials(scenarios: usize, samples: usize, seed: u64) -> Result<BoundReport> {
    let mut report = BoundReport {
        scenarios,
        samples: 0,
        violations: 0,
        worst_gap: f64::NEG_INFINITY,
    };
    let scenarios = scenarios.max(1);
    for s in 0..scenarios {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, s as u64));
        let sc = random_scenario(&mut rng)?;
        let unit = if rng.random::<bool>() { 1e9 } else { 1.0 };
        let params = LyapunovParams::new(rng.random_range(0.0..100.0), unit);
        let per = samples / scenarios + usize::from(s < samples % scenarios);
        for _ in 0..per {
            let q = QueueState {
                q_loc: (0..sc.num_cv()).map(|_| random_queue(&mut rng)).collect(),
                q_rsu: (0..sc.num_types()).map(|_| random_queue(&mut rng)).collect(),
                q_veh: (0..sc.num_sv()).map(|_| random_queue(&mut rng)).collect(),
            };
            let decision = random_decision(&mut rng, &q, &sc, &params)?;
            let rates = SlotRates {
                v2i: (0..sc.num_cv()).map(|_| rng.random_range(0.0..3e8)).collect(),
                v2v: (0..sc.num_cv())
                    .map(|_| (0..sc.num_sv()).map(|_| rng.random_range(0.0..3e8)).collect())
                    .collect(),
            };
            let delays = slot_delays(&q, &decision, &rates, &sc);
            let check = verify_drift_bound(&q, &decision, &delays, &sc, &params);
            report.samples += 1;
            if !check.holds {
                report.violations += 1;
            }
            report.worst_gap = report.worst_gap.max(check.lhs - check.rhs);
        }
    }
    Ok(report)
}
