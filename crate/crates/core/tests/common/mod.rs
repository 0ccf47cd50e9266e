#![allow(dead_code)]

use rand::Rng;
use vecsched::dnn::{DnnModel, LayerSpec};
use vecsched::network::SlotRates;
use vecsched::queueing::QueueState;
use vecsched::scenario::{CvAction, EdgeNode, Scenario};

/// Two layers, B = (10, 20) FLOPs, D = (4, 1) bytes.
pub fn tiny_model(type_id: usize) -> DnnModel {
    DnnModel::new(
        type_id,
        "tiny",
        1,
        vec![
            LayerSpec::Conv { h: 1, w: 1, c_in: 4, c_out: 1, ker: 1 },
            LayerSpec::Fc { u_in: 1, u_out: 20 },
        ],
    )
    .unwrap()
}

pub fn random_model<R: Rng + ?Sized>(type_id: usize, rng: &mut R) -> DnnModel {
    let n_conv = rng.random_range(1..=3);
    let n_fc = rng.random_range(0..=2);
    let mut layers = Vec::new();
    for _ in 0..n_conv {
        let h = rng.random_range(4..=32);
        layers.push(LayerSpec::Conv {
            h,
            w: h,
            c_in: rng.random_range(1..=16),
            c_out: rng.random_range(1..=16),
            ker: rng.random_range(1..=3),
        });
    }
    for _ in 0..n_fc {
        layers.push(LayerSpec::Fc {
            u_in: rng.random_range(16..=512),
            u_out: rng.random_range(4..=256),
        });
    }
    DnnModel::new(type_id, format!("rand{type_id}"), 4, layers).unwrap()
}

/// Random scenario with 1..=max_cv CVs, 0..=max_sv SVs and 1..=3 types.
pub fn random_scenario<R: Rng + ?Sized>(rng: &mut R, max_cv: usize, max_sv: usize) -> Scenario {
    let k = rng.random_range(1..=3);
    let models: Vec<DnnModel> = (0..k).map(|t| random_model(t, rng)).collect();
    let n_cv = rng.random_range(1..=max_cv);
    let n_sv = rng.random_range(0..=max_sv);
    let cv_type = (0..n_cv).map(|_| rng.random_range(0..k)).collect();
    let f_loc = (0..n_cv).map(|_| rng.random_range(1e6..1e8)).collect();
    let f_veh = (0..n_sv).map(|_| rng.random_range(1e6..1e8)).collect();
    Scenario::new(models, cv_type, f_loc, f_veh, rng.random_range(1e7..1e9), 1.0).unwrap()
}

pub fn random_queues<R: Rng + ?Sized>(rng: &mut R, sc: &Scenario, scale: f64) -> QueueState {
    let mut q = QueueState::for_scenario(sc);
    for x in q.q_loc.iter_mut().chain(q.q_rsu.iter_mut()).chain(q.q_veh.iter_mut()) {
        *x = if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.0..scale) };
    }
    q
}

pub fn random_actions<R: Rng + ?Sized>(rng: &mut R, sc: &Scenario) -> Vec<CvAction> {
    (0..sc.num_cv())
        .map(|i| {
            let phi = rng.random_range(1..=sc.model_of(i).num_partitions());
            let xi = rng.random_range(1..=sc.num_nodes());
            CvAction::new(phi, EdgeNode::from_index(xi))
        })
        .collect()
}

pub fn random_rates<R: Rng + ?Sized>(rng: &mut R, sc: &Scenario) -> SlotRates {
    SlotRates {
        v2i: (0..sc.num_cv()).map(|_| rng.random_range(1e5..1e8)).collect(),
        v2v: (0..sc.num_cv())
            .map(|_| (0..sc.num_sv()).map(|_| rng.random_range(1e5..1e8)).collect())
            .collect(),
    }
}

use vecsched::allocator::{alloc_objective, AllocProblem};

/// Best objective over about 10^4 points of the capacity simplex `Σ F = f_max`.
///
/// The objective is decreasing in every `F_k`, so the boundary holds the optimum.
pub fn grid_oracle(p: &AllocProblem) -> f64 {
    let f = p.f_rsu_max;
    match p.gamma.len() {
        1 => alloc_objective(&[f], p),
        2 => (1..10_000)
            .map(|n| {
                let a = f * n as f64 / 10_000.0;
                alloc_objective(&[a, f - a], p)
            })
            .fold(f64::INFINITY, f64::min),
        3 => {
            let n = 142;
            let mut best = f64::INFINITY;
            for a in 1..n {
                for b in 1..n - a {
                    let fa = f * a as f64 / n as f64;
                    let fb = f * b as f64 / n as f64;
                    best = best.min(alloc_objective(&[fa, fb, f - fa - fb], p));
                }
            }
            best
        }
        k => panic!("grid oracle supports K <= 3, got {k}"),
    }
}

/// Random instance with `K` in 1..=3; some `Γ_k` may be zero, and then so is
/// the backlog of that type.
pub fn random_alloc_problem<R: Rng + ?Sized>(rng: &mut R) -> AllocProblem {
    let k = rng.random_range(1..=3);
    let scale = 10f64.powf(rng.random_range(-2.0..4.0));
    let gamma: Vec<f64> = (0..k)
        .map(|_| if rng.random_bool(0.15) { 0.0 } else { scale * rng.random_range(0.0..1.0) })
        .collect();
    let q_rsu = gamma
        .iter()
        .map(|&g| if g == 0.0 || rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..10.0) })
        .collect();
    AllocProblem {
        gamma,
        q_rsu,
        tau: 1.0,
        f_rsu_max: rng.random_range(1.0..50.0),
    }
}

use vecsched::neural::{Activation, DenseNet};

/// Relative error with a small floor so near-zero gradients compare absolutely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-5)
}

/// Worst relative error between `grad` and central differences of `f` over
/// the listed parameter indices.
pub fn fd_worst(
    params: &[f64],
    grad: &[f64],
    indices: impl IntoIterator<Item = usize>,
    f: impl Fn(&[f64]) -> f64,
) -> f64 {
    let h = 1e-6;
    let mut p = params.to_vec();
    let mut worst: f64 = 0.0;
    for k in indices {
        let orig = p[k];
        p[k] = orig + h;
        let up = f(&p);
        p[k] = orig - h;
        let down = f(&p);
        p[k] = orig;
        worst = worst.max(rel_err((up - down) / (2.0 * h), grad[k]));
    }
    worst
}

/// Random net of depth 1..=4 with random activations.
pub fn random_net<R: Rng + ?Sized>(rng: &mut R) -> DenseNet {
    let depth = rng.random_range(1..=4);
    let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=6)).collect();
    let acts = (0..depth)
        .map(|_| match rng.random_range(0..3) {
            0 => Activation::Identity,
            1 => Activation::Relu,
            _ => Activation::Tanh,
        })
        .collect();
    let mut net = DenseNet::new(widths, acts, rng).unwrap();
    for p in net.params_mut() {
        *p += rng.random_range(-0.1..0.1);
    }
    net
}

/// Worst relative error of the parameter and input gradients of
/// `Σ upstream · net(x)` for a random batch.
pub fn net_gradient_error<R: Rng + ?Sized>(net: &DenseNet, rng: &mut R) -> f64 {
    let batch = rng.random_range(1..=3);
    let x: Vec<f64> = (0..batch * net.input_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let up: Vec<f64> = (0..batch * net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let tape = net.forward_tape(&x, batch).unwrap();
    let mut g = vec![0.0; net.num_params()];
    let dx = net.backward(&tape, &up, &mut g).unwrap();
    let dot = |y: &[f64]| y.iter().zip(&up).map(|(a, b)| a * b).sum::<f64>();
    let by_param = fd_worst(net.params(), &g, 0..net.num_params(), |p| {
        let mut n = net.clone();
        n.set_params(p).unwrap();
        dot(n.forward_tape(&x, batch).unwrap().output())
    });
    let by_input = fd_worst(&x, &dx, 0..x.len(), |xx| dot(net.forward_tape(xx, batch).unwrap().output()));
    by_param.max(by_input)
}

use vecsched::diffusion::{ChainNoise, DiffusionPolicy, DiffusionSchedule};

/// Worst relative error of the parameter gradient through a 2-step reverse
/// chain with frozen noise.
pub fn chain_gradient_error<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let state_dim = rng.random_range(1..=4);
    let action_dim = rng.random_range(2..=5);
    let schedule = DiffusionSchedule::new(2, 0.1, 10.0).unwrap();
    let mut policy = DiffusionPolicy::new(state_dim, action_dim, &[6, 6], schedule, rng).unwrap();
    for p in policy.net.params_mut() {
        *p += rng.random_range(-0.1..0.1);
    }
    let batch = rng.random_range(1..=3);
    let states: Vec<f64> = (0..batch * state_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let noise = ChainNoise::sample(&policy.schedule, batch * action_dim, rng);
    let up: Vec<f64> = (0..batch * action_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let tape = policy.denoise_with(&states, batch, &noise).unwrap();
    let mut g = vec![0.0; policy.net.num_params()];
    policy.backward(&tape, &up, &mut g).unwrap();
    let n = policy.net.num_params();
    fd_worst(&policy.net.params().to_vec(), &g, 0..n, |p| {
        let mut q = policy.clone();
        q.net.set_params(p).unwrap();
        let out = q.denoise_with(&states, batch, &noise).unwrap();
        out.output().iter().zip(&up).map(|(a, b)| a * b).sum()
    })
}

use vecsched::qmix::MixingNet;

pub fn random_mixer<R: Rng + ?Sized>(rng: &mut R) -> (MixingNet, usize) {
    let n = rng.random_range(1..=5);
    let s = rng.random_range(1..=6);
    let mut m = MixingNet::new(n, s, rng.random_range(1..=8), &[8, 8], rng).unwrap();
    for h in m.hyper.iter_mut() {
        for p in h.params_mut() {
            *p += rng.random_range(-0.2..0.2);
        }
    }
    (m, s)
}

/// Smallest central-difference `∂Q_tot/∂q_i` at a random `(S, q)`.
pub fn min_mixer_partial<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let (m, s) = random_mixer(rng);
    let n = m.n_agents();
    let state: Vec<f64> = (0..s).map(|_| rng.random_range(-2.0..2.0)).collect();
    let q: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
    let h = 1e-4;
    (0..n)
        .map(|i| {
            let mut up = q.clone();
            up[i] += h;
            let mut down = q.clone();
            down[i] -= h;
            (m.mix(&state, &up).unwrap() - m.mix(&state, &down).unwrap()) / (2.0 * h)
        })
        .fold(f64::INFINITY, f64::min)
}

use vecsched::baselines::decision_fitness;
use vecsched::lyapunov::LyapunovParams;

/// Minimum per-slot objective over every joint `(phi, xi)` choice.
pub fn exhaustive_optimum(q: &QueueState, sc: &Scenario, rates: &SlotRates, params: &LyapunovParams) -> f64 {
    let choices: Vec<Vec<CvAction>> = (0..sc.num_cv())
        .map(|i| {
            let mut v = Vec::new();
            for phi in 1..=sc.model_of(i).num_partitions() {
                for xi in 1..=sc.num_nodes() {
                    v.push(CvAction::new(phi, EdgeNode::from_index(xi)));
                }
            }
            v
        })
        .collect();
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; choices.len()];
    loop {
        let actions: Vec<CvAction> = idx.iter().zip(&choices).map(|(&n, c)| c[n]).collect();
        best = best.min(decision_fitness(&actions, q, sc, rates, params).unwrap().0);
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return best;
            }
            idx[pos] += 1;
            if idx[pos] < choices[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Random scenario whose joint action space has at most `limit` points.
pub fn small_space_scenario<R: Rng + ?Sized>(rng: &mut R, limit: usize) -> Scenario {
    loop {
        let sc = random_scenario(rng, 3, 2);
        let size: usize = (0..sc.num_cv()).map(|i| sc.action_dim(i)).product();
        if size <= limit {
            return sc;
        }
    }
}
