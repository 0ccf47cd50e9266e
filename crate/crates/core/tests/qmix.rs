mod common;

use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vecsched::baselines::MlpAgent;
use vecsched::diffusion::{DiffusionPolicy, DiffusionSchedule};
use vecsched::neural::{Activation, DenseNet};
use vecsched::qmix::*;

/// Mixer with `Q_tot = Σ q_i` whatever the state (all weights in the biases).
fn sum_mixer(n: usize, state_dim: usize) -> MixingNet {
    let lin = |out: usize, bias: Vec<f64>| {
        let mut net = DenseNet::zeros(vec![state_dim, out], vec![Activation::Identity]).unwrap();
        net.layer_mut(0).1.copy_from_slice(&bias);
        net
    };
    let mut w1 = vec![0.0; n * n];
    for i in 0..n {
        w1[i * n + i] = 1.0;
    }
    MixingNet::from_parts(n, n, [lin(n * n, w1), lin(n, vec![0.0; n]), lin(n, vec![1.0; n]), lin(1, vec![0.0])]).unwrap()
}

/// Agent whose Q-values are the output biases, independent of the state.
fn bias_agent(state_dim: usize, q: &[f64]) -> Agent {
    let mut net = DenseNet::zeros(vec![state_dim, q.len()], vec![Activation::Identity]).unwrap();
    net.layer_mut(0).1.copy_from_slice(q);
    Agent::Mlp(MlpAgent::from_net(net))
}

fn transition(n: usize, state_dim: usize, reward: f64, terminal: bool) -> Transition {
    Transition {
        states: vec![vec![0.5; state_dim]; n],
        joint_state: vec![0.5; n * state_dim],
        actions: vec![0; n],
        reward,
        next_states: vec![vec![0.25; state_dim]; n],
        next_joint_state: vec![0.25; n * state_dim],
        terminal,
    }
}

fn config(discount: f64) -> TrainerConfig {
    TrainerConfig {
        discount,
        reward_scale: 1.0,
        grad_clip: 0.0,
        ..Default::default()
    }
}

#[test]
fn mixer_is_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        assert!(common::min_mixer_partial(&mut rng) >= -1e-9);
    }
}

#[test]
fn mixer_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let (m, s) = common::random_mixer(&mut rng);
        let n = m.n_agents();
        let batch = 2;
        let states: Vec<f64> = (0..batch * s).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q: Vec<f64> = (0..batch * n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let up = [0.7, -1.3];
        let tape = m.forward(&states, &q, batch).unwrap();
        let mut grads: [Vec<f64>; 4] = std::array::from_fn(|h| vec![0.0; m.hyper[h].num_params()]);
        let dq = m.backward(&tape, &up, &mut grads).unwrap();
        let total = |mm: &MixingNet, qq: &[f64]| -> f64 {
            let t = mm.forward(&states, qq, batch).unwrap();
            t.output().iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        assert!(common::fd_worst(&q, &dq, 0..q.len(), |qq| total(&m, qq)) < 1e-4);
        for h in 0..4 {
            let err = common::fd_worst(&m.hyper[h].params().to_vec(), &grads[h], 0..grads[h].len(), |p| {
                let mut mm = m.clone();
                mm.hyper[h].set_params(p).unwrap();
                total(&mm, &q)
            });
            assert!(err < 1e-4, "hypernet {h}: {err}");
        }
    }
}

#[test]
fn target_is_reward_without_discount_or_at_terminal() {
    let agents = vec![bias_agent(2, &[1.0, 5.0]), bias_agent(2, &[3.0, -1.0])];
    let learner = Learner::new(config(0.0), agents.clone(), sum_mixer(2, 4), 0).unwrap();
    let batch = [transition(2, 2, -3.5, false)];
    let refs: Vec<&Transition> = batch.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(learner.td_targets(&refs, &mut rng).unwrap(), vec![-3.5]);

    let learner = Learner::new(config(0.9), agents, sum_mixer(2, 4), 0).unwrap();
    let term = [transition(2, 2, -3.5, true)];
    let refs: Vec<&Transition> = term.iter().collect();
    assert_eq!(learner.td_targets(&refs, &mut rng).unwrap(), vec![-3.5]);
}

#[test]
fn hand_computed_target() {
    // max_a Q = 5 and 3, summed to 8; y = 2 * 0.5 + 0.9 * 8.
    let agents = vec![bias_agent(2, &[1.0, 5.0]), bias_agent(2, &[3.0, -1.0])];
    let cfg = TrainerConfig {
        reward_scale: 2.0,
        ..config(0.9)
    };
    let learner = Learner::new(cfg, agents, sum_mixer(2, 4), 0).unwrap();
    let batch = [transition(2, 2, 0.5, false)];
    let refs: Vec<&Transition> = batch.iter().collect();
    let y = learner.td_targets(&refs, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_relative_eq!(y[0], 1.0 + 0.9 * 8.0, max_relative = 1e-12);
    // Q_tot(s, a = 0) = 1 + 3 = 4; loss = ½ (8.2 - 4)²
    let loss = learner.loss(&refs, &y, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_relative_eq!(loss, 0.5 * 4.2 * 4.2, max_relative = 1e-12);
}

#[test]
fn loss_is_zero_at_the_target() {
    let agents = vec![bias_agent(1, &[2.0, 0.0])];
    let learner = Learner::new(config(0.0), agents, sum_mixer(1, 1), 0).unwrap();
    let batch = [transition(1, 1, 2.0, false)];
    let refs: Vec<&Transition> = batch.iter().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let y = learner.td_targets(&refs, &mut rng).unwrap();
    assert_eq!(learner.loss(&refs, &y, &mut rng).unwrap(), 0.0);
}

fn random_batch<R: Rng + ?Sized>(rng: &mut R, n: usize, s: usize, a: usize, size: usize) -> Vec<Transition> {
    (0..size)
        .map(|k| {
            let states: Vec<Vec<f64>> = (0..n).map(|_| (0..s).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let next: Vec<Vec<f64>> = (0..n).map(|_| (0..s).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            Transition {
                joint_state: states.concat(),
                next_joint_state: next.concat(),
                states,
                next_states: next,
                actions: (0..n).map(|_| rng.random_range(0..a)).collect(),
                reward: rng.random_range(-1.0..1.0),
                terminal: k % 5 == 4,
            }
        })
        .collect()
}

fn small_learner(seed: u64, diffusion: bool) -> Learner {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, s, a) = (2, 3, 4);
    let agents = (0..n)
        .map(|_| {
            if diffusion {
                let sched = DiffusionSchedule::new(3, 0.1, 10.0).unwrap();
                Agent::Diffusion(DiffusionPolicy::new(s, a, &[16, 16], sched, &mut rng).unwrap())
            } else {
                Agent::Mlp(MlpAgent::new(s, a, &[16, 16], &mut rng).unwrap())
            }
        })
        .collect();
    let mixer = MixingNet::new(n, n * s, 8, &[16], &mut rng).unwrap();
    let cfg = TrainerConfig {
        lr: 1e-2,
        reward_scale: 1.0,
        ..TrainerConfig::default()
    };
    Learner::new(cfg, agents, mixer, seed).unwrap()
}

#[test]
fn training_reduces_loss_on_a_fixed_batch() {
    for diffusion in [false, true] {
        let mut learner = small_learner(3, diffusion);
        let batch = random_batch(&mut ChaCha8Rng::seed_from_u64(4), 2, 3, 4, 16);
        let refs: Vec<&Transition> = batch.iter().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = learner.td_targets(&refs, &mut rng).unwrap();
        let first = learner.loss(&refs, &y, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        for _ in 0..50 {
            learner.train_step(&refs).unwrap();
        }
        let last = learner.loss(&refs, &y, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert!(last < first, "diffusion={diffusion}: {last} >= {first}");
    }
}

#[test]
fn training_is_deterministic_and_serializable() {
    let batch = random_batch(&mut ChaCha8Rng::seed_from_u64(4), 2, 3, 4, 8);
    let refs: Vec<&Transition> = batch.iter().collect();
    let mut a = small_learner(9, true);
    let mut b = small_learner(9, true);
    for _ in 0..5 {
        assert_eq!(a.train_step(&refs).unwrap(), b.train_step(&refs).unwrap());
    }
    assert_eq!(a, b);
    let mut c = Learner::from_json(&a.to_json()).unwrap();
    assert_eq!(c, a);
    assert_eq!(a.train_step(&refs).unwrap(), c.train_step(&refs).unwrap());
    assert_eq!(a.updates(), 6);
}

#[test]
fn soft_update_moves_targets_toward_online() {
    let mut learner = small_learner(1, false);
    for p in learner.agents[0].net_mut().params_mut() {
        *p += 1.0;
    }
    let gap = |l: &Learner| -> f64 {
        l.agents[0]
            .net()
            .params()
            .iter()
            .zip(l.target_agents[0].net().params())
            .map(|(a, b)| (a - b).abs())
            .sum()
    };
    let before = gap(&learner);
    learner.soft_update_targets();
    let after = gap(&learner);
    assert_relative_eq!(after, (1.0 - learner.config.target_rate) * before, max_relative = 1e-9);
}

#[test]
fn td_fixed_point() {
    // One agent with one action and constant states: Q converges to r / (1 - ω).
    let agents = vec![bias_agent(1, &[0.0])];
    let cfg = TrainerConfig {
        lr: 0.01,
        target_rate: 1.0,
        ..config(0.5)
    };
    let mut learner = Learner::new(cfg, agents, sum_mixer(1, 1), 0).unwrap();
    let t = Transition {
        states: vec![vec![1.0]],
        joint_state: vec![1.0],
        actions: vec![0],
        reward: 1.0,
        next_states: vec![vec![1.0]],
        next_joint_state: vec![1.0],
        terminal: false,
    };
    let refs = vec![&t];
    for _ in 0..3000 {
        learner.train_step(&refs).unwrap();
    }
    let q = learner.agents[0].q_values(&[1.0], &mut ChaCha8Rng::seed_from_u64(0)).unwrap()[0];
    let total = learner.mixer.mix(&[1.0], &[q]).unwrap();
    assert!((total - 2.0).abs() < 1e-2, "{total}");
}

#[test]
fn empty_batch_is_rejected() {
    let mut learner = small_learner(1, false);
    assert!(learner.train_step(&[]).is_err());
}

proptest! {
    #[test]
    fn mixer_monotone_everywhere(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(common::min_mixer_partial(&mut rng) >= -1e-9);
    }
}
