//! One episode of `T` slots under a given policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::env::Environment;
use crate::allocator::allocate_for;
use crate::baselines::{genetic_optimize, greedy_decide, GeneticConfig};
use crate::diffusion::{decode_to_node, select_action, SelectMode};
use crate::error::Result;
use crate::lyapunov::verify_drift_bound;
use crate::qmix::{Agent, Transition};
use crate::queueing::QueueState;
use crate::scenario::{CvAction, Decision};
use crate::seed::mix_seed;

const TAG_OFFSET: u64 = 1;
const TAG_CHANNEL: u64 = 2;
const TAG_ACT: u64 = 3;
const TAG_GENETIC: u64 = 1000;

pub enum Policy<'a> {
    Learned { agents: &'a [Agent], mode: SelectMode },
    Greedy,
    Genetic(&'a GeneticConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub decision: Decision,
    pub reward: f64,
    /// Sum of the CVs' completion times (penalized).
    pub total_delay: f64,
    /// Queues after the slot's update.
    pub queues: QueueState,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeRecord {
    pub slots: Vec<SlotRecord>,
    pub transitions: Vec<Transition>,
    pub bound_checks: usize,
    pub bound_violations: usize,
}

impl EpisodeRecord {
    pub fn mean_reward(&self) -> f64 {
        mean(self.slots.iter().map(|s| s.reward))
    }

    pub fn mean_delay(&self) -> f64 {
        mean(self.slots.iter().map(|s| s.total_delay))
    }

    /// Time-averaged total backlog (FLOPs).
    pub fn mean_queue(&self) -> f64 {
        mean(self.slots.iter().map(|s| s.queues.total()))
    }

    /// Time average of every individual queue, in `QueueState::iter` order.
    pub fn queue_means(&self) -> Vec<f64> {
        let Some(first) = self.slots.first() else {
            return Vec::new();
        };
        let mut acc = vec![0.0; first.queues.iter().count()];
        for s in &self.slots {
            for (a, q) in acc.iter_mut().zip(s.queues.iter()) {
                *a += q;
            }
        }
        acc.iter().map(|a| a / self.slots.len() as f64).collect()
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Runs one episode from empty queues. With `verify_bound` the drift bound
/// is checked on every tenth slot.
pub fn run_episode(
    env: &Environment,
    policy: &Policy,
    seed: u64,
    record_transitions: bool,
    verify_bound: bool,
) -> Result<EpisodeRecord> {
    let mut offset_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, TAG_OFFSET));
    let mut channel_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, TAG_CHANNEL));
    let mut act_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, TAG_ACT));
    let offset = env.episode_offset(&mut offset_rng);
    let sc = &env.scenario;
    let mut q = QueueState::for_scenario(sc);
    let mut rec = EpisodeRecord::default();
    let learned = matches!(policy, Policy::Learned { .. });
    let mut states = if learned { env.local_states(&q, offset)? } else { Vec::new() };

    for t in 0..env.slots {
        let slot = offset + t;
        let rates = env.rates(slot, &mut channel_rng)?;
        let mut chosen = Vec::new();
        let decision = match policy {
            Policy::Learned { agents, mode } => {
                let mut actions = Vec::with_capacity(agents.len());
                for (i, agent) in agents.iter().enumerate() {
                    let qv = agent.q_values(&states[i], &mut act_rng)?;
                    let a = select_action(&qv, *mode, &mut act_rng);
                    let (phi, node) = decode_to_node(a, sc.model_of(i).num_layers(), sc.num_nodes())?;
                    actions.push(CvAction::new(phi, node));
                    chosen.push(a);
                }
                let f_rsu = allocate_for(&q, &actions, sc, &env.params)?;
                Decision { actions, f_rsu }
            }
            Policy::Greedy => greedy_decide(&q, sc, &env.params)?,
            Policy::Genetic(cfg) => {
                let cfg = GeneticConfig {
                    seed: mix_seed(seed, TAG_GENETIC + t as u64),
                    ..(*cfg).clone()
                };
                genetic_optimize(&q, sc, &rates, &env.params, &cfg)?.decision
            }
        };
        debug_assert!(sc.validate_decision(&decision).is_ok());
        let out = env.step(&q, &decision, &rates);
        if verify_bound && t % 10 == 0 {
            let check = verify_drift_bound(&q, &decision, &out.delays, sc, &env.params);
            rec.bound_checks += 1;
            if !check.holds {
                rec.bound_violations += 1;
            }
        }
        if learned {
            let next_states = env.local_states(&out.next, slot + 1)?;
            if record_transitions {
                rec.transitions.push(Transition {
                    joint_state: Environment::joint_state(&states),
                    next_joint_state: Environment::joint_state(&next_states),
                    states: std::mem::take(&mut states),
                    actions: chosen,
                    reward: out.reward,
                    next_states: next_states.clone(),
                    terminal: t + 1 == env.slots,
                });
            }
            states = next_states;
        }
        rec.slots.push(SlotRecord {
            total_delay: out.delays.iter().map(|d| d.d_total).sum(),
            reward: out.reward,
            queues: out.next.clone(),
            decision,
        });
        q = out.next;
    }
    Ok(rec)
}
