//! Centralized value-decomposition training: monotonic mixing network driven
//! by hypernetworks, replay buffer, TD targets and soft target updates.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::MlpAgent;
use crate::diffusion::{ChainNoise, ChainTape, DiffusionPolicy};
use crate::error::{Error, Result};
use crate::neural::{soft_update, Activation, Adam, DenseNet, Tape};

/// Per-agent value network: diffusion policy or plain MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Agent {
    Diffusion(DiffusionPolicy),
    Mlp(MlpAgent),
}

#[derive(Debug, Clone)]
pub enum AgentTape {
    Chain(ChainTape),
    Mlp(Tape),
}

impl AgentTape {
    pub fn output(&self) -> &[f64] {
        match self {
            AgentTape::Chain(t) => t.output(),
            AgentTape::Mlp(t) => t.output(),
        }
    }
}

impl Agent {
    pub fn net(&self) -> &DenseNet {
        match self {
            Agent::Diffusion(p) => &p.net,
            Agent::Mlp(m) => &m.net,
        }
    }

    pub fn net_mut(&mut self) -> &mut DenseNet {
        match self {
            Agent::Diffusion(p) => &mut p.net,
            Agent::Mlp(m) => &mut m.net,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            Agent::Diffusion(p) => p.action_dim(),
            Agent::Mlp(m) => m.action_dim(),
        }
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Agent::Diffusion(p) => p.state_dim(),
            Agent::Mlp(m) => m.state_dim(),
        }
    }

    /// Q-values for `batch` local states (row-major `batch x action_dim`).
    pub fn forward<R: Rng + ?Sized>(&self, states: &[f64], batch: usize, rng: &mut R) -> Result<AgentTape> {
        match self {
            Agent::Diffusion(p) => Ok(AgentTape::Chain(p.denoise(states, batch, rng)?)),
            Agent::Mlp(m) => Ok(AgentTape::Mlp(m.net.forward_tape(states, batch)?)),
        }
    }

    /// Q-values used in TD targets. A diffusion agent runs the noise-free
    /// chain when `samples == 0` and otherwise averages `samples` sampled chains.
    pub fn target_values<R: Rng + ?Sized>(
        &self,
        states: &[f64],
        batch: usize,
        samples: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        match self {
            Agent::Diffusion(p) if samples == 0 => {
                let noise = ChainNoise::zeros(&p.schedule, batch * p.action_dim());
                Ok(p.denoise_with(states, batch, &noise)?.output().to_vec())
            }
            Agent::Diffusion(p) => {
                let mut acc = vec![0.0; batch * p.action_dim()];
                for _ in 0..samples {
                    let tape = p.denoise(states, batch, rng)?;
                    acc.iter_mut().zip(tape.output()).for_each(|(a, q)| *a += q);
                }
                acc.iter_mut().for_each(|a| *a /= samples as f64);
                Ok(acc)
            }
            Agent::Mlp(m) => Ok(m.net.forward_tape(states, batch)?.output().to_vec()),
        }
    }

    pub fn q_values<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.forward(state, 1, rng)?.output().to_vec())
    }

    /// Accumulates parameter gradients of `Σ upstream · q`.
    pub fn backward(&self, tape: &AgentTape, upstream: &[f64], grad: &mut [f64]) -> Result<()> {
        match (self, tape) {
            (Agent::Diffusion(p), AgentTape::Chain(t)) => p.backward(t, upstream, grad),
            (Agent::Mlp(m), AgentTape::Mlp(t)) => m.net.backward(t, upstream, grad).map(|_| ()),
            _ => Err(Error::Config("agent and tape kinds differ".into())),
        }
    }
}

/// `Q_tot = |W2(S)| · (|W1(S)| q + b1(S)) + b2(S)` with hypernetworks `W1, b1, W2, b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingNet {
    n_agents: usize,
    embed: usize,
    /// `W1` (`I x E`), `b1` (`E`), `W2` (`E`), `b2` (`1`).
    pub hyper: [DenseNet; 4],
}

#[derive(Debug, Clone)]
pub struct MixTape {
    batch: usize,
    tapes: Vec<Tape>,
    q: Vec<f64>,
    hidden: Vec<f64>,
    out: Vec<f64>,
}

impl MixTape {
    pub fn output(&self) -> &[f64] {
        &self.out
    }
}

impl MixingNet {
    pub fn new<R: Rng + ?Sized>(
        n_agents: usize,
        state_dim: usize,
        embed: usize,
        hyper_hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut make = |out: usize| {
            DenseNet::mlp(state_dim, hyper_hidden, out, Activation::Relu, Activation::Identity, rng)
        };
        let hyper = [make(n_agents * embed)?, make(embed)?, make(embed)?, make(1)?];
        Self::from_parts(n_agents, embed, hyper)
    }

    pub fn from_parts(n_agents: usize, embed: usize, hyper: [DenseNet; 4]) -> Result<Self> {
        let outs = [n_agents * embed, embed, embed, 1];
        let s = hyper[0].input_dim();
        for (net, &o) in hyper.iter().zip(&outs) {
            if net.output_dim() != o || net.input_dim() != s {
                return Err(Error::Shape {
                    expected: o,
                    got: net.output_dim(),
                });
            }
        }
        Ok(Self {
            n_agents,
            embed,
            hyper,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn state_dim(&self) -> usize {
        self.hyper[0].input_dim()
    }

    pub fn forward(&self, states: &[f64], q: &[f64], batch: usize) -> Result<MixTape> {
        let (n, e) = (self.n_agents, self.embed);
        if q.len() != batch * n {
            return Err(Error::Shape {
                expected: batch * n,
                got: q.len(),
            });
        }
        let tapes = self
            .hyper
            .iter()
            .map(|h| h.forward_tape(states, batch))
            .collect::<Result<Vec<_>>>()?;
        let (w1, b1, w2, b2) = (
            tapes[0].output(),
            tapes[1].output(),
            tapes[2].output(),
            tapes[3].output(),
        );
        let mut hidden = vec![0.0; batch * e];
        let mut out = vec![0.0; batch];
        for r in 0..batch {
            let qr = &q[r * n..(r + 1) * n];
            let mut total = b2[r];
            for k in 0..e {
                let mut h = b1[r * e + k];
                for (i, &qi) in qr.iter().enumerate() {
                    h += w1[r * n * e + i * e + k].abs() * qi;
                }
                hidden[r * e + k] = h;
                total += w2[r * e + k].abs() * h;
            }
            out[r] = total;
        }
        Ok(MixTape {
            batch,
            tapes,
            q: q.to_vec(),
            hidden,
            out,
        })
    }

    /// `Q_tot` for one joint state.
    pub fn mix(&self, state: &[f64], q: &[f64]) -> Result<f64> {
        Ok(self.forward(state, q, 1)?.out[0])
    }

    /// Accumulates hypernetwork gradients of `Σ upstream · Q_tot` into `grads`
    /// and returns `∂/∂q` (row-major `batch x I`).
    pub fn backward(&self, tape: &MixTape, upstream: &[f64], grads: &mut [Vec<f64>; 4]) -> Result<Vec<f64>> {
        let (n, e, batch) = (self.n_agents, self.embed, tape.batch);
        if upstream.len() != batch {
            return Err(Error::Shape {
                expected: batch,
                got: upstream.len(),
            });
        }
        let w1 = tape.tapes[0].output();
        let w2 = tape.tapes[2].output();
        let mut d_w1 = vec![0.0; batch * n * e];
        let mut d_b1 = vec![0.0; batch * e];
        let mut d_w2 = vec![0.0; batch * e];
        let mut d_q = vec![0.0; batch * n];
        for r in 0..batch {
            let g = upstream[r];
            for k in 0..e {
                let raw2 = w2[r * e + k];
                d_w2[r * e + k] = g * tape.hidden[r * e + k] * sign(raw2);
                let dh = g * raw2.abs();
                d_b1[r * e + k] = dh;
                for i in 0..n {
                    let raw1 = w1[r * n * e + i * e + k];
                    d_w1[r * n * e + i * e + k] = dh * tape.q[r * n + i] * sign(raw1);
                    d_q[r * n + i] += dh * raw1.abs();
                }
            }
        }
        let ups = [d_w1, d_b1, d_w2, upstream.to_vec()];
        for h in 0..4 {
            self.hyper[h].backward(&tape.tapes[h], &ups[h], &mut grads[h])?;
        }
        Ok(d_q)
    }

    fn zero_grads(&self) -> [Vec<f64>; 4] {
        std::array::from_fn(|h| vec![0.0; self.hyper[h].num_params()])
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One slot of experience for every agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Per-agent local states, each of the agents' common state width.
    pub states: Vec<Vec<f64>>,
    pub joint_state: Vec<f64>,
    pub actions: Vec<usize>,
    pub reward: f64,
    pub next_states: Vec<Vec<f64>>,
    pub next_joint_state: Vec<f64>,
    /// Last slot of the episode: no bootstrap.
    pub terminal: bool,
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: Vec::new(),
            next: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `size` distinct transitions drawn uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        if size > self.items.len() {
            return Err(Error::InsufficientSamples {
                size: self.items.len(),
                requested: size,
            });
        }
        Ok(index::sample(rng, self.items.len(), size)
            .into_iter()
            .map(|n| &self.items[n])
            .collect())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    /// Discount `ω`.
    pub discount: f64,
    /// Soft target rate.
    pub target_rate: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub episodes: usize,
    pub lr: f64,
    pub warmup_episodes: usize,
    pub updates_per_episode: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of training over which exploration anneals linearly.
    pub eps_anneal_fraction: f64,
    pub grad_clip: f64,
    /// Rewards are multiplied by this before entering TD targets.
    pub reward_scale: f64,
    pub agent_hidden: Vec<usize>,
    pub mixer_embed: usize,
    pub hyper_hidden: Vec<usize>,
    /// Greedy evaluation episode every this many training episodes.
    pub eval_every: usize,
    /// Chains averaged per diffusion target evaluation; 0 runs the noise-free chain.
    pub target_samples: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            discount: 0.99,
            target_rate: 0.001,
            batch_size: 32,
            buffer_capacity: 5000,
            episodes: 200,
            lr: 5e-4,
            warmup_episodes: 10,
            updates_per_episode: 8,
            eps_start: 0.9,
            eps_end: 0.05,
            eps_anneal_fraction: 0.5,
            grad_clip: 10.0,
            reward_scale: 1e-3,
            agent_hidden: vec![256, 256, 256],
            mixer_embed: 32,
            hyper_hidden: vec![64, 64],
            eval_every: 1,
            target_samples: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::Config(format!("discount {} not in [0, 1)", self.discount)));
        }
        if !(self.target_rate > 0.0 && self.target_rate <= 1.0) {
            return Err(Error::Config(format!("target rate {} not in (0, 1]", self.target_rate)));
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return Err(Error::Config("buffer must hold at least one batch".into()));
        }
        if !(self.lr > 0.0) || self.eval_every == 0 {
            return Err(Error::Config("lr and eval_every must be positive".into()));
        }
        Ok(())
    }

    /// Linear anneal from `eps_start` to `eps_end` over the first part of training.
    pub fn epsilon(&self, episode: usize) -> f64 {
        let horizon = (self.eps_anneal_fraction * self.episodes as f64).max(1.0);
        let frac = (episode as f64 / horizon).min(1.0);
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }
}

/// Online and target networks with their optimizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub config: TrainerConfig,
    pub agents: Vec<Agent>,
    pub target_agents: Vec<Agent>,
    pub mixer: MixingNet,
    pub target_mixer: MixingNet,
    agent_opt: Vec<Adam>,
    mixer_opt: Vec<Adam>,
    seed: u64,
    updates: u64,
}

impl Learner {
    pub fn new(config: TrainerConfig, agents: Vec<Agent>, mixer: MixingNet, seed: u64) -> Result<Self> {
        config.validate()?;
        if agents.len() != mixer.n_agents() {
            return Err(Error::Shape {
                expected: mixer.n_agents(),
                got: agents.len(),
            });
        }
        let agent_opt = agents
            .iter()
            .map(|a| Adam::new(a.net().num_params(), config.lr))
            .collect();
        let mixer_opt = mixer
            .hyper
            .iter()
            .map(|h| Adam::new(h.num_params(), config.lr))
            .collect();
        Ok(Self {
            target_agents: agents.clone(),
            target_mixer: mixer.clone(),
            config,
            agents,
            mixer,
            agent_opt,
            mixer_opt,
            seed,
            updates: 0,
        })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Fresh generator for update number `self.updates`, so a reloaded learner
    /// continues the same stream.
    fn step_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(crate::seed::mix_seed(self.seed, 0x7d_0000 + self.updates))
    }

    fn stack<'a>(batch: &[&'a Transition], pick: impl Fn(&'a Transition) -> &'a [f64]) -> Vec<f64> {
        batch.iter().flat_map(|t| pick(t).iter().copied()).collect()
    }

    /// `r + ω Q̂_tot(S', max_a Q̂_i(s'_i, a))`, without bootstrap at terminal slots.
    pub fn td_targets<R: Rng + ?Sized>(&self, batch: &[&Transition], rng: &mut R) -> Result<Vec<f64>> {
        let b = batch.len();
        let n = self.agents.len();
        let scale = self.config.reward_scale;
        if self.config.discount == 0.0 {
            return Ok(batch.iter().map(|t| scale * t.reward).collect());
        }
        let mut max_q = vec![0.0; b * n];
        for (i, agent) in self.target_agents.iter().enumerate() {
            let states = Self::stack(batch, |t| &t.next_states[i]);
            let q = agent.target_values(&states, b, self.config.target_samples, rng)?;
            let a = agent.action_dim();
            for r in 0..b {
                let row = &q[r * a..(r + 1) * a];
                max_q[r * n + i] = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
        }
        let joint = Self::stack(batch, |t| &t.next_joint_state);
        let q_next = self.target_mixer.forward(&joint, &max_q, b)?;
        Ok(batch
            .iter()
            .zip(q_next.output())
            .map(|(t, &qn)| {
                let boot = if t.terminal { 0.0 } else { self.config.discount * qn };
                scale * t.reward + boot
            })
            .collect())
    }

    /// Mean `½ (y - Q_tot)²` of the online networks and its gradients.
    fn loss_and_grads<R: Rng + ?Sized>(
        &self,
        batch: &[&Transition],
        targets: &[f64],
        rng: &mut R,
    ) -> Result<(f64, Vec<Vec<f64>>, [Vec<f64>; 4])> {
        let b = batch.len();
        let n = self.agents.len();
        let mut tapes = Vec::with_capacity(n);
        let mut chosen = vec![0.0; b * n];
        for (i, agent) in self.agents.iter().enumerate() {
            let states = Self::stack(batch, |t| &t.states[i]);
            let tape = agent.forward(&states, b, rng)?;
            let a = agent.action_dim();
            for (r, t) in batch.iter().enumerate() {
                chosen[r * n + i] = tape.output()[r * a + t.actions[i]];
            }
            tapes.push(tape);
        }
        let joint = Self::stack(batch, |t| &t.joint_state);
        let mix = self.mixer.forward(&joint, &chosen, b)?;
        let mut loss = 0.0;
        let mut upstream = vec![0.0; b];
        for r in 0..b {
            let err = mix.output()[r] - targets[r];
            loss += 0.5 * err * err;
            upstream[r] = err / b as f64;
        }
        loss /= b as f64;

        let mut mixer_grads = self.mixer.zero_grads();
        let d_q = self.mixer.backward(&mix, &upstream, &mut mixer_grads)?;
        let mut agent_grads = Vec::with_capacity(n);
        for (i, agent) in self.agents.iter().enumerate() {
            let a = agent.action_dim();
            let mut up = vec![0.0; b * a];
            for (r, t) in batch.iter().enumerate() {
                up[r * a + t.actions[i]] = d_q[r * n + i];
            }
            let mut g = vec![0.0; agent.net().num_params()];
            agent.backward(&tapes[i], &up, &mut g)?;
            agent_grads.push(g);
        }
        Ok((loss, agent_grads, mixer_grads))
    }

    /// Loss of the online networks on `batch` against precomputed targets.
    pub fn loss<R: Rng + ?Sized>(&self, batch: &[&Transition], targets: &[f64], rng: &mut R) -> Result<f64> {
        Ok(self.loss_and_grads(batch, targets, rng)?.0)
    }

    /// One joint Adam step on all agents and the mixer, followed by a soft
    /// target update. Returns the pre-step loss.
    pub fn train_step(&mut self, batch: &[&Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InsufficientSamples { size: 0, requested: 1 });
        }
        let mut rng = self.step_rng();
        let targets = self.td_targets(batch, &mut rng)?;
        let (loss, mut agent_grads, mut mixer_grads) = self.loss_and_grads(batch, &targets, &mut rng)?;

        let sq: f64 = agent_grads
            .iter()
            .chain(mixer_grads.iter())
            .flat_map(|g| g.iter())
            .map(|g| g * g)
            .sum();
        let norm = sq.sqrt();
        if self.config.grad_clip > 0.0 && norm > self.config.grad_clip {
            let s = self.config.grad_clip / norm;
            for g in agent_grads.iter_mut().chain(mixer_grads.iter_mut()) {
                g.iter_mut().for_each(|v| *v *= s);
            }
        }
        for (i, g) in agent_grads.iter().enumerate() {
            self.agent_opt[i].update(self.agents[i].net_mut().params_mut(), g)?;
        }
        for (h, g) in mixer_grads.iter().enumerate() {
            self.mixer_opt[h].update(self.mixer.hyper[h].params_mut(), g)?;
        }
        self.soft_update_targets();
        self.updates += 1;
        Ok(loss)
    }

    pub fn soft_update_targets(&mut self) {
        let eps = self.config.target_rate;
        for (online, target) in self.agents.iter().zip(self.target_agents.iter_mut()) {
            soft_update(online.net().params(), target.net_mut().params_mut(), eps);
        }
        for h in 0..4 {
            soft_update(
                self.mixer.hyper[h].params(),
                self.target_mixer.hyper[h].params_mut(),
                eps,
            );
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("learner serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let learner: Learner = serde_json::from_str(text)?;
        learner.config.validate()?;
        Ok(learner)
    }
}
