//! Diffusion-model agent network: noise schedule, reverse denoising chain
//! conditioned on the local state, softmax head and action decoding.
//!
//! The noise net sees `[x^m, m / M, s]` and predicts the noise in `x^m`. One
//! reverse step is
//!
//! ```text
//! x^{m-1} = (x^m - (1 - α_m) / sqrt(1 - α̂_m) · ε̂(x^m, m, s)) / sqrt(α_m) + sqrt(β̂_m) · z
//! ```
//!
//! with `z ~ N(0, I)`; since `β̂_1 = 0` the last step is noise-free. The final
//! `x^0` is the per-action value vector.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{Activation, DenseNet, Tape};
use crate::scenario::EdgeNode;

/// Per-step coefficients, indexed by `m` in `1..=M` (index 0 holds `α̂_0 = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_hat: Vec<f64>,
    beta_hat: Vec<f64>,
}

impl DiffusionSchedule {
    /// `β_m = 1 - exp(-β_min / M - (2m - 1) / (2 M²) (β_max - β_min))`.
    pub fn new(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps == 0 || !(beta_min > 0.0) || !(beta_max >= beta_min) || !beta_max.is_finite() {
            return Err(Error::Config(format!(
                "invalid diffusion schedule M={steps}, beta in [{beta_min}, {beta_max}]"
            )));
        }
        let mf = steps as f64;
        let mut beta = vec![0.0; steps + 1];
        let mut alpha = vec![1.0; steps + 1];
        let mut alpha_hat = vec![1.0; steps + 1];
        let mut beta_hat = vec![0.0; steps + 1];
        for m in 1..=steps {
            let e = beta_min / mf + (2.0 * m as f64 - 1.0) / (2.0 * mf * mf) * (beta_max - beta_min);
            beta[m] = -(-e).exp_m1();
            alpha[m] = (-e).exp();
            alpha_hat[m] = alpha_hat[m - 1] * alpha[m];
            beta_hat[m] = (1.0 - alpha_hat[m - 1]) / (1.0 - alpha_hat[m]) * beta[m];
        }
        Ok(Self {
            steps,
            beta_min,
            beta_max,
            beta,
            alpha,
            alpha_hat,
            beta_hat,
        })
    }

    pub fn beta(&self, m: usize) -> f64 {
        self.beta[m]
    }

    pub fn alpha(&self, m: usize) -> f64 {
        self.alpha[m]
    }

    pub fn alpha_hat(&self, m: usize) -> f64 {
        self.alpha_hat[m]
    }

    pub fn beta_hat(&self, m: usize) -> f64 {
        self.beta_hat[m]
    }

    /// `(1 / sqrt(α_m), (1 - α_m) / sqrt(1 - α̂_m), sqrt(β̂_m))`.
    fn step_coefficients(&self, m: usize) -> (f64, f64, f64) {
        (
            1.0 / self.alpha[m].sqrt(),
            (1.0 - self.alpha[m]) / (1.0 - self.alpha_hat[m]).sqrt(),
            self.beta_hat[m].sqrt(),
        )
    }
}

/// Gaussian draws consumed by one batched chain: `x^M` and the per-step noise.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainNoise {
    pub x_init: Vec<f64>,
    /// `z[m]` for `m` in `2..=M`; `z[0]` and `z[1]` are empty.
    pub z: Vec<Vec<f64>>,
}

impl ChainNoise {
    pub fn sample<R: Rng + ?Sized>(schedule: &DiffusionSchedule, len: usize, rng: &mut R) -> Self {
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.sample(StandardNormal)).collect() };
        let x_init = draw(len);
        let mut z = vec![Vec::new(), Vec::new()];
        for _ in 2..=schedule.steps {
            z.push(draw(len));
        }
        Self { x_init, z }
    }

    /// The noise-free chain: `x^M = 0` and no injected noise.
    pub fn zeros(schedule: &DiffusionSchedule, len: usize) -> Self {
        let mut z = vec![Vec::new(), Vec::new()];
        for _ in 2..=schedule.steps {
            z.push(vec![0.0; len]);
        }
        Self { x_init: vec![0.0; len], z }
    }
}

/// Intermediate values of a batched reverse chain, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ChainTape {
    batch: usize,
    /// Net tapes for `m = M, M-1, ..., 1`.
    net_tapes: Vec<Tape>,
    x0: Vec<f64>,
}

impl ChainTape {
    pub fn output(&self) -> &[f64] {
        &self.x0
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Noise-prediction network plus schedule for one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionPolicy {
    pub net: DenseNet,
    pub schedule: DiffusionSchedule,
    action_dim: usize,
    state_dim: usize,
}

impl DiffusionPolicy {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        schedule: DiffusionSchedule,
        rng: &mut R,
    ) -> Result<Self> {
        let net = DenseNet::mlp(
            action_dim + 1 + state_dim,
            hidden,
            action_dim,
            Activation::Relu,
            Activation::Identity,
            rng,
        )?;
        Self::from_net(net, schedule, state_dim, action_dim)
    }

    pub fn from_net(
        net: DenseNet,
        schedule: DiffusionSchedule,
        state_dim: usize,
        action_dim: usize,
    ) -> Result<Self> {
        if net.input_dim() != action_dim + 1 + state_dim || net.output_dim() != action_dim {
            return Err(Error::Shape {
                expected: action_dim + 1 + state_dim,
                got: net.input_dim(),
            });
        }
        Ok(Self {
            net,
            schedule,
            action_dim,
            state_dim,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Runs the reverse chain for `batch` states with the given noise draws.
    pub fn denoise_with(&self, states: &[f64], batch: usize, noise: &ChainNoise) -> Result<ChainTape> {
        let (a, s) = (self.action_dim, self.state_dim);
        if states.len() != batch * s {
            return Err(Error::Shape {
                expected: batch * s,
                got: states.len(),
            });
        }
        if noise.x_init.len() != batch * a {
            return Err(Error::Shape {
                expected: batch * a,
                got: noise.x_init.len(),
            });
        }
        let steps = self.schedule.steps;
        let width = a + 1 + s;
        let mut x = noise.x_init.clone();
        let mut input = vec![0.0; batch * width];
        let mut net_tapes = Vec::with_capacity(steps);
        for m in (1..=steps).rev() {
            let t = m as f64 / steps as f64;
            for r in 0..batch {
                let row = &mut input[r * width..(r + 1) * width];
                row[..a].copy_from_slice(&x[r * a..(r + 1) * a]);
                row[a] = t;
                row[a + 1..].copy_from_slice(&states[r * s..(r + 1) * s]);
            }
            let tape = self.net.forward_tape(&input, batch)?;
            let (inv_sqrt_alpha, c, sigma) = self.schedule.step_coefficients(m);
            let eps = tape.output();
            for n in 0..x.len() {
                x[n] = (x[n] - c * eps[n]) * inv_sqrt_alpha;
                if m > 1 {
                    x[n] += sigma * noise.z[m][n];
                }
            }
            net_tapes.push(tape);
        }
        Ok(ChainTape {
            batch,
            net_tapes,
            x0: x,
        })
    }

    /// Reverse chain with fresh noise from `rng`.
    pub fn denoise<R: Rng + ?Sized>(&self, states: &[f64], batch: usize, rng: &mut R) -> Result<ChainTape> {
        let noise = ChainNoise::sample(&self.schedule, batch * self.action_dim, rng);
        self.denoise_with(states, batch, &noise)
    }

    /// `x^0` for a single state.
    pub fn denoise_one<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.denoise(state, 1, rng)?.x0)
    }

    /// Softmax action distribution for one state.
    pub fn action_distribution<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        Ok(softmax(&self.denoise_one(state, rng)?))
    }

    /// Accumulates parameter gradients of `Σ upstream · x^0` with the chain's
    /// noise held fixed.
    pub fn backward(&self, tape: &ChainTape, upstream: &[f64], grad: &mut [f64]) -> Result<()> {
        let a = self.action_dim;
        if upstream.len() != tape.batch * a {
            return Err(Error::Shape {
                expected: tape.batch * a,
                got: upstream.len(),
            });
        }
        let width = a + 1 + self.state_dim;
        let steps = self.schedule.steps;
        let mut g = upstream.to_vec();
        // net_tapes[n] belongs to m = steps - n; walk from m = 1 upwards.
        for (n, net_tape) in tape.net_tapes.iter().enumerate().rev() {
            let m = steps - n;
            let (inv_sqrt_alpha, c, _) = self.schedule.step_coefficients(m);
            let d_eps: Vec<f64> = g.iter().map(|v| -c * inv_sqrt_alpha * v).collect();
            let d_in = self.net.backward(net_tape, &d_eps, grad)?;
            for r in 0..tape.batch {
                for k in 0..a {
                    let idx = r * a + k;
                    g[idx] = g[idx] * inv_sqrt_alpha + d_in[r * width + k];
                }
            }
        }
        Ok(())
    }
}

/// Numerically stable softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (n, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = n;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectMode {
    Greedy,
    /// Uniformly random action with the given probability, greedy otherwise.
    Epsilon(f64),
}

pub fn select_action<R: Rng + ?Sized>(q: &[f64], mode: SelectMode, rng: &mut R) -> usize {
    match mode {
        SelectMode::Greedy => argmax(q),
        SelectMode::Epsilon(eps) => {
            if eps > 0.0 && rng.random::<f64>() < eps {
                rng.random_range(0..q.len())
            } else {
                argmax(q)
            }
        }
    }
}

/// Maps the 0-based action index to `(phi, xi)`, both 1-based, `xi = 1` being the RSU.
pub fn decode_action(a: usize, num_layers: usize, num_nodes: usize) -> Result<(usize, usize)> {
    let n = (num_layers + 1) * num_nodes;
    if num_nodes == 0 || a >= n {
        return Err(Error::OutOfRange {
            what: "action index",
            value: a as i64,
            lo: 0,
            hi: n as i64 - 1,
        });
    }
    Ok((a / num_nodes + 1, a % num_nodes + 1))
}

/// Inverse of [`decode_action`].
pub fn encode_action(phi: usize, xi: usize, num_nodes: usize) -> usize {
    (phi - 1) * num_nodes + (xi - 1)
}

/// Decoded action as a partition point and edge node.
pub fn decode_to_node(a: usize, num_layers: usize, num_nodes: usize) -> Result<(usize, EdgeNode)> {
    let (phi, xi) = decode_action(a, num_layers, num_nodes)?;
    Ok((phi, EdgeNode::from_index(xi)))
}
