//! Dense feed-forward networks with reverse-mode gradients and Adam.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (row-major, `out x in`) followed by the bias. Gradients use the same
//! layout, so optimizers and soft updates operate on plain slices.
//!
//! Inputs and outputs are batched as row-major `batch x width` slices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Multi-layer perceptron; `activations[l]` follows affine layer `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    widths: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
}

/// Layer outputs kept from a batched forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    batch: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("tape holds at least the input")
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl DenseNet {
    /// Network with explicit per-layer activations and zero parameters.
    pub fn zeros(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!("invalid layer widths {widths:?}")));
        }
        if activations.len() != widths.len() - 1 {
            return Err(Error::Shape {
                expected: widths.len() - 1,
                got: activations.len(),
            });
        }
        let n = param_count(&widths);
        Ok(Self {
            widths,
            activations,
            params: vec![0.0; n],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        widths: Vec<usize>,
        activations: Vec<Activation>,
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(widths, activations)?;
        let mut offset = 0;
        for l in 0..net.num_layers() {
            let (fan_in, fan_out) = (net.widths[l], net.widths[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut net.params[offset..offset + fan_in * fan_out] {
                *p = rng.random_range(-bound..bound);
            }
            offset += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    /// `input -> hidden... -> output` with one activation for every hidden layer.
    pub fn mlp<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        hidden_act: Activation,
        output_act: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut acts = vec![hidden_act; hidden.len()];
        acts.push(output_act);
        Self::new(widths, acts, rng)
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// `(weights, bias)` slices of layer `l`.
    pub fn layer(&self, l: usize) -> (&[f64], &[f64]) {
        let off = self.layer_offset(l);
        let (i, o) = (self.widths[l], self.widths[l + 1]);
        (
            &self.params[off..off + i * o],
            &self.params[off + i * o..off + i * o + o],
        )
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [f64], &mut [f64]) {
        let off = self.layer_offset(l);
        let (i, o) = (self.widths[l], self.widths[l + 1]);
        let (w, rest) = self.params[off..].split_at_mut(i * o);
        (w, &mut rest[..o])
    }

    fn layer_offset(&self, l: usize) -> usize {
        param_count(&self.widths[..=l])
    }

    fn check_input(&self, x: &[f64], batch: usize) -> Result<()> {
        let expected = batch * self.input_dim();
        if x.len() != expected {
            return Err(Error::Shape {
                expected,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Forward pass of a single input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_tape(x, 1)?.acts.pop().unwrap())
    }

    /// Batched forward pass returning every layer output.
    pub fn forward_tape(&self, x: &[f64], batch: usize) -> Result<Tape> {
        self.check_input(x, batch)?;
        let mut acts = Vec::with_capacity(self.widths.len());
        acts.push(x.to_vec());
        let mut off = 0;
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let input = &acts[l];
            let act = self.activations[l];
            let mut out = vec![0.0; batch * n_out];
            matmul_bt(input, w, &mut out, batch, n_in, n_out);
            for row in out.chunks_exact_mut(n_out) {
                for (y, bo) in row.iter_mut().zip(b) {
                    *y = act.apply(*y + bo);
                }
            }
            acts.push(out);
            off += n_in * n_out + n_out;
        }
        Ok(Tape { batch, acts })
    }

    /// Accumulates into `grad` the gradient of `Σ upstream · y` with respect to
    /// the parameters, and returns the gradient with respect to the input.
    pub fn backward(&self, tape: &Tape, upstream: &[f64], grad: &mut [f64]) -> Result<Vec<f64>> {
        let batch = tape.batch;
        if upstream.len() != batch * self.output_dim() {
            return Err(Error::Shape {
                expected: batch * self.output_dim(),
                got: upstream.len(),
            });
        }
        if grad.len() != self.params.len() {
            return Err(Error::Shape {
                expected: self.params.len(),
                got: grad.len(),
            });
        }
        let mut delta: Vec<f64> = upstream.to_vec();
        let mut off = self.params.len();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            off -= n_in * n_out + n_out;
            let act = self.activations[l];
            for (d, &y) in delta.iter_mut().zip(&tape.acts[l + 1]) {
                *d *= act.derivative_from_output(y);
            }
            let w = &self.params[off..off + n_in * n_out];
            let input = &tape.acts[l];
            let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for dr in delta.chunks_exact(n_out) {
                for (g, d) in gb.iter_mut().zip(dr) {
                    *g += d;
                }
            }
            weight_grad(&delta, input, gw, batch, n_in, n_out);
            let mut d_in = vec![0.0; batch * n_in];
            input_grad(&delta, w, &mut d_in, batch, n_in, n_out);
            delta = d_in;
        }
        Ok(delta)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("network serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: DenseNet = serde_json::from_str(text)?;
        if net.widths.len() < 2
            || net.activations.len() != net.widths.len() - 1
            || net.params.len() != param_count(&net.widths)
        {
            return Err(Error::Config("inconsistent network checkpoint".into()));
        }
        if net.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("non-finite parameters in checkpoint".into()));
        }
        Ok(net)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out[r][o] = Σ_i x[r][i] · w[o][i]`. Batches of four or more rows go
/// through 4 x 4 register tiles over weights packed in panels of four outputs.
fn matmul_bt(x: &[f64], w: &[f64], out: &mut [f64], batch: usize, n_in: usize, n_out: usize) {
    let full = batch / 4 * 4;
    let panels = n_out / 4;
    if full > 0 && panels > 0 {
        let mut packed = vec![0.0; panels * 4 * n_in];
        for (p, panel) in packed.chunks_exact_mut(4 * n_in).enumerate() {
            for (i, cell) in panel.chunks_exact_mut(4).enumerate() {
                for (j, c) in cell.iter_mut().enumerate() {
                    *c = w[(4 * p + j) * n_in + i];
                }
            }
        }
        for (rows_x, rows_out) in x[..full * n_in]
            .chunks_exact(4 * n_in)
            .zip(out.chunks_exact_mut(4 * n_out))
        {
            let (x0, rest) = rows_x.split_at(n_in);
            let (x1, rest) = rest.split_at(n_in);
            let (x2, x3) = rest.split_at(n_in);
            for (p, panel) in packed.chunks_exact(4 * n_in).enumerate() {
                let mut acc = [[0.0f64; 4]; 4];
                for ((((wv, &a), &b), &c), &d) in panel.chunks_exact(4).zip(x0).zip(x1).zip(x2).zip(x3) {
                    for j in 0..4 {
                        acc[0][j] += a * wv[j];
                        acc[1][j] += b * wv[j];
                        acc[2][j] += c * wv[j];
                        acc[3][j] += d * wv[j];
                    }
                }
                for (k, row) in acc.iter().enumerate() {
                    rows_out[k * n_out + 4 * p..k * n_out + 4 * p + 4].copy_from_slice(row);
                }
            }
        }
    }
    for r in 0..batch {
        let xr = &x[r * n_in..(r + 1) * n_in];
        let start = if r < full { panels * 4 } else { 0 };
        for o in start..n_out {
            out[r * n_out + o] = dot(xr, &w[o * n_in..(o + 1) * n_in]);
        }
    }
}

fn split4(s: &[f64], n: usize) -> [&[f64]; 4] {
    let (a, rest) = s.split_at(n);
    let (b, rest) = rest.split_at(n);
    let (c, d) = rest.split_at(n);
    [a, b, c, &d[..n]]
}

fn split4_mut(s: &mut [f64], n: usize) -> [&mut [f64]; 4] {
    let (a, rest) = s.split_at_mut(n);
    let (b, rest) = rest.split_at_mut(n);
    let (c, d) = rest.split_at_mut(n);
    [a, b, c, &mut d[..n]]
}

/// `gw[o][i] += Σ_r d[r][o] · x[r][i]` with 4 x 4 tiles over rows and outputs.
fn weight_grad(d: &[f64], x: &[f64], gw: &mut [f64], batch: usize, n_in: usize, n_out: usize) {
    let full = batch / 4 * 4;
    let full_o = n_out / 4 * 4;
    for (rows_x, rows_d) in x[..full * n_in].chunks_exact(4 * n_in).zip(d.chunks_exact(4 * n_out)) {
        let xs = split4(rows_x, n_in);
        for (ot, gs) in gw[..full_o * n_in].chunks_exact_mut(4 * n_in).enumerate() {
            let o = 4 * ot;
            let mut c = [[0.0; 4]; 4];
            for (k, ck) in c.iter_mut().enumerate() {
                ck.copy_from_slice(&rows_d[k * n_out + o..k * n_out + o + 4]);
            }
            if c == [[0.0; 4]; 4] {
                continue;
            }
            let [g0, g1, g2, g3] = split4_mut(gs, n_in);
            for (((((((a, b), e), f), h0), h1), h2), h3) in xs[0]
                .iter()
                .zip(xs[1])
                .zip(xs[2])
                .zip(xs[3])
                .zip(g0.iter_mut())
                .zip(g1.iter_mut())
                .zip(g2.iter_mut())
                .zip(g3.iter_mut())
            {
                *h0 += c[0][0] * a + c[1][0] * b + c[2][0] * e + c[3][0] * f;
                *h1 += c[0][1] * a + c[1][1] * b + c[2][1] * e + c[3][1] * f;
                *h2 += c[0][2] * a + c[1][2] * b + c[2][2] * e + c[3][2] * f;
                *h3 += c[0][3] * a + c[1][3] * b + c[2][3] * e + c[3][3] * f;
            }
        }
        for o in full_o..n_out {
            let g = &mut gw[o * n_in..(o + 1) * n_in];
            for (k, xk) in xs.iter().enumerate() {
                let c = rows_d[k * n_out + o];
                if c != 0.0 {
                    axpy(c, xk, g);
                }
            }
        }
    }
    for r in full..batch {
        let xr = &x[r * n_in..(r + 1) * n_in];
        for (o, g) in gw.chunks_exact_mut(n_in).enumerate() {
            let c = d[r * n_out + o];
            if c != 0.0 {
                axpy(c, xr, g);
            }
        }
    }
}

/// `dx[r][i] += Σ_o d[r][o] · w[o][i]` with 4 x 4 tiles over rows and outputs.
fn input_grad(d: &[f64], w: &[f64], dx: &mut [f64], batch: usize, n_in: usize, n_out: usize) {
    let full = batch / 4 * 4;
    let full_o = n_out / 4 * 4;
    for (rows_d, rows_dx) in d.chunks_exact(4 * n_out).zip(dx[..full * n_in].chunks_exact_mut(4 * n_in)) {
        let [o0, o1, o2, o3] = split4_mut(rows_dx, n_in);
        for (ot, ws) in w[..full_o * n_in].chunks_exact(4 * n_in).enumerate() {
            let o = 4 * ot;
            let mut c = [[0.0; 4]; 4];
            for (k, ck) in c.iter_mut().enumerate() {
                ck.copy_from_slice(&rows_d[k * n_out + o..k * n_out + o + 4]);
            }
            if c == [[0.0; 4]; 4] {
                continue;
            }
            let [w0, w1, w2, w3] = split4(ws, n_in);
            for (((((((a, b), e), f), h0), h1), h2), h3) in w0
                .iter()
                .zip(w1)
                .zip(w2)
                .zip(w3)
                .zip(o0.iter_mut())
                .zip(o1.iter_mut())
                .zip(o2.iter_mut())
                .zip(o3.iter_mut())
            {
                *h0 += c[0][0] * a + c[0][1] * b + c[0][2] * e + c[0][3] * f;
                *h1 += c[1][0] * a + c[1][1] * b + c[1][2] * e + c[1][3] * f;
                *h2 += c[2][0] * a + c[2][1] * b + c[2][2] * e + c[2][3] * f;
                *h3 += c[3][0] * a + c[3][1] * b + c[3][2] * e + c[3][3] * f;
            }
        }
        for o in full_o..n_out {
            let wo = &w[o * n_in..(o + 1) * n_in];
            for (k, out) in [&mut *o0, &mut *o1, &mut *o2, &mut *o3].into_iter().enumerate() {
                let c = rows_d[k * n_out + o];
                if c != 0.0 {
                    axpy(c, wo, out);
                }
            }
        }
    }
    for r in full..batch {
        let dr = &d[r * n_out..(r + 1) * n_out];
        let out = &mut dx[r * n_in..(r + 1) * n_in];
        for (o, &c) in dr.iter().enumerate() {
            if c != 0.0 {
                axpy(c, &w[o * n_in..(o + 1) * n_in], out);
            }
        }
    }
}

/// Scales `grad` so its Euclidean norm is at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Bias-corrected Adam state for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::Shape {
                expected: self.m.len(),
                got: params.len().min(grad.len()),
            });
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for n in 0..params.len() {
            let g = grad[n];
            self.m[n] = self.beta1 * self.m[n] + (1.0 - self.beta1) * g;
            self.v[n] = self.beta2 * self.v[n] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[n] / bc1;
            let v_hat = self.v[n] / bc2;
            params[n] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// `target <- eps * online + (1 - eps) * target`.
pub fn soft_update(online: &[f64], target: &mut [f64], eps: f64) {
    for (t, &o) in target.iter_mut().zip(online) {
        *t = eps * o + (1.0 - eps) * *t;
    }
}
