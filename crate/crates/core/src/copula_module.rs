//! Small neural predictors for copula parameters.
//!
//! An MLP over a fixed window or a GRU over a variable window maps a scaled
//! context to raw outputs, squashed to `rho = 0.999 tanh(raw)` and
//! `beta = sigmoid(raw)`. Training minimizes the variogram score of copula
//! paths. The gradient of the score with respect to the one or two copula
//! parameters is taken by central differences under common random numbers;
//! everything below the squashing layer is backpropagated analytically.

use std::fs;
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::copula::{rng_from_seed, standard_normal_noise, CopulaParams, RHO_LIMIT};
use crate::error::{Error, Result};
use crate::forecasters::{ForecastRequest, ForecasterHandle};
use crate::iqf::MarginalDistribution;
use crate::pathgen::{copula_paths_with_noise, fit_marginals};
use crate::scoring::variogram_score;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    Mlp,
    Gru,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputParams {
    Rho,
    RhoBeta,
}

impl OutputParams {
    pub fn count(self) -> usize {
        match self {
            OutputParams::Rho => 1,
            OutputParams::RhoBeta => 2,
        }
    }
}

/// Layer sizes. For the MLP `window` is the exact input length and `hidden`
/// holds the two hidden widths; for the GRU `window` is the maximum input
/// length and `hidden` is `[state size, head width]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSizes {
    pub window: usize,
    pub hidden: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub backbone: Backbone,
    pub sizes: NetworkSizes,
    pub output_params: OutputParams,
}

impl NetworkSpec {
    pub fn mlp(output_params: OutputParams) -> Self {
        Self {
            backbone: Backbone::Mlp,
            sizes: NetworkSizes {
                window: 30,
                hidden: vec![64, 32],
            },
            output_params,
        }
    }

    pub fn gru(output_params: OutputParams) -> Self {
        Self {
            backbone: Backbone::Gru,
            sizes: NetworkSizes {
                window: 128,
                hidden: vec![16, 16],
            },
            output_params,
        }
    }

    pub fn with_sizes(mut self, window: usize, hidden: [usize; 2]) -> Self {
        self.sizes = NetworkSizes {
            window,
            hidden: hidden.to_vec(),
        };
        self
    }

    fn validate(&self) -> Result<()> {
        if self.sizes.window == 0 || self.sizes.hidden.len() != 2 || self.sizes.hidden.contains(&0) {
            return Err(Error::Config(format!("invalid network sizes {:?}", self.sizes)));
        }
        Ok(())
    }

    /// Tensor names and shapes in storage order.
    fn layout(&self) -> Vec<(&'static str, Vec<usize>)> {
        let out = self.output_params.count();
        let [a, b] = [self.sizes.hidden[0], self.sizes.hidden[1]];
        match self.backbone {
            Backbone::Mlp => {
                let w = self.sizes.window;
                vec![
                    ("w1", vec![a, w]),
                    ("b1", vec![a]),
                    ("w2", vec![b, a]),
                    ("b2", vec![b]),
                    ("w_out", vec![out, b]),
                    ("b_out", vec![out]),
                ]
            }
            Backbone::Gru => vec![
                ("w_z", vec![a]),
                ("u_z", vec![a, a]),
                ("b_z", vec![a]),
                ("w_r", vec![a]),
                ("u_r", vec![a, a]),
                ("b_r", vec![a]),
                ("w_n", vec![a]),
                ("u_n", vec![a, a]),
                ("b_n", vec![a]),
                ("w_head", vec![b, a]),
                ("b_head", vec![b]),
                ("w_out", vec![out, b]),
                ("b_out", vec![out]),
            ],
        }
    }
}

// Tensor indices into the layout.
const MLP_W1: usize = 0;
const MLP_B1: usize = 1;
const MLP_W2: usize = 2;
const MLP_B2: usize = 3;
const MLP_WO: usize = 4;
const MLP_BO: usize = 5;
const GRU_WZ: usize = 0;
const GRU_UZ: usize = 1;
const GRU_BZ: usize = 2;
const GRU_WR: usize = 3;
const GRU_UR: usize = 4;
const GRU_BR: usize = 5;
const GRU_WN: usize = 6;
const GRU_UN: usize = 7;
const GRU_BN: usize = 8;
const GRU_WH: usize = 9;
const GRU_BH: usize = 10;
const GRU_WO: usize = 11;
const GRU_BO: usize = 12;

const GRU_INPUT_BOUND: f64 = 2.0;
const GRU_UPDATE_GATE_BIAS: f64 = -2.0;

fn bound_for(fan_in: usize) -> f64 {
    1.0 / (fan_in as f64).sqrt()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `W x + b` for row-major `W` of shape `b.len() x x.len()`.
fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    let cols = x.len();
    b.iter()
        .enumerate()
        .map(|(i, bi)| bi + w[i * cols..(i + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
        .collect()
}

/// `out += W^T d`.
fn add_transpose_product(w: &[f64], d: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (i, di) in d.iter().enumerate() {
        for (o, wij) in out.iter_mut().zip(&w[i * cols..(i + 1) * cols]) {
            *o += di * wij;
        }
    }
}

/// `g += d x^T`.
fn add_outer(g: &mut [f64], d: &[f64], x: &[f64]) {
    let cols = x.len();
    for (i, di) in d.iter().enumerate() {
        for (gij, xj) in g[i * cols..(i + 1) * cols].iter_mut().zip(x) {
            *gij += di * xj;
        }
    }
}

fn add_into(g: &mut [f64], d: &[f64]) {
    for (a, b) in g.iter_mut().zip(d) {
        *a += b;
    }
}

/// Intermediate activations kept for backpropagation.
#[derive(Debug, Clone)]
pub enum ForwardCache {
    Mlp {
        x: Vec<f64>,
        h1: Vec<f64>,
        h2: Vec<f64>,
    },
    Gru {
        xs: Vec<f64>,
        /// `hs[t]` is the state before step `t`; `hs[T]` is the final state.
        hs: Vec<Vec<f64>>,
        zs: Vec<Vec<f64>>,
        rs: Vec<Vec<f64>>,
        ns: Vec<Vec<f64>>,
        head: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CopulaNet {
    spec: NetworkSpec,
    ranges: Vec<Range<usize>>,
    weights: Vec<f64>,
}

impl CopulaNet {
    /// All weights and biases zero.
    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut ranges = Vec::new();
        let mut offset = 0;
        for (_, shape) in spec.layout() {
            let n: usize = shape.iter().product();
            ranges.push(offset..offset + n);
            offset += n;
        }
        Ok(Self {
            spec,
            ranges,
            weights: vec![0.0; offset],
        })
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` initialization, except that
    /// GRU input weights are drawn from `(-2, 2)` and the update-gate bias is
    /// shifted by -2. The beta output bias starts at `ln(0.1/0.9)` so that
    /// beta is about 0.1.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let mut rng = rng_from_seed(seed);
        let state = net.spec.sizes.hidden[0];
        for (k, (name, shape)) in net.spec.layout().into_iter().enumerate() {
            let fan_in = match (net.spec.backbone, name) {
                (Backbone::Gru, n) if n.ends_with("_z") || n.ends_with("_r") || n.ends_with("_n") => state,
                _ if shape.len() == 2 => shape[1],
                // Biases share the fan-in of the matrix stored just before them.
                _ => {
                    let prev = &net.spec.layout()[k - 1].1;
                    if prev.len() == 2 { prev[1] } else { 1 }
                }
            };
            let bound = bound_for(fan_in);
            for w in &mut net.weights[net.ranges[k].clone()] {
                *w = rng.random_range(-bound..bound);
            }
        }
        if net.spec.backbone == Backbone::Gru {
            // The scalar input gets a wider range than the recurrent weights,
            // and a negative update-gate bias gives the state a longer memory.
            for k in [GRU_WZ, GRU_WR, GRU_WN] {
                for w in &mut net.weights[net.ranges[k].clone()] {
                    *w *= GRU_INPUT_BOUND / bound_for(state);
                }
            }
            for b in &mut net.weights[net.ranges[GRU_BZ].clone()] {
                *b += GRU_UPDATE_GATE_BIAS;
            }
        }
        if net.spec.output_params == OutputParams::RhoBeta {
            let bo = net.output_bias_range();
            net.weights[bo.start + 1] = (0.1f64 / 0.9).ln();
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn n_weights(&self) -> usize {
        self.weights.len()
    }

    /// Index range of the output bias within [`weights`](Self::weights).
    pub fn output_bias_range(&self) -> Range<usize> {
        self.ranges.last().cloned().expect("non-empty layout")
    }

    fn t(&self, k: usize) -> &[f64] {
        &self.weights[self.ranges[k].clone()]
    }

    /// Minimum accepted context length.
    pub fn min_context(&self) -> usize {
        match self.spec.backbone {
            Backbone::Mlp => self.spec.sizes.window,
            Backbone::Gru => 1,
        }
    }

    /// Takes the input window from the end of `context` and divides it by its
    /// largest absolute value. Returns `None` for an all-zero window.
    pub fn scaled_input(&self, context: &[f64]) -> Result<Option<Vec<f64>>> {
        if context.len() < self.min_context() {
            return Err(Error::ContextTooShort {
                needed: self.min_context(),
                got: context.len(),
            });
        }
        let take = context.len().min(self.spec.sizes.window);
        let window = &context[context.len() - take..];
        let scale = window.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Ok(None);
        }
        Ok(Some(window.iter().map(|v| v / scale).collect()))
    }

    /// Raw (pre-squash) outputs for an already scaled input.
    pub fn forward(&self, input: &[f64]) -> (Vec<f64>, ForwardCache) {
        match self.spec.backbone {
            Backbone::Mlp => {
                assert_eq!(input.len(), self.spec.sizes.window, "MLP input length");
                let h1: Vec<f64> = affine(self.t(MLP_W1), self.t(MLP_B1), input)
                    .into_iter()
                    .map(f64::tanh)
                    .collect();
                let h2: Vec<f64> = affine(self.t(MLP_W2), self.t(MLP_B2), &h1)
                    .into_iter()
                    .map(f64::tanh)
                    .collect();
                let raw = affine(self.t(MLP_WO), self.t(MLP_BO), &h2);
                (
                    raw,
                    ForwardCache::Mlp {
                        x: input.to_vec(),
                        h1,
                        h2,
                    },
                )
            }
            Backbone::Gru => {
                let n_state = self.spec.sizes.hidden[0];
                let (wz, uz, bz) = (self.t(GRU_WZ), self.t(GRU_UZ), self.t(GRU_BZ));
                let (wr, ur, br) = (self.t(GRU_WR), self.t(GRU_UR), self.t(GRU_BR));
                let (wn, un, bn) = (self.t(GRU_WN), self.t(GRU_UN), self.t(GRU_BN));
                let mut hs = vec![vec![0.0; n_state]];
                let (mut zs, mut rs, mut ns) = (Vec::new(), Vec::new(), Vec::new());
                for &x in input {
                    let h = hs.last().expect("initial state");
                    let z: Vec<f64> = affine(uz, bz, h)
                        .iter()
                        .zip(wz)
                        .map(|(a, w)| sigmoid(a + w * x))
                        .collect();
                    let r: Vec<f64> = affine(ur, br, h)
                        .iter()
                        .zip(wr)
                        .map(|(a, w)| sigmoid(a + w * x))
                        .collect();
                    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
                    let n: Vec<f64> = affine(un, bn, &rh)
                        .iter()
                        .zip(wn)
                        .map(|(a, w)| (a + w * x).tanh())
                        .collect();
                    let next: Vec<f64> = (0..n_state).map(|i| (1.0 - z[i]) * h[i] + z[i] * n[i]).collect();
                    zs.push(z);
                    rs.push(r);
                    ns.push(n);
                    hs.push(next);
                }
                let last = hs.last().expect("final state");
                let head: Vec<f64> = affine(self.t(GRU_WH), self.t(GRU_BH), last)
                    .into_iter()
                    .map(f64::tanh)
                    .collect();
                let raw = affine(self.t(GRU_WO), self.t(GRU_BO), &head);
                (
                    raw,
                    ForwardCache::Gru {
                        xs: input.to_vec(),
                        hs,
                        zs,
                        rs,
                        ns,
                        head,
                    },
                )
            }
        }
    }

    /// Gradient of `sum_k d_raw[k] * raw[k]` with respect to every weight.
    pub fn backward(&self, cache: &ForwardCache, d_raw: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.weights.len()];
        let r = |k: usize| self.ranges[k].clone();
        match cache {
            ForwardCache::Mlp { x, h1, h2 } => {
                add_outer(&mut g[r(MLP_WO)], d_raw, h2);
                add_into(&mut g[r(MLP_BO)], d_raw);
                let mut dh2 = vec![0.0; h2.len()];
                add_transpose_product(self.t(MLP_WO), d_raw, &mut dh2);
                let da2: Vec<f64> = dh2.iter().zip(h2).map(|(d, h)| d * (1.0 - h * h)).collect();
                add_outer(&mut g[r(MLP_W2)], &da2, h1);
                add_into(&mut g[r(MLP_B2)], &da2);
                let mut dh1 = vec![0.0; h1.len()];
                add_transpose_product(self.t(MLP_W2), &da2, &mut dh1);
                let da1: Vec<f64> = dh1.iter().zip(h1).map(|(d, h)| d * (1.0 - h * h)).collect();
                add_outer(&mut g[r(MLP_W1)], &da1, x);
                add_into(&mut g[r(MLP_B1)], &da1);
            }
            ForwardCache::Gru {
                xs,
                hs,
                zs,
                rs,
                ns,
                head,
            } => {
                let n_state = self.spec.sizes.hidden[0];
                add_outer(&mut g[r(GRU_WO)], d_raw, head);
                add_into(&mut g[r(GRU_BO)], d_raw);
                let mut dhead = vec![0.0; head.len()];
                add_transpose_product(self.t(GRU_WO), d_raw, &mut dhead);
                let dah: Vec<f64> = dhead.iter().zip(head).map(|(d, h)| d * (1.0 - h * h)).collect();
                let last = hs.last().expect("final state");
                add_outer(&mut g[r(GRU_WH)], &dah, last);
                add_into(&mut g[r(GRU_BH)], &dah);
                let mut dh = vec![0.0; n_state];
                add_transpose_product(self.t(GRU_WH), &dah, &mut dh);

                for t in (0..xs.len()).rev() {
                    let (x, h, z, rr, n) = (xs[t], &hs[t], &zs[t], &rs[t], &ns[t]);
                    let mut dh_prev: Vec<f64> = (0..n_state).map(|i| dh[i] * (1.0 - z[i])).collect();
                    let da_n: Vec<f64> = (0..n_state).map(|i| dh[i] * z[i] * (1.0 - n[i] * n[i])).collect();
                    let da_z: Vec<f64> = (0..n_state)
                        .map(|i| dh[i] * (n[i] - h[i]) * z[i] * (1.0 - z[i]))
                        .collect();
                    let rh: Vec<f64> = rr.iter().zip(h).map(|(a, b)| a * b).collect();
                    let mut drh = vec![0.0; n_state];
                    add_transpose_product(self.t(GRU_UN), &da_n, &mut drh);
                    let da_r: Vec<f64> = (0..n_state)
                        .map(|i| drh[i] * h[i] * rr[i] * (1.0 - rr[i]))
                        .collect();
                    for i in 0..n_state {
                        dh_prev[i] += drh[i] * rr[i];
                    }
                    add_transpose_product(self.t(GRU_UZ), &da_z, &mut dh_prev);
                    add_transpose_product(self.t(GRU_UR), &da_r, &mut dh_prev);

                    for (k_w, k_u, k_b, da, hin) in [
                        (GRU_WZ, GRU_UZ, GRU_BZ, &da_z, h),
                        (GRU_WR, GRU_UR, GRU_BR, &da_r, h),
                        (GRU_WN, GRU_UN, GRU_BN, &da_n, &rh),
                    ] {
                        for (gw, d) in g[r(k_w)].iter_mut().zip(da.iter()) {
                            *gw += d * x;
                        }
                        add_outer(&mut g[r(k_u)], da, hin);
                        add_into(&mut g[r(k_b)], da);
                    }
                    dh = dh_prev;
                }
            }
        }
        g
    }

    /// Raw outputs for a raw context; an all-zero window yields the output bias.
    pub fn predict_raw(&self, context: &[f64]) -> Result<Vec<f64>> {
        match self.scaled_input(context)? {
            Some(x) => Ok(self.forward(&x).0),
            None => {
                let zeros = vec![0.0; self.spec.sizes.window.min(context.len())];
                Ok(self.forward(&zeros).0)
            }
        }
    }

    pub fn predict_params(&self, context: &[f64], horizon: usize) -> Result<CopulaParams<f64>> {
        let raw = self.predict_raw(context)?;
        let (rho, beta) = squash(&raw);
        CopulaParams::new(rho, beta, horizon)
    }

    /// Checkpoint as JSON: a manifest plus named tensors.
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            manifest: Manifest {
                backbone: self.spec.backbone,
                sizes: self.spec.sizes.clone(),
                output_params: self.spec.output_params,
                version: CHECKPOINT_VERSION,
            },
            tensors: self
                .spec
                .layout()
                .into_iter()
                .zip(&self.ranges)
                .map(|((name, shape), range)| TensorRecord {
                    name: name.to_string(),
                    shape,
                    data: self.weights[range.clone()].to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let m = &ckpt.manifest;
        if m.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", m.version)));
        }
        let spec = NetworkSpec {
            backbone: m.backbone,
            sizes: m.sizes.clone(),
            output_params: m.output_params,
        };
        let mut net = Self::zeros(spec).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let layout = net.spec.layout();
        if layout.len() != ckpt.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                layout.len(),
                ckpt.tensors.len()
            )));
        }
        for (((name, shape), range), t) in layout.iter().zip(&net.ranges).zip(&ckpt.tensors) {
            if t.name != *name || t.shape != *shape || t.data.len() != range.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {:?} {:?} ({} values) does not match expected {name:?} {shape:?}",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("tensor {name:?} has non-finite values")));
            }
            net.weights[range.clone()].copy_from_slice(&t.data);
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::data_io::write_json(path, &self.to_checkpoint())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_checkpoint(&ckpt)
    }
}

/// Maps raw outputs to `(rho, beta)`.
pub fn squash(raw: &[f64]) -> (f64, Option<f64>) {
    (RHO_LIMIT * raw[0].tanh(), raw.get(1).map(|b| sigmoid(*b)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub backbone: Backbone,
    pub sizes: NetworkSizes,
    pub output_params: OutputParams,
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub manifest: Manifest,
    pub tensors: Vec<TensorRecord>,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(weights: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) {
    assert_eq!(weights.len(), grads.len(), "gradient shape");
    assert_eq!(weights.len(), state.m.len(), "optimizer state shape");
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..weights.len() {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        weights[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
    }
}

/// Which weights the optimizer may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainable {
    #[default]
    All,
    OutputBias,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub paths_per_series: usize,
    pub horizon: usize,
    pub learning_rate: f64,
    /// Central-difference step in rho and beta.
    pub fd_step: f64,
    pub trainable: Trainable,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            paths_per_series: 20,
            horizon: 8,
            learning_rate: 0.001,
            fd_step: 1e-4,
            trainable: Trainable::All,
        }
    }
}

impl TrainingConfig {
    fn validate(&self) -> Result<()> {
        if self.paths_per_series < 2 || self.horizon < 2 {
            return Err(Error::Config("training needs at least 2 paths and horizon 2".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if !(self.fd_step > 0.0 && self.fd_step < 0.5) {
            return Err(Error::Config(format!("invalid finite-difference step {}", self.fd_step)));
        }
        Ok(())
    }
}

/// A context, its realized future and the forecast marginals for that future.
#[derive(Debug, Clone)]
pub struct TrainingExample {
    pub context: Vec<f64>,
    pub future: Vec<f64>,
    pub marginals: Vec<MarginalDistribution<f64>>,
}

impl TrainingExample {
    pub fn new(context: Vec<f64>, future: Vec<f64>, marginals: Vec<MarginalDistribution<f64>>) -> Result<Self> {
        if future.len() != marginals.len() {
            return Err(Error::HorizonMismatch {
                expected: future.len(),
                got: marginals.len(),
            });
        }
        Ok(Self {
            context,
            future,
            marginals,
        })
    }

    /// Splits `values` into context and the last `horizon` points and asks
    /// `handle` for the marginals.
    pub fn from_forecaster(
        handle: &ForecasterHandle,
        series_id: &str,
        values: &[f64],
        horizon: usize,
        levels: &[f64],
        nonneg: bool,
    ) -> Result<Self> {
        if values.len() < horizon + 1 {
            return Err(Error::SeriesTooShort {
                needed: horizon + 1,
                got: values.len(),
            });
        }
        let (context, future) = values.split_at(values.len() - horizon);
        let forecast = handle.forecast(&ForecastRequest::new(series_id, context, horizon, levels))?;
        Self::new(context.to_vec(), future.to_vec(), fit_marginals(&forecast, nonneg)?)
    }
}

/// Variogram score of copula paths built from fixed noise.
pub fn fixed_noise_vs(
    example: &TrainingExample,
    noise: &crate::num::Matrix<f64>,
    rho: f64,
    beta: Option<f64>,
) -> Result<f64> {
    let params = CopulaParams::new(rho, beta, example.future.len())?;
    let paths = copula_paths_with_noise(&example.marginals, &params, noise)?;
    variogram_score(&paths, &example.future)
}

/// Central difference of `f` at `x` on `[lo, hi]`, shrinking to one side at
/// the boundary.
fn central_difference(x: f64, step: f64, lo: f64, hi: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let a = (x - step).max(lo);
    let b = (x + step).min(hi);
    Ok((f(b)? - f(a)?) / (b - a))
}

/// Loss and outer gradient `(dVS/drho, dVS/dbeta)` under common random numbers.
pub fn outer_gradient(
    example: &TrainingExample,
    noise: &crate::num::Matrix<f64>,
    rho: f64,
    beta: Option<f64>,
    step: f64,
) -> Result<(f64, f64, Option<f64>)> {
    let loss = fixed_noise_vs(example, noise, rho, beta)?;
    let d_rho = central_difference(rho, step, -RHO_LIMIT, RHO_LIMIT, |r| fixed_noise_vs(example, noise, r, beta))?;
    let d_beta = match beta {
        Some(b) => Some(central_difference(b, step, 0.0, 1.0, |bb| {
            fixed_noise_vs(example, noise, rho, Some(bb))
        })?),
        None => None,
    };
    Ok((loss, d_rho, d_beta))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean variogram score per epoch, measured before each update.
    pub loss_curve: Vec<f64>,
    pub steps: usize,
    /// Examples skipped for an all-zero input window.
    pub skipped: usize,
}

/// Trains `net` in place. One example per step, reshuffled every epoch.
pub fn train(net: &mut CopulaNet, data: &[TrainingExample], config: &TrainingConfig, seed: u64) -> Result<TrainingReport> {
    train_with_observer(net, data, config, seed, |_, _, _| {})
}

/// [`train`] with a callback receiving `(epoch, step, loss)` after each step.
pub fn train_with_observer(
    net: &mut CopulaNet,
    data: &[TrainingExample],
    config: &TrainingConfig,
    seed: u64,
    mut observer: impl FnMut(usize, usize, f64),
) -> Result<TrainingReport> {
    config.validate()?;
    for ex in data {
        if ex.future.len() != config.horizon {
            return Err(Error::HorizonMismatch {
                expected: config.horizon,
                got: ex.future.len(),
            });
        }
        if ex.context.len() < net.min_context() {
            return Err(Error::ContextTooShort {
                needed: net.min_context(),
                got: ex.context.len(),
            });
        }
    }
    let mut rng = rng_from_seed(seed);
    let mut adam = AdamState::new(net.n_weights());
    let bias = net.output_bias_range();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainingReport::default();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut count = 0usize;
        for (step, &idx) in order.iter().enumerate() {
            let ex = &data[idx];
            let noise_seed = rng.next_u64();
            let Some(input) = net.scaled_input(&ex.context)? else {
                report.skipped += 1;
                continue;
            };
            let (raw, cache) = net.forward(&input);
            let (rho, beta) = squash(&raw);
            let noise = standard_normal_noise::<f64>(config.paths_per_series, config.horizon, noise_seed);
            let (loss, d_rho, d_beta) = outer_gradient(ex, &noise, rho, beta, config.fd_step)?;
            if !loss.is_finite() || !d_rho.is_finite() || d_beta.is_some_and(|d| !d.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    detail: format!("loss {loss}, dVS/drho {d_rho}, dVS/dbeta {d_beta:?}, rho {rho}, beta {beta:?}"),
                });
            }
            let mut d_raw = vec![d_rho * RHO_LIMIT * (1.0 - raw[0].tanh().powi(2))];
            if let (Some(db), Some(b)) = (d_beta, beta) {
                d_raw.push(db * b * (1.0 - b));
            }
            let mut grads = net.backward(&cache, &d_raw);
            if config.trainable == Trainable::OutputBias {
                for (i, g) in grads.iter_mut().enumerate() {
                    if !bias.contains(&i) {
                        *g = 0.0;
                    }
                }
            }
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    detail: "non-finite backbone gradient".into(),
                });
            }
            adam_step(&mut net.weights, &grads, &mut adam, config.learning_rate);
            observer(epoch, step, loss);
            total += loss;
            count += 1;
            report.steps += 1;
        }
        let mean = if count > 0 { total / count as f64 } else { f64::NAN };
        log::info!("epoch {epoch}: mean VS {mean}");
        report.loss_curve.push(mean);
    }
    Ok(report)
}
