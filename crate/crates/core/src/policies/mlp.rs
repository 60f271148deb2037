//! Three-layer perceptron policy: two ReLU hidden layers, softmax output.
//!
//! Parameters live in one flat buffer in the order
//! `W1, b1, W2, b2, W3, b3`, each weight matrix stored `[out][in]` row-major.
//! The same order is used on disk (`FGMLP1` files).

use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

pub const STATE_DIM: usize = 10;
pub const HIDDEN: usize = 128;
pub const ACTIONS: usize = 2;

/// Default layer widths: input, hidden 1, hidden 2, output.
pub const DEFAULT_DIMS: [usize; 4] = [STATE_DIM, HIDDEN, HIDDEN, ACTIONS];

const MAGIC: &[u8; 6] = b"FGMLP1";

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    dims: [usize; 4],
    data: Vec<f64>,
}

/// Offsets of the six tensors inside the flat buffer.
fn layout(dims: &[usize; 4]) -> [(usize, usize); 6] {
    let mut spans = [(0, 0); 6];
    let mut offset = 0;
    for layer in 0..3 {
        let (fan_in, fan_out) = (dims[layer], dims[layer + 1]);
        spans[2 * layer] = (offset, fan_in * fan_out);
        offset += fan_in * fan_out;
        spans[2 * layer + 1] = (offset, fan_out);
        offset += fan_out;
    }
    spans
}

fn param_count(dims: &[usize; 4]) -> usize {
    let spans = layout(dims);
    spans[5].0 + spans[5].1
}

impl MlpParams {
    pub fn zeros(dims: [usize; 4]) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Dimension(format!(
                "layer widths must be positive, got {dims:?}"
            )));
        }
        Ok(Self {
            dims,
            data: vec![0.0; param_count(&dims)],
        })
    }

    /// Weights and biases uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init_uniform<R: Rng + ?Sized>(dims: [usize; 4], rng: &mut R) -> Result<Self> {
        let mut params = Self::zeros(dims)?;
        for (layer, &fan_in) in dims[..3].iter().enumerate() {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for tensor in [2 * layer, 2 * layer + 1] {
                for w in params.tensor_mut(tensor) {
                    *w = rng.random_range(-bound..=bound);
                }
            }
        }
        Ok(params)
    }

    pub fn from_flat(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let mut params = Self::zeros(dims)?;
        if data.len() != params.data.len() {
            return Err(Error::Dimension(format!(
                "MLP with dims {dims:?} has {} parameters, got {}",
                params.data.len(),
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("MLP parameters must be finite".into()));
        }
        params.data = data;
        Ok(params)
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Tensor `n` in `W1, b1, W2, b2, W3, b3` order.
    pub fn tensor(&self, n: usize) -> &[f64] {
        let (start, len) = layout(&self.dims)[n];
        &self.data[start..start + len]
    }

    pub fn tensor_mut(&mut self, n: usize) -> &mut [f64] {
        let (start, len) = layout(&self.dims)[n];
        &mut self.data[start..start + len]
    }

    /// Flat index range of tensor `n`.
    pub fn tensor_span(&self, n: usize) -> std::ops::Range<usize> {
        let (start, len) = layout(&self.dims)[n];
        start..start + len
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        self.tensor(2 * layer)
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        self.tensor(2 * layer + 1)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(MAGIC.len() + 16 + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        for d in self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let header = MAGIC.len() + 16;
        if bytes.len() < header || &bytes[..MAGIC.len()] != MAGIC {
            return Err("missing FGMLP1 header".into());
        }
        let mut dims = [0usize; 4];
        for (n, d) in dims.iter_mut().enumerate() {
            let at = MAGIC.len() + 4 * n;
            *d = u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
        }
        if dims.contains(&0) {
            return Err(format!("zero layer width in {dims:?}"));
        }
        let expected = param_count(&dims);
        let body = &bytes[header..];
        if body.len() != expected * 8 {
            return Err(format!(
                "expected {} parameter bytes for dims {dims:?}, found {}",
                expected * 8,
                body.len()
            ));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_flat(dims, data).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|m| Error::format(path, m))
    }
}

/// Activations kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub input: Vec<f64>,
    pub pre1: Vec<f64>,
    pub h1: Vec<f64>,
    pub pre2: Vec<f64>,
    pub h2: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

fn affine(weights: &[f64], bias: &[f64], input: &[f64]) -> Vec<f64> {
    let fan_in = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| {
            let row = &weights[o * fan_in..(o + 1) * fan_in];
            b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect()
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log softmax(logits)[action]`.
pub fn log_softmax_at(logits: &[f64], action: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    logits[action] - lse
}

pub fn mlp_forward(params: &MlpParams, state: &[f64]) -> Result<Forward> {
    if state.len() != params.dims[0] {
        return Err(Error::Validation(format!(
            "state has {} entries, network expects {}",
            state.len(),
            params.dims[0]
        )));
    }
    let pre1 = affine(params.weights(0), params.bias(0), state);
    let h1 = relu(&pre1);
    let pre2 = affine(params.weights(1), params.bias(1), &h1);
    let h2 = relu(&pre2);
    let logits = affine(params.weights(2), params.bias(2), &h2);
    let probs = softmax(&logits);
    Ok(Forward {
        input: state.to_vec(),
        pre1,
        h1,
        pre2,
        h2,
        logits,
        probs,
    })
}

/// Adds `scale * d log pi(action | state) / d theta` into `grad`.
pub fn accumulate_log_prob_grad(
    params: &MlpParams,
    fwd: &Forward,
    action: usize,
    scale: f64,
    grad: &mut MlpParams,
) {
    let [_, n1, n2, n_out] = params.dims;

    // d log softmax / d logits = onehot - probs
    let d_logits: Vec<f64> = (0..n_out)
        .map(|o| scale * (f64::from(o == action) - fwd.probs[o]))
        .collect();

    let d_h2 = backprop_layer(params, grad, 2, &fwd.h2, &d_logits);
    let d_pre2: Vec<f64> = (0..n2)
        .map(|h| if fwd.pre2[h] > 0.0 { d_h2[h] } else { 0.0 })
        .collect();
    let d_h1 = backprop_layer(params, grad, 1, &fwd.h1, &d_pre2);
    let d_pre1: Vec<f64> = (0..n1)
        .map(|h| if fwd.pre1[h] > 0.0 { d_h1[h] } else { 0.0 })
        .collect();
    backprop_layer(params, grad, 0, &fwd.input, &d_pre1);
}

/// Accumulates weight/bias gradients of one affine layer and returns the
/// gradient with respect to its input.
fn backprop_layer(
    params: &MlpParams,
    grad: &mut MlpParams,
    layer: usize,
    input: &[f64],
    d_out: &[f64],
) -> Vec<f64> {
    let fan_in = input.len();
    {
        let gw = grad.tensor_mut(2 * layer);
        for (o, &d) in d_out.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (g, &x) in gw[o * fan_in..(o + 1) * fan_in].iter_mut().zip(input) {
                *g += d * x;
            }
        }
    }
    for (g, &d) in grad.tensor_mut(2 * layer + 1).iter_mut().zip(d_out) {
        *g += d;
    }
    let w = params.weights(layer);
    let mut d_in = vec![0.0; fan_in];
    for (o, &d) in d_out.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        for (di, &wv) in d_in.iter_mut().zip(&w[o * fan_in..(o + 1) * fan_in]) {
            *di += d * wv;
        }
    }
    d_in
}

/// FLOPs of one forward pass: a multiply-add costs 2 (bias folded into the
/// accumulation), each ReLU output 1, and the softmax over `n` outputs
/// `3n - 1` (n exponentials, n - 1 adds, n divisions).
pub fn reinforce_flops(params: &MlpParams) -> u64 {
    forward_flops(params.dims)
}

pub fn forward_flops(dims: [usize; 4]) -> u64 {
    let [d0, d1, d2, d3] = dims.map(|d| d as u64);
    let mac = 2 * (d0 * d1 + d1 * d2 + d2 * d3);
    let relu = d1 + d2;
    let softmax = 3 * d3 - 1;
    mac + relu + softmax
}

/// Reference per-selection count for the learned policy, for comparison with [`reinforce_flops`].
pub const REFERENCE_REINFORCE_FLOPS: u64 = 35_582;
