//! Minimal dense-network machinery with explicit backpropagation.
//!
//! Everything is f64 and deterministic: initialization draws from a seeded
//! stream, batch reductions use a fixed summation order, and the parallel
//! kernels only split work across independent output rows.
//!
//! Freezing is per output unit: a frozen unit's weight row and bias entry
//! receive exactly zero gradient and are never touched by the optimizer.

pub mod adam;
pub mod checkpoint;

pub use adam::{optimizer_step, optimizer_step_layer, LayerOptimizerState, OptimizerState};

use crate::error::{Error, Result};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Smallest per-thread row chunk for the parallel kernels; below this the
/// work is done serially.
const PAR_MIN_ROWS: usize = 32;
/// Minimum multiply-accumulate count before the gradient kernel fans out.
const PAR_MIN_WORK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Linear,
    LeakyRelu,
    Tanh,
}

pub const LEAKY_SLOPE: f64 = 0.01;

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative as a function of the pre-activation.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::LeakyRelu => {
                if x >= 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Activation::Linear => 0,
            Activation::LeakyRelu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Linear),
            1 => Ok(Activation::LeakyRelu),
            2 => Ok(Activation::Tanh),
            other => Err(Error::argument(format!("unknown activation tag {other}"))),
        }
    }
}

/// Dot product with four independent accumulators. The association order is
/// fixed, so results are reproducible run to run.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let i = c * 4;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    ((s0 + s1) + (s2 + s3)) + tail
}

/// Row-major f64 matrix used by the batched kernels.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mat {
    pub data: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            data: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            debug_assert_eq!(r.len(), cols);
            data.extend_from_slice(r);
        }
        Mat {
            data,
            rows: rows.len(),
            cols,
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// One fully connected layer: `out x in` weights, `out` biases, an
/// activation, and per-output-unit freeze flags.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
    pub input_size: usize,
    pub output_size: usize,
    pub activation: Activation,
    pub trainable: Vec<bool>,
}

impl DenseLayer {
    pub fn zeros(input_size: usize, output_size: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: vec![0.0; input_size * output_size],
            biases: vec![0.0; output_size],
            input_size,
            output_size,
            activation,
            trainable: vec![true; output_size],
        }
    }

    /// Uniform fan-in initialization: weights in (-1/sqrt(in), 1/sqrt(in)),
    /// biases zero.
    pub fn init<R: Rng>(input_size: usize, output_size: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = 1.0 / (input_size as f64).sqrt();
        let mut layer = Self::zeros(input_size, output_size, activation);
        for w in layer.weights.iter_mut() {
            *w = rng.random_range(-bound..bound);
        }
        layer
    }

    #[inline]
    pub fn weight_row(&self, o: usize) -> &[f64] {
        &self.weights[o * self.input_size..(o + 1) * self.input_size]
    }

    pub fn param_count(&self) -> usize {
        self.input_size * self.output_size + self.output_size
    }

    pub fn set_trainable(&mut self, value: bool) {
        self.trainable.iter_mut().for_each(|t| *t = value);
    }

    pub fn set_rows_trainable(&mut self, rows: std::ops::Range<usize>, value: bool) {
        for o in rows {
            self.trainable[o] = value;
        }
    }

    /// Single-sample forward pass without cache.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input_size);
        let mut out = Vec::with_capacity(self.output_size);
        for o in 0..self.output_size {
            let z = dot(self.weight_row(o), x) + self.biases[o];
            out.push(self.activation.apply(z));
        }
        out
    }

    /// Batched affine + activation. Returns (activations, pre-activations).
    pub(crate) fn forward_batch(&self, x: &Mat) -> (Mat, Mat) {
        debug_assert_eq!(x.cols, self.input_size);
        let b = x.rows;
        let mut pre = Mat::zeros(b, self.output_size);
        let fill_row = |out_row: &mut [f64], x_row: &[f64]| {
            for o in 0..self.output_size {
                out_row[o] = dot(self.weight_row(o), x_row) + self.biases[o];
            }
        };
        if b >= PAR_MIN_ROWS {
            pre.data
                .par_chunks_mut(self.output_size)
                .enumerate()
                .for_each(|(r, out_row)| fill_row(out_row, x.row(r)));
        } else {
            for r in 0..b {
                let row = &mut pre.data[r * self.output_size..(r + 1) * self.output_size];
                fill_row(row, &x.data[r * x.cols..(r + 1) * x.cols]);
            }
        }
        let mut act = pre.clone();
        for v in act.data.iter_mut() {
            *v = self.activation.apply(*v);
        }
        (act, pre)
    }
}

/// Backpropagate through one layer. `d_act` is the gradient with respect
/// to the layer's activations; `pre` and `input` come from the matching
/// forward pass. Returns parameter gradients (summed over the batch in row
/// order, frozen rows zeroed) and the gradient with respect to the input.
pub(crate) fn layer_backward_batch(
    layer: &DenseLayer,
    d_act: &Mat,
    pre: &Mat,
    input: &Mat,
) -> (LayerGradient, Mat) {
    let b = d_act.rows;
    let out = layer.output_size;
    let inp = layer.input_size;
    debug_assert_eq!(d_act.cols, out);
    debug_assert_eq!(input.cols, inp);
    debug_assert_eq!(pre.rows, b);

    // dZ = dA * act'(pre)
    let mut d_z = d_act.clone();
    for (v, p) in d_z.data.iter_mut().zip(&pre.data) {
        *v *= layer.activation.derivative(*p);
    }

    // dW[o][k] = sum_b dZ[b][o] * X[b][k]; db[o] = sum_b dZ[b][o].
    // Row blocks are independent; each block streams the batch once in
    // ascending order, so every entry accumulates in the same order no
    // matter how the blocks are partitioned.
    let mut g = LayerGradient {
        d_weights: vec![0.0; out * inp],
        d_biases: vec![0.0; out],
    };
    let block_update = |o0: usize, dw_block: &mut [f64], db_block: &mut [f64]| {
        let bn = db_block.len();
        for r in 0..b {
            let x_row = &input.data[r * inp..(r + 1) * inp];
            let dz_row = &d_z.data[r * out..(r + 1) * out];
            for oo in 0..bn {
                let dz = dz_row[o0 + oo];
                db_block[oo] += dz;
                if dz != 0.0 {
                    let dw_row = &mut dw_block[oo * inp..(oo + 1) * inp];
                    for (slot, xv) in dw_row.iter_mut().zip(x_row) {
                        *slot += dz * *xv;
                    }
                }
            }
        }
    };
    let work = b * out * inp;
    if work >= PAR_MIN_WORK && out >= 2 {
        let blocks = (4 * rayon::current_num_threads()).clamp(1, out);
        let rows_per = out.div_ceil(blocks);
        g.d_weights
            .par_chunks_mut(rows_per * inp)
            .zip(g.d_biases.par_chunks_mut(rows_per))
            .enumerate()
            .for_each(|(bi, (dw, db))| block_update(bi * rows_per, dw, db));
    } else {
        let (dw, db) = (&mut g.d_weights[..], &mut g.d_biases[..]);
        block_update(0, dw, db);
    }
    for o in 0..out {
        if !layer.trainable[o] {
            g.d_weights[o * inp..(o + 1) * inp].fill(0.0);
            g.d_biases[o] = 0.0;
        }
    }

    // dX[b][k] = sum_o dZ[b][o] * W[o][k]
    let mut d_in = Mat::zeros(b, inp);
    let fill_row = |r: usize, out_row: &mut [f64]| {
        for o in 0..out {
            let dz = d_z.data[r * out + o];
            if dz != 0.0 {
                let w_row = layer.weight_row(o);
                for (slot, wv) in out_row.iter_mut().zip(w_row) {
                    *slot += dz * *wv;
                }
            }
        }
    };
    if b >= PAR_MIN_ROWS {
        d_in.data
            .par_chunks_mut(inp)
            .enumerate()
            .for_each(|(r, row)| fill_row(r, row));
    } else {
        for r in 0..b {
            let row = &mut d_in.data[r * inp..(r + 1) * inp];
            fill_row(r, row);
        }
    }
    (g, d_in)
}

/// An ordered stack of dense layers (an encoder, a decoder, or one serial
/// compression block).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<DenseLayer>,
}

impl ModelParams {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        for pair in layers.windows(2) {
            if pair[0].output_size != pair[1].input_size {
                return Err(Error::config(format!(
                    "layer dimension mismatch: {} -> {}",
                    pair[0].output_size, pair[1].input_size
                )));
            }
        }
        Ok(ModelParams { layers })
    }

    pub fn input_size(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input_size)
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.output_size)
    }

    pub fn set_trainable(&mut self, value: bool) {
        for l in self.layers.iter_mut() {
            l.set_trainable(value);
        }
    }

    /// Plain inference pass.
    pub fn infer(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for l in &self.layers {
            cur = l.forward(&cur);
        }
        cur
    }

    /// Single-sample forward pass that keeps the intermediates needed by
    /// [`backward`].
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.input_size() {
            return Err(Error::argument(format!(
                "input length {} does not match model input size {}",
                x.len(),
                self.input_size()
            )));
        }
        let batch = Mat::from_rows(&[x]);
        let (out, cache) = self.forward_batch(&batch);
        Ok((
            out.row(0).to_vec(),
            ForwardCache { inner: cache },
        ))
    }

    /// Batched forward pass with cache.
    pub(crate) fn forward_batch(&self, x: &Mat) -> (Mat, BatchCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pres = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for l in &self.layers {
            let (act, pre) = l.forward_batch(&cur);
            inputs.push(cur);
            pres.push(pre);
            cur = act;
        }
        (cur, BatchCache { inputs, pres })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }
}

/// Cached intermediates of a single-sample forward pass.
pub struct ForwardCache {
    inner: BatchCache,
}

/// Cached intermediates of a batched forward pass: the input to each layer
/// and each layer's pre-activations.
pub(crate) struct BatchCache {
    pub inputs: Vec<Mat>,
    pub pres: Vec<Mat>,
}

/// Per-layer parameter gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub d_weights: Vec<f64>,
    pub d_biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradient>,
}

impl Gradients {
    pub fn zeros_like(model: &ModelParams) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGradient {
                    d_weights: vec![0.0; l.weights.len()],
                    d_biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        debug_assert_eq!(self.layers.len(), other.layers.len());
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.d_weights.iter_mut().zip(&b.d_weights) {
                *x += *y;
            }
            for (x, y) in a.d_biases.iter_mut().zip(&b.d_biases) {
                *x += *y;
            }
        }
    }
}

/// Backpropagate a loss gradient through a model. Returns parameter
/// gradients (summed over the batch, frozen rows zeroed) and the gradient
/// with respect to the model input.
pub(crate) fn backward_batch(
    model: &ModelParams,
    d_out: &Mat,
    cache: &BatchCache,
) -> Result<(Gradients, Mat)> {
    if cache.inputs.len() != model.layers.len() {
        return Err(Error::usage("forward cache does not match model"));
    }
    let b = d_out.rows;
    if cache.inputs.first().map(|m| m.rows) != Some(b) {
        return Err(Error::usage("forward cache batch size does not match gradient"));
    }
    if d_out.cols != model.output_size() {
        return Err(Error::argument(format!(
            "loss gradient width {} does not match model output {}",
            d_out.cols,
            model.output_size()
        )));
    }
    let mut grads = Gradients::zeros_like(model);
    let mut d_act = d_out.clone();
    for (li, layer) in model.layers.iter().enumerate().rev() {
        let (g, d_in) = layer_backward_batch(layer, &d_act, &cache.pres[li], &cache.inputs[li]);
        grads.layers[li] = g;
        d_act = d_in;
    }
    Ok((grads, d_act))
}

/// Single-sample backward pass; see [`backward_batch`].
pub fn backward(
    model: &ModelParams,
    loss_grad: &[f64],
    cache: &ForwardCache,
) -> Result<(Gradients, Vec<f64>)> {
    let d_out = Mat::from_rows(&[loss_grad]);
    let (grads, d_in) = backward_batch(model, &d_out, &cache.inner)?;
    Ok((grads, d_in.row(0).to_vec()))
}

/// The binary mask e_lambda: a ones-prefix of length `lambda` followed by
/// zeros up to `lambda_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskVector {
    pub lambda: usize,
    pub lambda_max: usize,
}

impl MaskVector {
    pub fn new(lambda: usize, lambda_max: usize) -> Result<Self> {
        if lambda > lambda_max {
            return Err(Error::argument(format!(
                "lambda {lambda} exceeds lambda_max {lambda_max}"
            )));
        }
        Ok(MaskVector { lambda, lambda_max })
    }
}

/// Elementwise product with e_lambda: the first `lambda` entries pass
/// through, the rest become exactly 0.
pub fn apply_mask(z: &[f64], m: &MaskVector) -> Result<Vec<f64>> {
    if z.len() != m.lambda_max {
        return Err(Error::argument(format!(
            "latent length {} does not match lambda_max {}",
            z.len(),
            m.lambda_max
        )));
    }
    let mut out = z.to_vec();
    out[m.lambda..].fill(0.0);
    Ok(out)
}

/// In-place batched mask: zero every column >= lambda.
pub(crate) fn mask_batch(z: &mut Mat, lambda: usize) {
    for r in 0..z.rows {
        let row = z.row_mut(r);
        row[lambda..].fill(0.0);
    }
}

/// Total number of parameters: sum over layers of in*out + out.
pub fn count_params(model: &ModelParams) -> usize {
    model.param_count()
}
