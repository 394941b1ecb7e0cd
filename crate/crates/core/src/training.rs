//! Training: the masked reconstruction loss, the weighted multi-rate total
//! loss, joint optimization of the encoder side and all decoders, and the
//! two-step schedule that freezes the common layers and fine-tunes disjoint
//! last-layer slices per latent size.
//!
//! Everything is deterministic: batch order comes from a seeded shuffle,
//! gradients reduce in a fixed order, and the naive baseline steps each of
//! its independent pairs on the same batches, so every approach sees the
//! same number of gradient evaluations per latent size.

use crate::error::{Error, Result};
use crate::models::{AeBundle, Approach, LambdaSet};
use crate::neural::{
    backward_batch, layer_backward_batch, mask_batch, optimizer_step, optimizer_step_layer,
    LayerOptimizerState, Mat, OptimizerState,
};
use crate::pipeline::DelaySample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs_joint: usize,
    pub epochs_per_substep: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub lambda_set: LambdaSet,
    pub fine_tune: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_joint == 0 {
            return Err(Error::config("epochs_joint must be >= 1"));
        }
        if self.fine_tune && self.epochs_per_substep == 0 {
            return Err(Error::config(
                "epochs_per_substep must be >= 1 when fine-tuning",
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// Per-latent-size losses and their weighted sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub per_lambda: Vec<(usize, f64)>,
    pub total: f64,
}

impl LossReport {
    fn from_d(ls: &LambdaSet, d: &[f64]) -> Self {
        let total = ls.weights().iter().zip(d).map(|(w, v)| w * v).sum();
        LossReport {
            per_lambda: ls.lambdas().iter().copied().zip(d.iter().copied()).collect(),
            total,
        }
    }

    pub fn d_for(&self, lambda: usize) -> Option<f64> {
        self.per_lambda
            .iter()
            .find(|(l, _)| *l == lambda)
            .map(|(_, d)| *d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Joint,
    FineTune,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Phase::Joint => write!(f, "joint"),
            Phase::FineTune => write!(f, "fine_tune"),
        }
    }
}

/// One row of training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub target_lambda: Option<usize>,
    pub report: LossReport,
}

/// Mean squared reconstruction error per latent size on one batch matrix.
fn losses_on_matrix(bundle: &AeBundle, x: &Mat) -> Vec<f64> {
    let ls = &bundle.lambda_set;
    let b = x.rows;
    let mut out = Vec::with_capacity(ls.len());
    match bundle.approach {
        Approach::Masked => {
            let (z, _) = bundle.encoders[0].forward_batch(x);
            for (i, &lambda) in ls.lambdas().iter().enumerate() {
                let mut zm = z.clone();
                mask_batch(&mut zm, lambda);
                let (y, _) = bundle.decoders[i].forward_batch(&zm);
                out.push(mean_sq_err(&y, x, b));
            }
        }
        Approach::Saldr => {
            let (z, _) = bundle.encoders[0].forward_batch(x);
            let stages = saldr_stages(bundle, &z);
            for i in 0..ls.len() {
                let stage = &stages[ls.len() - 1 - i];
                let padded = pad_cols(stage, ls.lambda_max());
                let (y, _) = bundle.decoders[i].forward_batch(&padded);
                out.push(mean_sq_err(&y, x, b));
            }
        }
        Approach::Naive => {
            for i in 0..ls.len() {
                let (z, _) = bundle.encoders[i].forward_batch(x);
                let (y, _) = bundle.decoders[i].forward_batch(&z);
                out.push(mean_sq_err(&y, x, b));
            }
        }
    }
    out
}

/// Chain stage outputs for saldr: stages[0] is the universal-block output,
/// stages[c+1] the output of chain layer c.
fn saldr_stages(bundle: &AeBundle, z: &Mat) -> Vec<Mat> {
    let mut stages = vec![z.clone()];
    for layer in &bundle.fcb_chain {
        let (act, _) = layer.forward_batch(stages.last().unwrap());
        stages.push(act);
    }
    stages
}

fn pad_cols(m: &Mat, cols: usize) -> Mat {
    if m.cols == cols {
        return m.clone();
    }
    let mut out = Mat::zeros(m.rows, cols);
    for r in 0..m.rows {
        out.row_mut(r)[..m.cols].copy_from_slice(m.row(r));
    }
    out
}

fn mean_sq_err(y: &Mat, x: &Mat, b: usize) -> f64 {
    let sum: f64 = y
        .data
        .iter()
        .zip(&x.data)
        .map(|(a, t)| (a - t) * (a - t))
        .sum();
    sum / b as f64
}

fn samples_matrix(bundle: &AeBundle, batch: &[DelaySample]) -> Result<Mat> {
    let want = bundle.input_len();
    let mut m = Mat::zeros(batch.len(), want);
    for (r, s) in batch.iter().enumerate() {
        if s.data.len() != want {
            return Err(Error::usage(format!(
                "sample length {} does not match bundle category input {want}",
                s.data.len()
            )));
        }
        m.row_mut(r).copy_from_slice(&s.data);
    }
    Ok(m)
}

/// Reconstruction loss for one latent size: the batch mean of
/// `|| h - g(f(h) (.) e_lambda) ||^2`. The chain and naive baselines
/// compute the same quantity through their own encode paths.
pub fn masked_loss(bundle: &AeBundle, batch: &[DelaySample], lambda: usize) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::argument("empty batch"));
    }
    let idx = bundle.lambda_set.index_of(lambda)?;
    let x = samples_matrix(bundle, batch)?;
    let b = x.rows;
    match bundle.approach {
        Approach::Masked => {
            let (z, _) = bundle.encoders[0].forward_batch(&x);
            let mut zm = z;
            mask_batch(&mut zm, lambda);
            let (y, _) = bundle.decoders[idx].forward_batch(&zm);
            Ok(mean_sq_err(&y, &x, b))
        }
        Approach::Saldr => {
            let (z, _) = bundle.encoders[0].forward_batch(&x);
            let stages = saldr_stages(bundle, &z);
            let stage = &stages[bundle.lambda_set.len() - 1 - idx];
            let padded = pad_cols(stage, bundle.lambda_set.lambda_max());
            let (y, _) = bundle.decoders[idx].forward_batch(&padded);
            Ok(mean_sq_err(&y, &x, b))
        }
        Approach::Naive => {
            let (z, _) = bundle.encoders[idx].forward_batch(&x);
            let (y, _) = bundle.decoders[idx].forward_batch(&z);
            Ok(mean_sq_err(&y, &x, b))
        }
    }
}

/// D(lambda) for every latent size plus the weighted total.
pub fn total_loss(bundle: &AeBundle, batch: &[DelaySample], ls: &LambdaSet) -> Result<LossReport> {
    if batch.is_empty() {
        return Err(Error::argument("empty batch"));
    }
    if ls != &bundle.lambda_set {
        return Err(Error::usage("lambda set does not match the bundle"));
    }
    let x = samples_matrix(bundle, batch)?;
    let d = losses_on_matrix(bundle, &x);
    Ok(LossReport::from_d(ls, &d))
}

/// Optimizer states for every trainable piece of a bundle.
struct BundleOpt {
    encoders: Vec<OptimizerState>,
    chain: Vec<LayerOptimizerState>,
    decoders: Vec<OptimizerState>,
}

impl BundleOpt {
    fn new(bundle: &AeBundle, lr: f64) -> Self {
        BundleOpt {
            encoders: bundle
                .encoders
                .iter()
                .map(|m| OptimizerState::new(m, lr))
                .collect(),
            chain: bundle
                .fcb_chain
                .iter()
                .map(|l| LayerOptimizerState::new(l, lr))
                .collect(),
            decoders: bundle
                .decoders
                .iter()
                .map(|m| OptimizerState::new(m, lr))
                .collect(),
        }
    }
}

/// One joint gradient step on one batch. Returns D(lambda) for the batch,
/// computed from the same forward pass that produced the gradients.
fn joint_step(bundle: &mut AeBundle, x: &Mat, opt: &mut BundleOpt) -> Result<Vec<f64>> {
    let ls = bundle.lambda_set.clone();
    let b = x.rows;
    let m = ls.len();
    let mut d_out = Vec::with_capacity(m);
    match bundle.approach {
        Approach::Masked => {
            let (z, enc_cache) = bundle.encoders[0].forward_batch(x);
            let mut d_z_total = Mat::zeros(b, z.cols);
            let mut dec_grads = Vec::with_capacity(m);
            for (i, &lambda) in ls.lambdas().iter().enumerate() {
                let mut zm = z.clone();
                mask_batch(&mut zm, lambda);
                let (y, dec_cache) = bundle.decoders[i].forward_batch(&zm);
                d_out.push(mean_sq_err(&y, x, b));
                // Gradient of w_i * D_i with respect to y.
                let scale = 2.0 * ls.weights()[i] / b as f64;
                let mut d_y = y;
                for (v, t) in d_y.data.iter_mut().zip(&x.data) {
                    *v = (*v - t) * scale;
                }
                let (g, mut d_zm) = backward_batch(&bundle.decoders[i], &d_y, &dec_cache)?;
                dec_grads.push(g);
                // Through the mask: zeroed latent entries pass no gradient.
                mask_batch(&mut d_zm, lambda);
                for (acc, v) in d_z_total.data.iter_mut().zip(&d_zm.data) {
                    *acc += *v;
                }
            }
            let (enc_g, _) = backward_batch(&bundle.encoders[0], &d_z_total, &enc_cache)?;
            optimizer_step(&mut bundle.encoders[0], &enc_g, &mut opt.encoders[0])?;
            for (i, g) in dec_grads.iter().enumerate() {
                optimizer_step(&mut bundle.decoders[i], g, &mut opt.decoders[i])?;
            }
        }
        Approach::Saldr => {
            let (z, enc_cache) = bundle.encoders[0].forward_batch(x);
            // Forward through the chain, keeping per-layer caches.
            let mut stages = vec![z];
            let mut pres = Vec::with_capacity(bundle.fcb_chain.len());
            for layer in &bundle.fcb_chain {
                let (act, pre) = layer.forward_batch(stages.last().unwrap());
                stages.push(act);
                pres.push(pre);
            }
            let mut d_stages: Vec<Mat> = stages.iter().map(|s| Mat::zeros(b, s.cols)).collect();
            let mut dec_grads = Vec::with_capacity(m);
            for i in 0..m {
                let stage_idx = m - 1 - i;
                let padded = pad_cols(&stages[stage_idx], ls.lambda_max());
                let (y, dec_cache) = bundle.decoders[i].forward_batch(&padded);
                d_out.push(mean_sq_err(&y, x, b));
                let scale = 2.0 * ls.weights()[i] / b as f64;
                let mut d_y = y;
                for (v, t) in d_y.data.iter_mut().zip(&x.data) {
                    *v = (*v - t) * scale;
                }
                let (g, d_padded) = backward_batch(&bundle.decoders[i], &d_y, &dec_cache)?;
                dec_grads.push(g);
                // Crop the padded gradient back to the stage width.
                let acc = &mut d_stages[stage_idx];
                let w = acc.cols;
                for r in 0..b {
                    let src = &d_padded.row(r)[..w];
                    for (slot, v) in acc.row_mut(r).iter_mut().zip(src) {
                        *slot += *v;
                    }
                }
            }
            // Walk the chain backwards, accumulating into earlier stages.
            let mut chain_grads = Vec::with_capacity(bundle.fcb_chain.len());
            for c in (0..bundle.fcb_chain.len()).rev() {
                let (g, d_in) = layer_backward_batch(
                    &bundle.fcb_chain[c],
                    &d_stages[c + 1],
                    &pres[c],
                    &stages[c],
                );
                chain_grads.push((c, g));
                for (acc, v) in d_stages[c].data.iter_mut().zip(&d_in.data) {
                    *acc += *v;
                }
            }
            let (enc_g, _) = backward_batch(&bundle.encoders[0], &d_stages[0], &enc_cache)?;
            optimizer_step(&mut bundle.encoders[0], &enc_g, &mut opt.encoders[0])?;
            for (c, g) in chain_grads {
                optimizer_step_layer(&mut bundle.fcb_chain[c], &g, &mut opt.chain[c])?;
            }
            for (i, g) in dec_grads.iter().enumerate() {
                optimizer_step(&mut bundle.decoders[i], g, &mut opt.decoders[i])?;
            }
        }
        Approach::Naive => {
            // Independent pairs, each minimizing its own reconstruction
            // loss on the same batch.
            for i in 0..m {
                let (z, enc_cache) = bundle.encoders[i].forward_batch(x);
                let (y, dec_cache) = bundle.decoders[i].forward_batch(&z);
                d_out.push(mean_sq_err(&y, x, b));
                let scale = 2.0 / b as f64;
                let mut d_y = y;
                for (v, t) in d_y.data.iter_mut().zip(&x.data) {
                    *v = (*v - t) * scale;
                }
                let (dec_g, d_z) = backward_batch(&bundle.decoders[i], &d_y, &dec_cache)?;
                let (enc_g, _) = backward_batch(&bundle.encoders[i], &d_z, &enc_cache)?;
                optimizer_step(&mut bundle.decoders[i], &dec_g, &mut opt.decoders[i])?;
                optimizer_step(&mut bundle.encoders[i], &enc_g, &mut opt.encoders[i])?;
            }
        }
    }
    Ok(d_out)
}

fn check_train_inputs(bundle: &AeBundle, data: &[DelaySample], cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    bundle.validate()?;
    if data.is_empty() {
        return Err(Error::argument("training dataset is empty"));
    }
    if cfg.lambda_set != bundle.lambda_set {
        return Err(Error::usage("config lambda set does not match the bundle"));
    }
    let want = bundle.input_len();
    if data.iter().any(|s| s.data.len() != want) {
        return Err(Error::usage(
            "dataset sample length does not match the bundle category",
        ));
    }
    Ok(())
}

/// Jointly minimize the weighted total loss over the encoder side and all
/// decoders (per-pair descent for the naive baseline). History records one
/// `LossReport` per epoch, averaged over the training batches.
pub fn train_joint(
    bundle: &mut AeBundle,
    data: &[DelaySample],
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    check_train_inputs(bundle, data, cfg)?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut opt = BundleOpt::new(bundle, cfg.learning_rate);
    let ls = bundle.lambda_set.clone();
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs_joint);
    for epoch in 0..cfg.epochs_joint {
        order.shuffle(&mut rng);
        let mut d_sums = vec![0.0; ls.len()];
        for chunk in order.chunks(cfg.batch_size) {
            let mut x = Mat::zeros(chunk.len(), bundle.input_len());
            for (r, &i) in chunk.iter().enumerate() {
                x.row_mut(r).copy_from_slice(&data[i].data);
            }
            let d = joint_step(bundle, &x, &mut opt)?;
            for (acc, v) in d_sums.iter_mut().zip(&d) {
                *acc += v * chunk.len() as f64;
            }
        }
        let d_epoch: Vec<f64> = d_sums.iter().map(|s| s / n as f64).collect();
        let report = LossReport::from_d(&ls, &d_epoch);
        if !report.total.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("non-finite total loss {:?}", report.per_lambda),
            });
        }
        history.push(EpochRecord {
            epoch,
            phase: Phase::Joint,
            target_lambda: None,
            report,
        });
    }
    Ok(history)
}

/// What the fine-tune observer sees after each optimizer step.
pub struct FineTuneStep<'a> {
    /// 0-based sub-step index (ascending latent sizes).
    pub substep: usize,
    pub target_lambda: usize,
    pub epoch: usize,
    pub step: usize,
    pub bundle: &'a AeBundle,
}

/// Second step of the two-step schedule: |set| sub-steps in ascending
/// latent order. Sub-step i trains only the universal block's last-layer
/// rows with output indices in (lambda_{i-1}, lambda_i] and decoder i,
/// minimizing D(lambda_i) alone; every other parameter is frozen.
pub fn fine_tune(
    bundle: &mut AeBundle,
    data: &[DelaySample],
    cfg: &TrainConfig,
) -> Result<Vec<EpochRecord>> {
    fine_tune_with_observer(bundle, data, cfg, |_| {})
}

pub fn fine_tune_with_observer(
    bundle: &mut AeBundle,
    data: &[DelaySample],
    cfg: &TrainConfig,
    mut observer: impl FnMut(&FineTuneStep),
) -> Result<Vec<EpochRecord>> {
    if bundle.approach != Approach::Masked {
        return Err(Error::usage("fine-tune applies to the masked approach only"));
    }
    check_train_inputs(bundle, data, cfg)?;
    if cfg.epochs_per_substep == 0 {
        return Err(Error::config("epochs_per_substep must be >= 1"));
    }
    let ls = bundle.lambda_set.clone();
    let n = data.len();
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1); // distinct from the joint phase
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut global_epoch = 0usize;

    for (i, &lambda) in ls.lambdas().iter().enumerate() {
        // Freeze everything, then open the slice under training.
        for layer in bundle.encoders[0].layers.iter_mut() {
            layer.set_trainable(false);
        }
        for dec in bundle.decoders.iter_mut() {
            dec.set_trainable(false);
        }
        let prev = if i == 0 { 0 } else { ls.lambdas()[i - 1] };
        let last = bundle.encoders[0].layers.len() - 1;
        bundle.encoders[0].layers[last].set_rows_trainable(prev..lambda, true);
        bundle.decoders[i].set_trainable(true);

        let mut enc_opt = OptimizerState::new(&bundle.encoders[0], cfg.learning_rate);
        let mut dec_opt = OptimizerState::new(&bundle.decoders[i], cfg.learning_rate);

        for sub_epoch in 0..cfg.epochs_per_substep {
            order.shuffle(&mut rng);
            for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
                let mut x = Mat::zeros(chunk.len(), bundle.input_len());
                for (r, &di) in chunk.iter().enumerate() {
                    x.row_mut(r).copy_from_slice(&data[di].data);
                }
                let b = x.rows;
                let (z, enc_cache) = bundle.encoders[0].forward_batch(&x);
                let mut zm = z;
                mask_batch(&mut zm, lambda);
                let (y, dec_cache) = bundle.decoders[i].forward_batch(&zm);
                let scale = 2.0 / b as f64;
                let mut d_y = y;
                for (v, t) in d_y.data.iter_mut().zip(&x.data) {
                    *v = (*v - t) * scale;
                }
                let (dec_g, mut d_zm) = backward_batch(&bundle.decoders[i], &d_y, &dec_cache)?;
                mask_batch(&mut d_zm, lambda);
                let (enc_g, _) = backward_batch(&bundle.encoders[0], &d_zm, &enc_cache)?;
                optimizer_step(&mut bundle.decoders[i], &dec_g, &mut dec_opt)?;
                optimizer_step(&mut bundle.encoders[0], &enc_g, &mut enc_opt)?;
                observer(&FineTuneStep {
                    substep: i,
                    target_lambda: lambda,
                    epoch: sub_epoch,
                    step,
                    bundle,
                });
            }
            // Full per-lambda report for the learning curves; frozen
            // latent sizes stay exactly flat.
            let x_all = samples_matrix(bundle, data)?;
            let d = losses_on_matrix(bundle, &x_all);
            let report = LossReport::from_d(&ls, &d);
            if !report.total.is_finite() {
                return Err(Error::Diverged {
                    epoch: global_epoch,
                    detail: format!("non-finite loss in sub-step {i}"),
                });
            }
            history.push(EpochRecord {
                epoch: global_epoch,
                phase: Phase::FineTune,
                target_lambda: Some(lambda),
                report,
            });
            global_epoch += 1;
        }
    }

    // Training is over; leave the bundle fully trainable.
    for layer in bundle.encoders[0].layers.iter_mut() {
        layer.set_trainable(true);
    }
    for dec in bundle.decoders.iter_mut() {
        dec.set_trainable(true);
    }
    Ok(history)
}

/// Write history rows as CSV: epoch, phase, target_lambda, one D column
/// per latent size, and the weighted total.
pub fn write_history_csv(path: &Path, records: &[EpochRecord], ls: &LambdaSet) -> Result<()> {
    let csv_err = |e: csv::Error| Error::io(path.display().to_string(), std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header = vec![
        "epoch".to_string(),
        "phase".to_string(),
        "target_lambda".to_string(),
    ];
    for l in ls.lambdas() {
        header.push(format!("d_lambda_{l}"));
    }
    header.push("total".to_string());
    w.write_record(&header).map_err(csv_err)?;
    for (row, rec) in records.iter().enumerate() {
        let mut fields = vec![
            row.to_string(),
            rec.phase.to_string(),
            rec.target_lambda.map(|l| l.to_string()).unwrap_or_default(),
        ];
        for (_, d) in &rec.report.per_lambda {
            fields.push(format!("{d:.17e}"));
        }
        fields.push(format!("{:.17e}", rec.report.total));
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.flush()
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_masked, build_naive, build_saldr};
    use crate::pipeline::{categorize, InputCategory};
    use rand::Rng;

    fn tiny_cat() -> InputCategory {
        categorize(16).unwrap() // transform size 16, encoder input 32
    }

    fn toy_samples(n: usize, cat: InputCategory, seed: u64) -> Vec<DelaySample> {
        // Low-rank structure: two random directions plus small noise, so a
        // small latent can capture most of the energy.
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let d = cat.input_len();
        let basis: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        (0..n)
            .map(|_| {
                let c0: f64 = rng.random_range(-1.0..1.0);
                let c1: f64 = rng.random_range(-1.0..1.0);
                let data: Vec<f64> = (0..d)
                    .map(|j| {
                        c0 * basis[0][j] + c1 * basis[1][j] + 0.01 * rng.random_range(-1.0..1.0)
                    })
                    .collect();
                DelaySample {
                    data,
                    scale: 1.0,
                    category: cat,
                    origin: None,
                }
                .normalized()
            })
            .collect()
    }

    fn cfg(ls: &LambdaSet, epochs: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs_joint: epochs,
            epochs_per_substep: 2,
            batch_size: 32,
            learning_rate: 1e-3,
            seed,
            lambda_set: ls.clone(),
            fine_tune: false,
        }
    }

    #[test]
    fn masked_loss_matches_hand_evaluation() {
        let cat = tiny_cat();
        let ls = LambdaSet::uniform(vec![1, 2]).unwrap();
        let bundle = build_masked(cat, &ls, 3).unwrap();
        let batch = toy_samples(3, cat, 5);
        let lambda = 1;
        let got = masked_loss(&bundle, &batch, lambda).unwrap();

        let mut total = 0.0;
        for s in &batch {
            let mut z = bundle.encoders[0].infer(&s.data);
            for v in z.iter_mut().skip(lambda) {
                *v = 0.0;
            }
            let y = bundle.decoders[0].infer(&z);
            total += y
                .iter()
                .zip(&s.data)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        let want = total / batch.len() as f64;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn identity_autoencoder_has_zero_loss_at_full_lambda() {
        // Contrived perfect pair: identity encoder and decoder over a
        // full-width latent (lambda_max = input size, category 1).
        let cat = tiny_cat();
        let d = cat.input_len(); // 32
        let ls = LambdaSet::uniform(vec![d]).unwrap();
        let mut identity = crate::neural::DenseLayer::zeros(d, d, crate::neural::Activation::Linear);
        for i in 0..d {
            identity.weights[i * d + i] = 1.0;
        }
        let bundle = AeBundle {
            approach: Approach::Masked,
            category: cat,
            lambda_set: ls,
            encoders: vec![crate::neural::ModelParams::new(vec![identity.clone()]).unwrap()],
            fcb_chain: Vec::new(),
            decoders: vec![crate::neural::ModelParams::new(vec![identity]).unwrap()],
        };
        bundle.validate().unwrap();
        let batch = toy_samples(3, cat, 50);
        let loss = masked_loss(&bundle, &batch, d).unwrap();
        assert!(loss.abs() < 1e-20, "identity composition loss {loss}");
    }

    #[test]
    fn zero_decoder_loss_is_mean_input_energy() {
        // A zero-weight, zero-bias decoder reconstructs 0, so the loss is
        // the mean squared norm of the inputs (the lambda = 0 limit).
        let cat = tiny_cat();
        let ls = LambdaSet::uniform(vec![2]).unwrap();
        let mut bundle = build_masked(cat, &ls, 4).unwrap();
        for l in bundle.decoders[0].layers.iter_mut() {
            l.weights.fill(0.0);
            l.biases.fill(0.0);
        }
        let batch = toy_samples(4, cat, 6);
        let got = masked_loss(&bundle, &batch, 2).unwrap();
        let want: f64 = batch
            .iter()
            .map(|s| s.data.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            / batch.len() as f64;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn total_loss_weights_and_recompute() {
        let cat = tiny_cat();
        let ls = LambdaSet::new(vec![2, 4, 8, 16], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let bundle = build_masked(cat, &ls, 7).unwrap();
        let batch = toy_samples(5, cat, 8);
        let report = total_loss(&bundle, &batch, &ls).unwrap();
        // Independent dot-product recomputation.
        let want: f64 = report
            .per_lambda
            .iter()
            .zip(ls.weights())
            .map(|((_, d), w)| d * w)
            .sum();
        assert!((report.total - want).abs() < 1e-12);
        // Each D matches the single-lambda loss.
        for (l, d) in &report.per_lambda {
            let single = masked_loss(&bundle, &batch, *l).unwrap();
            assert!((single - d).abs() < 1e-12);
        }
        // Uniform weights: the total is the plain mean of the D values.
        let lsu = LambdaSet::uniform(vec![2, 4, 8, 16]).unwrap();
        let bu = build_masked(cat, &lsu, 7).unwrap();
        let ru = total_loss(&bu, &batch, &lsu).unwrap();
        let mean: f64 =
            ru.per_lambda.iter().map(|(_, d)| *d).sum::<f64>() / ru.per_lambda.len() as f64;
        assert!((ru.total - mean).abs() < 1e-12);
    }

    #[test]
    fn empty_batch_rejected() {
        let cat = tiny_cat();
        let ls = LambdaSet::uniform(vec![2]).unwrap();
        let bundle = build_masked(cat, &ls, 1).unwrap();
        assert!(masked_loss(&bundle, &[], 2).is_err());
        assert!(total_loss(&bundle, &[], &ls).is_err());
    }

    #[test]
    fn joint_training_descends_on_toy_set() {
        let cat = tiny_cat();
        let ls = LambdaSet::uniform(vec![2, 4, 8]).unwrap();
        let data = toy_samples(512, cat, 10);
        for (name, mut bundle) in [
            ("masked", build_masked(cat, &ls, 11).unwrap()),
            ("saldr", build_saldr(cat, &ls, 11).unwrap()),
            ("naive", build_naive(cat, &ls, 11).unwrap()),
        ] {
            let history = train_joint(&mut bundle, &data, &cfg(&ls, 40, 12)).unwrap();
            let first = history.first().unwrap().report.total;
            let last = history.last().unwrap().report.total;
            assert!(last < first, "{name}: {last} !< {first}");
        }
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let cat = tiny_cat();
        let ls = LambdaSet::uniform(vec![2, 8]).unwrap();
        let data = toy_samples(96, cat, 13);
        let run = || {
            let mut bundle = build_saldr(cat, &ls, 14).unwrap();
            let h = train_joint(&mut bundle, &data, &cfg(&ls, 5, 15)).unwrap();
            (bundle, h)
        };
        let (b1, h1) = run();
        let (b2, h2) = run();
        assert_eq!(b1, b2);
        for (a, b) in h1.iter().zip(&h2) {
            assert_eq!(a.report.total.to_bits(), b.report.total.to_bits());
            for ((_, x), (_, y)) in a.report.per_lambda.iter().zip(&b.report.per_lambda) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn lambda_set_mismatch_rejected() {
        let cat = tiny_cat();
        let ls = LambdaSet::uniform(vec![2, 8]).unwrap();
        let other = LambdaSet::uniform(vec![2, 4]).unwrap();
        let mut bundle = build_masked(cat, &ls, 1).unwrap();
        let data = toy_samples(8, cat, 2);
        assert!(train_joint(&mut bundle, &data, &cfg(&other, 1, 1)).is_err());
    }

    #[test]
    fn fine_tune_requires_masked() {
        let cat = tiny_cat();
        let ls = LambdaSet::uniform(vec![2, 8]).unwrap();
        let mut bundle = build_naive(cat, &ls, 1).unwrap();
        let data = toy_samples(8, cat, 2);
        let err = fine_tune(&mut bundle, &data, &cfg(&ls, 1, 1)).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn fine_tune_freezes_common_layers_and_earlier_slices() {
        let cat = tiny_cat();
        let ls = LambdaSet::uniform(vec![2, 4, 8]).unwrap();
        let data = toy_samples(64, cat, 20);
        let mut bundle = build_masked(cat, &ls, 21).unwrap();
        let mut c = cfg(&ls, 4, 22);
        train_joint(&mut bundle, &data, &c).unwrap();

        let common_before: Vec<u64> = bundle.encoders[0].layers[0]
            .weights
            .iter()
            .map(|v| v.to_bits())
            .collect();
        let last_before = bundle.encoders[0].layers[1].clone();

        c.epochs_per_substep = 2;
        let history = fine_tune(&mut bundle, &data, &c).unwrap();
        assert_eq!(history.len(), 3 * 2);

        // Common layer is bitwise unchanged.
        let common_after: Vec<u64> = bundle.encoders[0].layers[0]
            .weights
            .iter()
            .map(|v| v.to_bits())
            .collect();
        assert_eq!(common_before, common_after);
        // Last-layer rows moved, and the flags are restored afterwards.
        let last_after = &bundle.encoders[0].layers[1];
        assert!(last_after.trainable.iter().all(|t| *t));
        assert_ne!(last_before.weights, last_after.weights);
        // D for earlier lambdas stays exactly flat across later sub-steps.
        let d2: Vec<f64> = history
            .iter()
            .filter(|r| r.target_lambda == Some(8))
            .map(|r| r.report.d_for(2).unwrap())
            .collect();
        for w in d2.windows(2) {
            assert_eq!(w[0].to_bits(), w[1].to_bits());
        }
    }

    #[test]
    fn fine_tune_trains_exact_row_slices() {
        let cat = tiny_cat();
        let ls = LambdaSet::uniform(vec![4, 8, 16]).unwrap();
        let data = toy_samples(48, cat, 30);
        let mut bundle = build_masked(cat, &ls, 31).unwrap();
        let mut c = cfg(&ls, 2, 32);
        train_joint(&mut bundle, &data, &c).unwrap();
        c.epochs_per_substep = 1;

        // Record which last-layer rows are trainable in each sub-step.
        let mut seen: Vec<(usize, Vec<usize>)> = Vec::new();
        fine_tune_with_observer(&mut bundle, &data, &c, |info| {
            let rows: Vec<usize> = info.bundle.encoders[0]
                .layers
                .last()
                .unwrap()
                .trainable
                .iter()
                .enumerate()
                .filter(|(_, t)| **t)
                .map(|(i, _)| i)
                .collect();
            if seen.last().map(|(l, _)| *l) != Some(info.target_lambda) {
                seen.push((info.target_lambda, rows));
            }
        })
        .unwrap();
        assert_eq!(seen.len(), 3);
        assert_eq!(seen[0], (4, (0..4).collect()));
        assert_eq!(seen[1], (8, (4..8).collect()));
        assert_eq!(seen[2], (16, (8..16).collect()));
    }

    #[test]
    fn history_csv_round_trips_through_reader() {
        let cat = tiny_cat();
        let ls = LambdaSet::uniform(vec![2, 4]).unwrap();
        let data = toy_samples(32, cat, 40);
        let mut bundle = build_masked(cat, &ls, 41).unwrap();
        let history = train_joint(&mut bundle, &data, &cfg(&ls, 3, 42)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        write_history_csv(&path, &history, &ls).unwrap();

        let mut rdr = csv::Reader::from_path(&path).unwrap();
        let headers = rdr.headers().unwrap().clone();
        assert_eq!(
            headers.iter().collect::<Vec<_>>(),
            vec!["epoch", "phase", "target_lambda", "d_lambda_2", "d_lambda_4", "total"]
        );
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        assert_eq!(rows.len(), 3);
        // Totals recompute from the D columns.
        for (row, rec) in rows.iter().zip(&history) {
            let d2: f64 = row[3].parse().unwrap();
            let d4: f64 = row[4].parse().unwrap();
            let total: f64 = row[5].parse().unwrap();
            assert!((0.5 * d2 + 0.5 * d4 - total).abs() < 1e-12);
            assert!((total - rec.report.total).abs() < 1e-12);
        }
    }
}
