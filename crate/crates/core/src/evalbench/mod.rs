//! Evaluation and benchmarking: NMSE over datasets, wall-clock latency and
//! deterministic flop counts per compression ratio, parameter/latency
//! scaling versus the number of supported latent sizes, and the
//! partition-dimension comparison experiment.

pub mod bench;
pub mod experiments;

pub use bench::{bench_latency, scaling_experiment, BenchPrecision, BenchResult, ScalingRow};
pub use experiments::{
    default_partition_settings, partition_dim_experiment, PartitionExpRow, PartitionSetting,
};

use crate::channelgen::CsiTensor;
use crate::error::{Error, Result};
use crate::models::{AeBundle, Approach, LambdaSet};
use crate::pipeline::{categorize, from_delay, partition, reconstruct_concat, to_delay, DelaySample};
use serde::{Deserialize, Serialize};

/// Normalized mean squared error: ||h - h_hat||^2 / ||h||^2.
pub fn nmse(h: &[f64], h_hat: &[f64]) -> Result<f64> {
    if h.len() != h_hat.len() {
        return Err(Error::argument(format!(
            "length mismatch: {} vs {}",
            h.len(),
            h_hat.len()
        )));
    }
    let den: f64 = h.iter().map(|v| v * v).sum();
    if den == 0.0 {
        return Err(Error::argument("zero reference vector"));
    }
    let num: f64 = h
        .iter()
        .zip(h_hat)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(num / den)
}

pub fn to_db(nmse_linear: f64) -> f64 {
    10.0 * nmse_linear.log10()
}

/// What a measurement refers to: the per-antenna-slice delay-domain input,
/// or the reassembled full CSI tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NmseScope {
    DelaySlice,
    FullTensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmseResult {
    pub approach: Approach,
    pub lambda: usize,
    pub scope: NmseScope,
    pub nmse_linear: f64,
    pub nmse_db: f64,
    pub sample_count: usize,
}

/// Per-lambda results plus the raw per-sample values behind the slice-scope
/// averages (for standard errors and recomputation oracles).
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub results: Vec<NmseResult>,
    /// (lambda, per-sample slice NMSE values in dataset order).
    pub per_sample: Vec<(usize, Vec<f64>)>,
}

impl EvalReport {
    pub fn slice_result(&self, lambda: usize) -> Option<&NmseResult> {
        self.results
            .iter()
            .find(|r| r.lambda == lambda && r.scope == NmseScope::DelaySlice)
    }

    pub fn tensor_result(&self, lambda: usize) -> Option<&NmseResult> {
        self.results
            .iter()
            .find(|r| r.lambda == lambda && r.scope == NmseScope::FullTensor)
    }
}

/// Run the full compression/reconstruction path over a dataset of CSI
/// tensors and average NMSE per latent size, both per delay-domain slice
/// and per reassembled tensor.
pub fn evaluate(bundle: &AeBundle, tensors: &[CsiTensor], ls: &LambdaSet) -> Result<EvalReport> {
    if tensors.is_empty() {
        return Err(Error::argument("empty evaluation dataset"));
    }
    if ls != &bundle.lambda_set {
        return Err(Error::usage("lambda set does not match the bundle"));
    }
    for t in tensors {
        let cat = categorize(t.k)?;
        if cat != bundle.category {
            return Err(Error::usage(format!(
                "dataset category {} does not match bundle category {}",
                cat.index, bundle.category.index
            )));
        }
    }

    let lambdas = bundle.lambda_set.lambdas().to_vec();
    let mut per_sample: Vec<(usize, Vec<f64>)> =
        lambdas.iter().map(|l| (*l, Vec::new())).collect();
    // Sum of per-tensor NMSE per lambda.
    let mut tensor_sums = vec![0.0; lambdas.len()];

    for (ti, t) in tensors.iter().enumerate() {
        let slices = partition(t);
        let mut hats: Vec<Vec<crate::pipeline::AntennaSlice>> =
            (0..lambdas.len()).map(|_| Vec::new()).collect();
        for slice in &slices {
            let mut d = to_delay(slice, bundle.category)?;
            if let Some(o) = d.origin.as_mut() {
                o.tensor = ti;
            }
            let dn = d.normalized();
            for (li, &lambda) in lambdas.iter().enumerate() {
                let recon = bundle.autoencode(&dn.data, lambda)?;
                per_sample[li].1.push(nmse(&dn.data, &recon)?);
                let recon_sample = DelaySample {
                    data: recon,
                    scale: dn.scale,
                    category: dn.category,
                    origin: dn.origin,
                };
                hats[li].push(from_delay(&recon_sample, t.k)?);
            }
        }
        for (li, h) in hats.iter().enumerate() {
            let rebuilt = reconstruct_concat(h, t.n_bs, t.n_ue, t.subcarrier_spacing_hz)?;
            tensor_sums[li] += nmse(&t.data, &rebuilt.data)?;
        }
    }

    let mut results = Vec::with_capacity(2 * lambdas.len());
    for (li, &lambda) in lambdas.iter().enumerate() {
        let vals = &per_sample[li].1;
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        results.push(NmseResult {
            approach: bundle.approach,
            lambda,
            scope: NmseScope::DelaySlice,
            nmse_linear: mean,
            nmse_db: to_db(mean),
            sample_count: vals.len(),
        });
        let tmean = tensor_sums[li] / tensors.len() as f64;
        results.push(NmseResult {
            approach: bundle.approach,
            lambda,
            scope: NmseScope::FullTensor,
            nmse_linear: tmean,
            nmse_db: to_db(tmean),
            sample_count: tensors.len(),
        });
    }
    Ok(EvalReport {
        results,
        per_sample,
    })
}
