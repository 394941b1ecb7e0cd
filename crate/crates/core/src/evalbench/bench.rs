//! Latency microbenchmarks.
//!
//! Protocol: compressing one full CSI tensor `[2, K, 32, 4]` (K at the top
//! of the bundle's category) means 128 sequential encoder forwards, one per
//! antenna slice. Per compression ratio we time that whole pass `repeats`
//! times after warmup and report the mean; the headline number is the
//! worst (largest) per-CR latency across the supported latent sizes.
//! Wall clock is environment-dependent, so deterministic per-encode flop
//! counts are reported alongside.

use crate::channelgen::{builtin_profile, generate_csi, GenSetting};
use crate::error::{Error, Result};
use crate::models::{build_masked, build_naive, build_saldr, AeBundle, Approach, LambdaSet};
use crate::neural::Activation;
use crate::pipeline::{partition, to_delay, InputCategory};
use serde::{Deserialize, Serialize};
use std::hint::black_box;
use std::time::Instant;

pub const BENCH_N_BS: usize = 32;
pub const BENCH_N_UE: usize = 4;

/// Arithmetic used inside the timed region. Training and evaluation are
/// always f64; f32 exists for inference benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchPrecision {
    F64,
    F32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrLatency {
    pub lambda: usize,
    pub seconds: f64,
    pub flops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub approach: Approach,
    pub cardinality: usize,
    pub per_cr: Vec<CrLatency>,
    pub worst_cr_latency: f64,
    pub worst_cr_flops: u64,
    pub repeats: usize,
    pub param_count: usize,
    pub precision: BenchPrecision,
}

/// The slice inputs used by the benchmark: one EPA tensor at the category's
/// top K with the standard 32x4 antenna layout, preprocessed and normalized.
fn bench_inputs(cat: InputCategory) -> Result<Vec<Vec<f64>>> {
    let tensors = generate_csi(&GenSetting {
        profile: builtin_profile("EPA").expect("builtin EPA"),
        snr_db: None,
        k: cat.rb_max.min(256),
        n_bs: BENCH_N_BS,
        n_ue: BENCH_N_UE,
        seed: 0x5EED,
        samples: 1,
        subcarrier_spacing_hz: crate::channelgen::DEFAULT_SUBCARRIER_SPACING_HZ,
    })?;
    let t = &tensors[0];
    let mut out = Vec::with_capacity(BENCH_N_BS * BENCH_N_UE);
    for slice in partition(t) {
        out.push(to_delay(&slice, cat)?.normalized().data);
    }
    Ok(out)
}

/// f32 mirror of the encoder side, used when benchmarking reduced precision.
struct F32Layer {
    w: Vec<f32>,
    b: Vec<f32>,
    input_size: usize,
    output_size: usize,
    activation: Activation,
}

impl F32Layer {
    fn from_layer(l: &crate::neural::DenseLayer) -> Self {
        F32Layer {
            w: l.weights.iter().map(|v| *v as f32).collect(),
            b: l.biases.iter().map(|v| *v as f32).collect(),
            input_size: l.input_size,
            output_size: l.output_size,
            activation: l.activation,
        }
    }

    fn forward(&self, x: &[f32]) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.output_size);
        for o in 0..self.output_size {
            let row = &self.w[o * self.input_size..(o + 1) * self.input_size];
            let mut z = self.b[o];
            for (a, b) in row.iter().zip(x) {
                z += a * b;
            }
            out.push(match self.activation {
                Activation::Linear => z,
                Activation::LeakyRelu => {
                    if z >= 0.0 {
                        z
                    } else {
                        0.01 * z
                    }
                }
                Activation::Tanh => z.tanh(),
            });
        }
        out
    }
}

struct F32Encoder {
    encoders: Vec<Vec<F32Layer>>,
    chain: Vec<F32Layer>,
}

impl F32Encoder {
    fn from_bundle(bundle: &AeBundle) -> Self {
        F32Encoder {
            encoders: bundle
                .encoders
                .iter()
                .map(|m| m.layers.iter().map(F32Layer::from_layer).collect())
                .collect(),
            chain: bundle.fcb_chain.iter().map(F32Layer::from_layer).collect(),
        }
    }

    fn encode(&self, bundle: &AeBundle, x: &[f32], idx: usize) -> Vec<f32> {
        let run = |layers: &[F32Layer], x: &[f32]| {
            let mut cur = x.to_vec();
            for l in layers {
                cur = l.forward(&cur);
            }
            cur
        };
        match bundle.approach {
            Approach::Masked => {
                let mut z = run(&self.encoders[0], x);
                let lambda = bundle.lambda_set.lambdas()[idx];
                for v in z.iter_mut().skip(lambda) {
                    *v = 0.0;
                }
                z
            }
            Approach::Saldr => {
                let mut z = run(&self.encoders[0], x);
                let m = bundle.lambda_set.len();
                for c in 0..(m - 1 - idx) {
                    z = self.chain[c].forward(&z);
                }
                z
            }
            Approach::Naive => run(&self.encoders[idx], x),
        }
    }
}

/// Time the compression of one full tensor per supported latent size.
/// Single-threaded; warmup runs are excluded from the reported means.
pub fn bench_latency(
    bundle: &AeBundle,
    repeats: usize,
    precision: BenchPrecision,
) -> Result<BenchResult> {
    if repeats < 1 {
        return Err(Error::argument("repeats must be >= 1"));
    }
    bundle.validate()?;
    let inputs = bench_inputs(bundle.category)?;
    let inputs_f32: Vec<Vec<f32>> = inputs
        .iter()
        .map(|v| v.iter().map(|x| *x as f32).collect())
        .collect();
    let f32_model = F32Encoder::from_bundle(bundle);
    let warmup = 3usize;

    let mut per_cr = Vec::with_capacity(bundle.lambda_set.len());
    for (idx, &lambda) in bundle.lambda_set.lambdas().iter().enumerate() {
        let one_pass = || match precision {
            BenchPrecision::F64 => {
                for x in &inputs {
                    black_box(bundle.encode_vec(black_box(x), lambda).expect("bench encode"));
                }
            }
            BenchPrecision::F32 => {
                for x in &inputs_f32 {
                    black_box(f32_model.encode(bundle, black_box(x), idx));
                }
            }
        };
        for _ in 0..warmup {
            one_pass();
        }
        let start = Instant::now();
        for _ in 0..repeats {
            one_pass();
        }
        let seconds = start.elapsed().as_secs_f64() / repeats as f64;
        per_cr.push(CrLatency {
            lambda,
            seconds,
            flops: bundle.encode_flops(lambda)? * inputs.len() as u64,
        });
    }

    let worst = per_cr
        .iter()
        .cloned()
        .max_by(|a, b| a.seconds.total_cmp(&b.seconds))
        .expect("at least one latent size");
    Ok(BenchResult {
        approach: bundle.approach,
        cardinality: bundle.lambda_set.len(),
        worst_cr_latency: worst.seconds,
        worst_cr_flops: per_cr.iter().map(|c| c.flops).max().unwrap_or(0),
        per_cr,
        repeats,
        param_count: bundle.encoder_param_count(),
        precision,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub approach: Approach,
    pub cardinality: usize,
    pub params: usize,
    pub worst_latency_s: f64,
    pub worst_flops: u64,
}

/// Parameter count and worst-CR latency versus the cardinality of the
/// latent-size set, per approach. Bundles are freshly built (latency and
/// parameter counts do not depend on training).
pub fn scaling_experiment(
    approaches: &[Approach],
    lambda_sets: &[LambdaSet],
    cat: InputCategory,
    seed: u64,
    repeats: usize,
    precision: BenchPrecision,
) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::with_capacity(approaches.len() * lambda_sets.len());
    for ls in lambda_sets {
        for &approach in approaches {
            let bundle = match approach {
                Approach::Masked => build_masked(cat, ls, seed)?,
                Approach::Saldr => build_saldr(cat, ls, seed)?,
                Approach::Naive => build_naive(cat, ls, seed)?,
            };
            let bench = bench_latency(&bundle, repeats, precision)?;
            rows.push(ScalingRow {
                approach,
                cardinality: ls.len(),
                params: bundle.encoder_param_count(),
                worst_latency_s: bench.worst_cr_latency,
                worst_flops: bench.worst_cr_flops,
            });
        }
    }
    Ok(rows)
}
