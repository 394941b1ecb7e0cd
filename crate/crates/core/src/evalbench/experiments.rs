//! Partition-dimension comparison: split full CSI tensors four ways along
//! frequency, BS-antenna or UE-antenna, train one shared autoencoder per
//! setting (the same model applied to every part), and compare held-out
//! NMSE. A linear encoder/decoder pair is used so the comparison runs at
//! desk scale; the ordering between settings is what matters.

use crate::channelgen::CsiTensor;
use crate::error::{Error, Result};
use crate::neural::{
    backward_batch, optimizer_step, Activation, DenseLayer, Mat, ModelParams, OptimizerState,
};
use crate::pipeline::{partition_along, PartitionDim};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSetting {
    pub dim: PartitionDim,
    pub parts: usize,
}

/// The three settings compared in the partition experiment. The BS-antenna
/// setting splits eight ways (part size 4096) to match the experiment's
/// published input sizes; frequency and UE-antenna split four ways (8192).
pub fn default_partition_settings() -> Vec<PartitionSetting> {
    vec![
        PartitionSetting {
            dim: PartitionDim::Frequency,
            parts: 4,
        },
        PartitionSetting {
            dim: PartitionDim::BsAntenna,
            parts: 8,
        },
        PartitionSetting {
            dim: PartitionDim::UeAntenna,
            parts: 4,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionExpRow {
    pub dim: PartitionDim,
    pub parts: usize,
    pub input_elems: usize,
    pub latent: usize,
    pub seed: u64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub nmse_linear: f64,
    pub nmse_db: f64,
}

/// Seed-stable hash used for the 90/10 train/test split.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn is_test_sample(seed: u64, id: u64) -> bool {
    // Low 16 bits of the mix give a uniform fraction; < 10% goes to test.
    (splitmix64(seed ^ id) & 0xFFFF) < 6554
}

struct FlatDataset {
    train: Vec<Vec<f64>>,
    test: Vec<Vec<f64>>,
}

fn flatten_parts(
    tensors: &[CsiTensor],
    setting: PartitionSetting,
    seed: u64,
) -> Result<FlatDataset> {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (ti, t) in tensors.iter().enumerate() {
        // Held-out split by source tensor: parts of one realization are
        // correlated (identically so across frequency sub-bands), so they
        // must land on the same side of the split.
        let hold_out = is_test_sample(seed, ti as u64);
        for part in partition_along(t, setting.dim, setting.parts)? {
            // Per-sample RMS normalization; NMSE is scale-free either way.
            let n = part.data.len() as f64;
            let rms = (part.data.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
            let data: Vec<f64> = if rms > 0.0 {
                part.data.iter().map(|v| v / rms).collect()
            } else {
                part.data
            };
            if hold_out {
                test.push(data);
            } else {
                train.push(data);
            }
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::argument(
            "dataset too small for a 90/10 split; provide more tensors",
        ));
    }
    Ok(FlatDataset { train, test })
}

fn rows_matrix(rows: &[Vec<f64>], idx: &[usize]) -> Mat {
    let cols = rows[idx[0]].len();
    let mut m = Mat::zeros(idx.len(), cols);
    for (r, &i) in idx.iter().enumerate() {
        m.row_mut(r).copy_from_slice(&rows[i]);
    }
    m
}

/// Train one shared autoencoder per setting and report held-out NMSE.
/// Each row is one (setting, seed) run; the encoder input size follows the
/// part shape, the latent size is shared, and all runs get the same budget.
pub fn partition_dim_experiment(
    tensors: &[CsiTensor],
    settings: &[PartitionSetting],
    latent: usize,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    seeds: &[u64],
) -> Result<Vec<PartitionExpRow>> {
    if tensors.is_empty() {
        return Err(Error::argument("empty dataset"));
    }
    if epochs == 0 || batch_size == 0 || seeds.is_empty() {
        return Err(Error::argument("epochs, batch size and seeds must be non-empty"));
    }
    let mut rows = Vec::with_capacity(settings.len() * seeds.len());
    for &setting in settings {
        for &seed in seeds {
            let data = flatten_parts(tensors, setting, seed)?;
            let input = data.train[0].len();
            if latent > input {
                return Err(Error::argument(format!(
                    "latent {latent} exceeds part size {input}"
                )));
            }
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut encoder = ModelParams::new(vec![DenseLayer::init(
                input,
                latent,
                Activation::Linear,
                &mut rng,
            )])
            .expect("single layer");
            let mut decoder = ModelParams::new(vec![DenseLayer::init(
                latent,
                input,
                Activation::Linear,
                &mut rng,
            )])
            .expect("single layer");
            let mut enc_opt = OptimizerState::new(&encoder, learning_rate);
            let mut dec_opt = OptimizerState::new(&decoder, learning_rate);

            let mut order: Vec<usize> = (0..data.train.len()).collect();
            for _ in 0..epochs {
                order.shuffle(&mut rng);
                for chunk in order.chunks(batch_size) {
                    let x = rows_matrix(&data.train, chunk);
                    let b = x.rows;
                    let (z, enc_cache) = encoder.forward_batch(&x);
                    let (y, dec_cache) = decoder.forward_batch(&z);
                    let scale = 2.0 / b as f64;
                    let mut d_y = y;
                    for (v, t) in d_y.data.iter_mut().zip(&x.data) {
                        *v = (*v - t) * scale;
                    }
                    let (dec_g, d_z) = backward_batch(&decoder, &d_y, &dec_cache)?;
                    let (enc_g, _) = backward_batch(&encoder, &d_z, &enc_cache)?;
                    optimizer_step(&mut decoder, &dec_g, &mut dec_opt)?;
                    optimizer_step(&mut encoder, &enc_g, &mut enc_opt)?;
                }
            }

            let mut total = 0.0;
            for x in &data.test {
                let y = decoder.infer(&encoder.infer(x));
                total += super::nmse(x, &y)?;
            }
            let mean = total / data.test.len() as f64;
            rows.push(PartitionExpRow {
                dim: setting.dim,
                parts: setting.parts,
                input_elems: input,
                latent,
                seed,
                train_samples: data.train.len(),
                test_samples: data.test.len(),
                nmse_linear: mean,
                nmse_db: super::to_db(mean),
            });
        }
    }
    Ok(rows)
}
