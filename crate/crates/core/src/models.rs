//! The three multi-rate autoencoder families and their bookkeeping:
//!
//! * `naive`  — one dedicated encoder/decoder pair per latent size.
//! * `saldr`  — one universal block plus a serial chain of fully connected
//!              compression blocks, one per extra latent size.
//! * `masked` — one universal block plus a parameter-free masking layer;
//!              a single weight set serves every latent size.
//!
//! The universal block is `2N -> N -> lambda_max` (N = transform size) and
//! decoders mirror it. The naive encoder is `2N -> 4*lambda -> lambda`.

use crate::error::{Error, Result};
use crate::neural::{
    apply_mask, checkpoint, Activation, DenseLayer, MaskVector, ModelParams,
};
use crate::pipeline::{all_categories, DelaySample, InputCategory};
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_rational::Ratio;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

/// The ordered set of supported latent sizes with their loss weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSet {
    lambdas: Vec<usize>,
    weights: Vec<f64>,
}

impl LambdaSet {
    pub fn new(lambdas: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::config("lambda set must not be empty"));
        }
        if lambdas[0] == 0 {
            return Err(Error::config("latent sizes must be positive"));
        }
        for w in lambdas.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::config(
                    "latent sizes must be strictly increasing and distinct",
                ));
            }
        }
        if weights.len() != lambdas.len() {
            return Err(Error::config("one weight per latent size required"));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::config("loss weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!(
                "loss weights must sum to 1, got {total}"
            )));
        }
        Ok(LambdaSet { lambdas, weights })
    }

    /// Uniform weights 1/|set|.
    pub fn uniform(lambdas: Vec<usize>) -> Result<Self> {
        let n = lambdas.len();
        if n == 0 {
            return Err(Error::config("lambda set must not be empty"));
        }
        // Make the weights sum to exactly 1.0 in floating point.
        let w = 1.0 / n as f64;
        let mut weights = vec![w; n];
        let partial: f64 = weights[..n - 1].iter().sum();
        weights[n - 1] = 1.0 - partial;
        LambdaSet::new(lambdas, weights)
    }

    pub fn lambdas(&self) -> &[usize] {
        &self.lambdas
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lambda_max(&self) -> usize {
        *self.lambdas.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn index_of(&self, lambda: usize) -> Result<usize> {
        self.lambdas
            .iter()
            .position(|l| *l == lambda)
            .ok_or_else(|| Error::argument(format!("unsupported latent size {lambda}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    Naive,
    Saldr,
    Masked,
}

impl std::fmt::Display for Approach {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Approach::Naive => write!(f, "naive"),
            Approach::Saldr => write!(f, "saldr"),
            Approach::Masked => write!(f, "masked"),
        }
    }
}

impl std::str::FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(Approach::Naive),
            "saldr" => Ok(Approach::Saldr),
            "masked" => Ok(Approach::Masked),
            other => Err(Error::argument(format!("unknown approach '{other}'"))),
        }
    }
}

/// The pluggable feature-extraction stage of the universal encoder. The
/// dense instantiation ships here; other architectures can implement this
/// to reuse the masking, training and benchmark machinery for inference.
pub trait UniversalBlock {
    fn input_size(&self) -> usize;
    fn latent_size(&self) -> usize;
    fn extract(&self, x: &[f64]) -> Vec<f64>;
}

impl UniversalBlock for ModelParams {
    fn input_size(&self) -> usize {
        ModelParams::input_size(self)
    }

    fn latent_size(&self) -> usize {
        self.output_size()
    }

    fn extract(&self, x: &[f64]) -> Vec<f64> {
        self.infer(x)
    }
}

/// A complete multi-rate autoencoder: encoder(s), the serial compression
/// chain (saldr only), and one decoder per latent size.
#[derive(Debug, Clone, PartialEq)]
pub struct AeBundle {
    pub approach: Approach,
    pub category: InputCategory,
    pub lambda_set: LambdaSet,
    /// One universal block for masked/saldr; one encoder per latent size
    /// for naive.
    pub encoders: Vec<ModelParams>,
    /// Serial compression blocks, largest first: lambda_m -> lambda_{m-1},
    /// then lambda_{m-1} -> lambda_{m-2}, ...
    pub fcb_chain: Vec<DenseLayer>,
    /// One decoder per latent size, ascending.
    pub decoders: Vec<ModelParams>,
}

fn check_build(cat: InputCategory, ls: &LambdaSet) -> Result<()> {
    if ls.lambda_max() > 2 * cat.ifft_size {
        return Err(Error::config(format!(
            "lambda_max {} exceeds encoder input size {}",
            ls.lambda_max(),
            2 * cat.ifft_size
        )));
    }
    Ok(())
}

fn universal_block(cat: InputCategory, lambda_max: usize, rng: &mut ChaCha12Rng) -> ModelParams {
    let n = cat.ifft_size;
    ModelParams::new(vec![
        DenseLayer::init(2 * n, n, Activation::LeakyRelu, rng),
        DenseLayer::init(n, lambda_max, Activation::Linear, rng),
    ])
    .expect("universal block dims chain")
}

/// Decoder `latent_in -> N -> 2N` with a linear output.
pub fn build_decoder(cat: InputCategory, latent_in: usize, rng: &mut ChaCha12Rng) -> ModelParams {
    let n = cat.ifft_size;
    ModelParams::new(vec![
        DenseLayer::init(latent_in, n, Activation::LeakyRelu, rng),
        DenseLayer::init(n, 2 * n, Activation::Linear, rng),
    ])
    .expect("decoder dims chain")
}

/// Universal block + masking layer; one decoder per latent size, each
/// taking the full-width masked latent.
pub fn build_masked(cat: InputCategory, ls: &LambdaSet, seed: u64) -> Result<AeBundle> {
    check_build(cat, ls)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let encoder = universal_block(cat, ls.lambda_max(), &mut rng);
    let decoders = ls
        .lambdas()
        .iter()
        .map(|_| build_decoder(cat, ls.lambda_max(), &mut rng))
        .collect();
    Ok(AeBundle {
        approach: Approach::Masked,
        category: cat,
        lambda_set: ls.clone(),
        encoders: vec![encoder],
        fcb_chain: Vec::new(),
        decoders,
    })
}

/// Universal block + serial fully connected compression blocks. Producing
/// latent size lambda_i applies the chain down to lambda_i.
pub fn build_saldr(cat: InputCategory, ls: &LambdaSet, seed: u64) -> Result<AeBundle> {
    check_build(cat, ls)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let encoder = universal_block(cat, ls.lambda_max(), &mut rng);
    let mut fcb_chain = Vec::with_capacity(ls.len().saturating_sub(1));
    let lambdas = ls.lambdas();
    for i in (1..lambdas.len()).rev() {
        fcb_chain.push(DenseLayer::init(
            lambdas[i],
            lambdas[i - 1],
            Activation::Linear,
            &mut rng,
        ));
    }
    let decoders = lambdas
        .iter()
        .map(|_| build_decoder(cat, ls.lambda_max(), &mut rng))
        .collect();
    Ok(AeBundle {
        approach: Approach::Saldr,
        category: cat,
        lambda_set: ls.clone(),
        encoders: vec![encoder],
        fcb_chain,
        decoders,
    })
}

/// One independent encoder/decoder pair per latent size. The encoder is
/// `2N -> 4*lambda -> lambda`.
pub fn build_naive(cat: InputCategory, ls: &LambdaSet, seed: u64) -> Result<AeBundle> {
    check_build(cat, ls)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n = cat.ifft_size;
    let mut encoders = Vec::with_capacity(ls.len());
    let mut decoders = Vec::with_capacity(ls.len());
    for &lambda in ls.lambdas() {
        encoders.push(
            ModelParams::new(vec![
                DenseLayer::init(2 * n, 4 * lambda, Activation::LeakyRelu, &mut rng),
                DenseLayer::init(4 * lambda, lambda, Activation::Linear, &mut rng),
            ])
            .expect("naive encoder dims chain"),
        );
        decoders.push(build_decoder(cat, lambda, &mut rng));
    }
    Ok(AeBundle {
        approach: Approach::Naive,
        category: cat,
        lambda_set: ls.clone(),
        encoders,
        fcb_chain: Vec::new(),
        decoders,
    })
}

impl AeBundle {
    pub fn validate(&self) -> Result<()> {
        match self.approach {
            Approach::Masked | Approach::Saldr => {
                if self.encoders.len() != 1 {
                    return Err(Error::config("universal approaches need exactly one encoder"));
                }
            }
            Approach::Naive => {
                if self.encoders.len() != self.lambda_set.len() {
                    return Err(Error::config("naive approach needs one encoder per latent size"));
                }
            }
        }
        if self.decoders.len() != self.lambda_set.len() {
            return Err(Error::config("one decoder per latent size required"));
        }
        for (i, dec) in self.decoders.iter().enumerate() {
            let want = match self.approach {
                Approach::Naive => self.lambda_set.lambdas()[i],
                _ => self.lambda_set.lambda_max(),
            };
            if dec.input_size() != want {
                return Err(Error::config(format!(
                    "decoder {i} input {} != expected {want}",
                    dec.input_size()
                )));
            }
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.category.input_len()
    }

    /// Number of parameters on the UE side: encoder(s) plus, for saldr,
    /// the compression chain. This is the quantity hardware complexity
    /// comparisons are about.
    pub fn encoder_param_count(&self) -> usize {
        let enc: usize = self.encoders.iter().map(|e| e.param_count()).sum();
        let chain: usize = self.fcb_chain.iter().map(|l| l.param_count()).sum();
        enc + chain
    }

    pub fn decoder_param_count(&self) -> usize {
        self.decoders.iter().map(|d| d.param_count()).sum()
    }

    pub fn total_param_count(&self) -> usize {
        self.encoder_param_count() + self.decoder_param_count()
    }

    /// Latent length produced for a given lambda: full width for masked
    /// (zeros past lambda), exactly lambda otherwise.
    pub fn latent_len(&self, lambda: usize) -> Result<usize> {
        self.lambda_set.index_of(lambda)?;
        Ok(match self.approach {
            Approach::Masked => self.lambda_set.lambda_max(),
            _ => lambda,
        })
    }

    /// Run the encoder side for one normalized delay-domain input.
    pub fn encode_vec(&self, x: &[f64], lambda: usize) -> Result<Vec<f64>> {
        let idx = self.lambda_set.index_of(lambda)?;
        if x.len() != self.input_len() {
            return Err(Error::argument(format!(
                "input length {} != encoder input {}",
                x.len(),
                self.input_len()
            )));
        }
        match self.approach {
            Approach::Masked => {
                let z = self.encoders[0].infer(x);
                let mask = MaskVector::new(lambda, self.lambda_set.lambda_max())?;
                apply_mask(&z, &mask)
            }
            Approach::Saldr => {
                let mut z = self.encoders[0].infer(x);
                // chain[0] maps lambda_m -> lambda_{m-1}; apply until the
                // latent has shrunk to lambda.
                let m = self.lambda_set.len();
                for c in 0..(m - 1 - idx) {
                    z = self.fcb_chain[c].forward(&z);
                }
                Ok(z)
            }
            Approach::Naive => Ok(self.encoders[idx].infer(x)),
        }
    }

    /// Spec-level entry point operating on a delay sample.
    pub fn encode(&self, sample: &DelaySample, lambda: usize) -> Result<Vec<f64>> {
        if sample.category != self.category {
            return Err(Error::usage(format!(
                "sample category {} does not match bundle category {}",
                sample.category.index, self.category.index
            )));
        }
        self.encode_vec(&sample.data, lambda)
    }

    /// Run the decoder for a latent produced by [`encode_vec`].
    pub fn decode_vec(&self, latent: &[f64], lambda: usize) -> Result<Vec<f64>> {
        let idx = self.lambda_set.index_of(lambda)?;
        let want = self.latent_len(lambda)?;
        if latent.len() != want {
            return Err(Error::argument(format!(
                "latent length {} != expected {want}",
                latent.len()
            )));
        }
        let full;
        let input: &[f64] = match self.approach {
            Approach::Masked => latent,
            Approach::Saldr => {
                // Decoders take the full-width latent with zeros past lambda.
                let mut padded = latent.to_vec();
                padded.resize(self.lambda_set.lambda_max(), 0.0);
                full = padded;
                &full
            }
            Approach::Naive => latent,
        };
        Ok(self.decoders[idx].infer(input))
    }

    /// encode + decode in one go.
    pub fn autoencode(&self, x: &[f64], lambda: usize) -> Result<Vec<f64>> {
        let z = self.encode_vec(x, lambda)?;
        self.decode_vec(&z, lambda)
    }

    /// Deterministic flop count of producing the latent for `lambda`
    /// (multiply+add per weight, one add per bias, one op per nonlinear
    /// activation unit; the mask is index selection and costs nothing).
    pub fn encode_flops(&self, lambda: usize) -> Result<u64> {
        let idx = self.lambda_set.index_of(lambda)?;
        let model_flops = |m: &ModelParams| -> u64 { m.layers.iter().map(layer_flops).sum() };
        Ok(match self.approach {
            Approach::Masked => model_flops(&self.encoders[0]),
            Approach::Saldr => {
                let m = self.lambda_set.len();
                let chain: u64 = self.fcb_chain[..m - 1 - idx].iter().map(layer_flops).sum();
                model_flops(&self.encoders[0]) + chain
            }
            Approach::Naive => model_flops(&self.encoders[idx]),
        })
    }

    /// The largest per-encode flop count across the supported latent sizes.
    pub fn worst_cr_flops(&self) -> u64 {
        self.lambda_set
            .lambdas()
            .iter()
            .map(|l| self.encode_flops(*l).expect("lambda from own set"))
            .max()
            .unwrap_or(0)
    }
}

fn layer_flops(l: &DenseLayer) -> u64 {
    let mac = 2 * (l.input_size as u64) * (l.output_size as u64);
    let bias = l.output_size as u64;
    let act = match l.activation {
        Activation::Linear => 0,
        _ => l.output_size as u64,
    };
    mac + bias + act
}

/// Compression ratio of the full tensor: lambda / (2 * K * N_BS * N_UE).
pub fn compression_ratio(lambda: usize, k: usize, n_bs: usize, n_ue: usize) -> Ratio<u64> {
    Ratio::new(lambda as u64, 2 * k as u64 * n_bs as u64 * n_ue as u64)
}

/// Per-antenna-slice compression ratio: lambda / (2 * K).
pub fn per_part_compression_ratio(lambda: usize, k: usize) -> Ratio<u64> {
    Ratio::new(lambda as u64, 2 * k as u64)
}

/// Metadata stored inside a checkpoint next to the weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub tool_version: String,
    pub approach: Approach,
    pub category_index: u8,
    pub lambdas: Vec<usize>,
    pub weights: Vec<f64>,
    pub init_seed: u64,
    /// Training configuration and history, filled in by the trainer.
    #[serde(default)]
    pub training: serde_json::Value,
}

impl CheckpointMeta {
    /// Metadata describing a bundle with no training record attached.
    pub fn minimal(bundle: &AeBundle, init_seed: u64) -> Self {
        CheckpointMeta {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            approach: bundle.approach,
            category_index: bundle.category.index,
            lambdas: bundle.lambda_set.lambdas().to_vec(),
            weights: bundle.lambda_set.weights().to_vec(),
            init_seed,
            training: serde_json::Value::Null,
        }
    }
}

/// Save a bundle in the "CSAE" format: magic, version, embedded JSON
/// metadata, then every model's layer table and weights.
pub fn save_bundle(path: &Path, bundle: &AeBundle, meta: &CheckpointMeta) -> Result<()> {
    bundle.validate()?;
    let file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
    w.write_all(checkpoint::MAGIC).map_err(io_err)?;
    w.write_u16::<LittleEndian>(checkpoint::VERSION).map_err(io_err)?;
    let meta_json = serde_json::to_vec(meta)
        .map_err(|e| Error::config(format!("checkpoint meta serialization: {e}")))?;
    w.write_u32::<LittleEndian>(meta_json.len() as u32).map_err(io_err)?;
    w.write_all(&meta_json).map_err(io_err)?;

    w.write_u32::<LittleEndian>(bundle.encoders.len() as u32).map_err(io_err)?;
    for m in &bundle.encoders {
        checkpoint::write_model(&mut w, m).map_err(io_err)?;
    }
    w.write_u32::<LittleEndian>(bundle.fcb_chain.len() as u32).map_err(io_err)?;
    for l in &bundle.fcb_chain {
        let single = ModelParams::new(vec![l.clone()]).expect("single layer model");
        checkpoint::write_model(&mut w, &single).map_err(io_err)?;
    }
    w.write_u32::<LittleEndian>(bundle.decoders.len() as u32).map_err(io_err)?;
    for m in &bundle.decoders {
        checkpoint::write_model(&mut w, m).map_err(io_err)?;
    }
    w.flush().map_err(io_err)?;
    Ok(())
}

/// Load a bundle saved by [`save_bundle`].
pub fn load_bundle(path: &Path) -> Result<(AeBundle, CheckpointMeta)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut r = BufReader::new(file);
    let p = path.display().to_string();
    let io_err = |e: std::io::Error| Error::io(p.clone(), e);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != checkpoint::MAGIC {
        return Err(Error::corrupt(&p, "bad checkpoint magic"));
    }
    let version = r.read_u16::<LittleEndian>().map_err(io_err)?;
    if version != checkpoint::VERSION {
        return Err(Error::corrupt(&p, format!("unsupported version {version}")));
    }
    let meta_len = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut meta_buf = vec![0u8; meta_len];
    r.read_exact(&mut meta_buf).map_err(io_err)?;
    let meta: CheckpointMeta = serde_json::from_slice(&meta_buf)
        .map_err(|e| Error::corrupt(&p, format!("bad metadata: {e}")))?;

    let n_enc = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut encoders = Vec::with_capacity(n_enc);
    for _ in 0..n_enc {
        encoders.push(checkpoint::read_model(&mut r)?);
    }
    let n_chain = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut fcb_chain = Vec::with_capacity(n_chain);
    for _ in 0..n_chain {
        let m = checkpoint::read_model(&mut r)?;
        if m.layers.len() != 1 {
            return Err(Error::corrupt(&p, "chain entry must be a single layer"));
        }
        fcb_chain.push(m.layers.into_iter().next().unwrap());
    }
    let n_dec = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let mut decoders = Vec::with_capacity(n_dec);
    for _ in 0..n_dec {
        decoders.push(checkpoint::read_model(&mut r)?);
    }

    let category = *all_categories()
        .iter()
        .find(|c| c.index == meta.category_index)
        .ok_or_else(|| Error::corrupt(&p, format!("bad category index {}", meta.category_index)))?;
    let lambda_set = LambdaSet::new(meta.lambdas.clone(), meta.weights.clone())?;
    let bundle = AeBundle {
        approach: meta.approach,
        category,
        lambda_set,
        encoders,
        fcb_chain,
        decoders,
    };
    bundle.validate()?;
    Ok((bundle, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::categorize;
    use rand::Rng;

    fn cat4() -> InputCategory {
        categorize(128).unwrap()
    }

    fn set_4() -> LambdaSet {
        LambdaSet::uniform(vec![4, 8, 16, 32]).unwrap()
    }

    fn set_full() -> LambdaSet {
        LambdaSet::uniform((1..=32).collect()).unwrap()
    }

    #[test]
    fn lambda_set_validation() {
        assert!(LambdaSet::uniform(vec![]).is_err());
        assert!(LambdaSet::uniform(vec![4, 4]).is_err());
        assert!(LambdaSet::uniform(vec![8, 4]).is_err());
        assert!(LambdaSet::new(vec![4, 8], vec![0.9, 0.2]).is_err());
        assert!(LambdaSet::new(vec![4, 8], vec![1.0, -0.0]).is_err());
        let ls = LambdaSet::new(vec![4, 8], vec![0.25, 0.75]).unwrap();
        assert_eq!(ls.lambda_max(), 8);
        let total: f64 = set_full().weights().iter().sum();
        assert_eq!(total, 1.0);
    }

    #[test]
    fn masked_encoder_has_exact_param_count() {
        let b = build_masked(cat4(), &set_4(), 1).unwrap();
        b.validate().unwrap();
        assert_eq!(b.encoders[0].param_count(), 37_024);
        assert_eq!(b.encoder_param_count(), 37_024);
        // Independent of the cardinality of the lambda set.
        let b32 = build_masked(cat4(), &set_full(), 1).unwrap();
        assert_eq!(b32.encoder_param_count(), 37_024);
    }

    #[test]
    fn saldr_chain_param_counts() {
        let b4 = build_saldr(cat4(), &set_4(), 2).unwrap();
        b4.validate().unwrap();
        let chain4: usize = b4.fcb_chain.iter().map(|l| l.param_count()).sum();
        assert_eq!(chain4, 700);
        assert_eq!(b4.encoder_param_count(), 37_724);

        let b32 = build_saldr(cat4(), &set_full(), 2).unwrap();
        let chain32: usize = b32.fcb_chain.iter().map(|l| l.param_count()).sum();
        assert_eq!(chain32, 11_408);
        assert_eq!(b32.encoder_param_count(), 48_432);

        // Degenerate chain: a single latent size equals the masked block.
        let b1 = build_saldr(cat4(), &LambdaSet::uniform(vec![32]).unwrap(), 2).unwrap();
        assert!(b1.fcb_chain.is_empty());
        assert_eq!(b1.encoder_param_count(), 37_024);
    }

    #[test]
    fn naive_param_counts() {
        let b32 = build_naive(cat4(), &set_full(), 3).unwrap();
        b32.validate().unwrap();
        assert_eq!(b32.encoder_param_count(), 589_072);
        let b4 = build_naive(cat4(), &set_4(), 3).unwrap();
        assert_eq!(b4.encoder_param_count(), 67_180);
        let single = build_naive(cat4(), &LambdaSet::uniform(vec![8]).unwrap(), 3).unwrap();
        assert_eq!(single.encoders.len(), 1);
        assert_eq!(single.decoders.len(), 1);
    }

    #[test]
    fn decoder_shapes() {
        let b = build_masked(cat4(), &set_4(), 4).unwrap();
        for d in &b.decoders {
            assert_eq!(d.input_size(), 32);
            assert_eq!(d.layers[0].output_size, 128);
            assert_eq!(d.output_size(), 256);
        }
        let n = build_naive(cat4(), &set_4(), 4).unwrap();
        for (d, l) in n.decoders.iter().zip(n.lambda_set.lambdas()) {
            assert_eq!(d.input_size(), *l);
            assert_eq!(d.output_size(), 256);
        }
    }

    #[test]
    fn lambda_max_beyond_input_rejected() {
        let cat = categorize(16).unwrap(); // input 32
        let ls = LambdaSet::uniform(vec![16, 64]).unwrap();
        assert!(build_masked(cat, &ls, 0).is_err());
        // Boundary case is allowed.
        let ls_edge = LambdaSet::uniform(vec![32]).unwrap();
        let b = build_masked(cat, &ls_edge, 0).unwrap();
        assert_eq!(b.encoders[0].output_size(), 32);
    }

    #[test]
    fn masked_prefix_property_is_bitwise() {
        let b = build_masked(cat4(), &set_4(), 5).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(20);
        let x: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z32 = b.encode_vec(&x, 32).unwrap();
        for lambda in [4usize, 8, 16] {
            let z = b.encode_vec(&x, lambda).unwrap();
            assert_eq!(z.len(), 32);
            for i in 0..lambda {
                assert_eq!(z[i].to_bits(), z32[i].to_bits(), "prefix {i} at lambda {lambda}");
            }
            assert!(z[lambda..].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn masked_full_lambda_is_identity_mask() {
        let b = build_masked(cat4(), &set_4(), 6).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let x: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z = b.encode_vec(&x, 32).unwrap();
        let direct = b.encoders[0].infer(&x);
        assert_eq!(z, direct);
    }

    #[test]
    fn saldr_chain_depth_matches_lambda() {
        let b = build_saldr(cat4(), &set_4(), 7).unwrap();
        // Three chain layers: 32->16, 16->8, 8->4.
        assert_eq!(b.fcb_chain.len(), 3);
        assert_eq!(
            (b.fcb_chain[0].input_size, b.fcb_chain[0].output_size),
            (32, 16)
        );
        assert_eq!(
            (b.fcb_chain[2].input_size, b.fcb_chain[2].output_size),
            (8, 4)
        );
        let mut rng = ChaCha12Rng::seed_from_u64(22);
        let x: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
        assert_eq!(b.encode_vec(&x, 32).unwrap().len(), 32);
        assert_eq!(b.encode_vec(&x, 4).unwrap().len(), 4);
        // Flops strictly increase as lambda decreases along the chain.
        let f32_ = b.encode_flops(32).unwrap();
        let f16 = b.encode_flops(16).unwrap();
        let f8 = b.encode_flops(8).unwrap();
        let f4 = b.encode_flops(4).unwrap();
        assert!(f4 > f8 && f8 > f16 && f16 > f32_);
    }

    #[test]
    fn masked_flops_independent_of_lambda_and_cardinality() {
        let b4 = build_masked(cat4(), &set_4(), 8).unwrap();
        let b32 = build_masked(cat4(), &set_full(), 8).unwrap();
        let f = b4.encode_flops(4).unwrap();
        for l in [8usize, 16, 32] {
            assert_eq!(b4.encode_flops(l).unwrap(), f);
        }
        for l in 1..=32usize {
            assert_eq!(b32.encode_flops(l).unwrap(), f);
        }
        // Saldr worst-CR flops exceed masked by exactly the chain cost.
        let s = build_saldr(cat4(), &set_4(), 8).unwrap();
        let chain_cost: u64 = s
            .fcb_chain
            .iter()
            .map(|l| 2 * (l.input_size as u64) * (l.output_size as u64) + l.output_size as u64)
            .sum();
        assert_eq!(s.worst_cr_flops(), f + chain_cost);
    }

    #[test]
    fn unsupported_lambda_rejected() {
        let b = build_masked(cat4(), &set_4(), 9).unwrap();
        let x = vec![0.0; 256];
        assert!(b.encode_vec(&x, 5).is_err());
    }

    #[test]
    fn compression_ratios() {
        assert_eq!(per_part_compression_ratio(32, 128), Ratio::new(1, 8));
        assert_eq!(per_part_compression_ratio(4, 128), Ratio::new(1, 64));
        assert_eq!(compression_ratio(32, 128, 32, 4), Ratio::new(1, 1024));
        assert_eq!(compression_ratio(2 * 128 * 32 * 4, 128, 32, 4), Ratio::new(1, 1));
    }

    #[test]
    fn decoder_of_zero_latent_is_bias_propagation() {
        let b = build_masked(cat4(), &set_4(), 10).unwrap();
        let zeros = vec![0.0; 32];
        let out = b.decode_vec(&zeros, 8).unwrap();
        // Independent bias propagation.
        let dec = &b.decoders[1];
        let mut cur = vec![0.0; 32];
        for l in &dec.layers {
            cur = l.forward(&cur);
        }
        assert_eq!(out, cur);
    }

    #[test]
    fn bundle_save_load_round_trip() {
        let b = build_saldr(cat4(), &set_4(), 11).unwrap();
        let meta = CheckpointMeta {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            approach: b.approach,
            category_index: b.category.index,
            lambdas: b.lambda_set.lambdas().to_vec(),
            weights: b.lambda_set.weights().to_vec(),
            init_seed: 11,
            training: serde_json::Value::Null,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csae");
        save_bundle(&path, &b, &meta).unwrap();
        let (back, meta_back) = load_bundle(&path).unwrap();
        assert_eq!(b, back);
        assert_eq!(meta_back.category_index, 4);
        assert_eq!(meta_back.approach, Approach::Saldr);
    }
}
