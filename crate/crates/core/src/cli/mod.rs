//! The `unicsi` command line: dataset generation, training, evaluation,
//! latency benchmarking, and the three-approach comparison driver.
//!
//! Every command writes its outputs plus a `.run.json` manifest holding
//! the full configuration, seeds, and file digests, so any run can be
//! reproduced from its manifest alone. `UNICSI_OUT_DIR` sets the default
//! output directory.

pub mod manifest;

use crate::channelgen::container::{
    read_container, write_container, DatasetManifest, ManifestEntry,
};
use crate::channelgen::{
    builtin_profile, builtin_profiles, generate_csi, ChannelProfile, CsiTensor, GenSetting,
    DEFAULT_SUBCARRIER_SPACING_HZ,
};
use crate::error::Error;
use crate::evalbench::{
    bench_latency, evaluate, scaling_experiment, BenchPrecision, EvalReport, NmseScope,
};
use crate::models::{
    build_masked, build_naive, build_saldr, load_bundle, per_part_compression_ratio, save_bundle,
    AeBundle, Approach, CheckpointMeta, LambdaSet,
};
use crate::pipeline::{categorize, delay_dataset, partition, to_delay, DelaySample};
use crate::training::{fine_tune, train_joint, write_history_csv, EpochRecord, TrainConfig};
use anyhow::{bail, Context};
use byteorder::{LittleEndian, WriteBytesExt};
use clap::{Args, Parser, Subcommand};
use manifest::RunManifest;
use serde::Serialize;
use serde_json::json;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

pub const OUT_DIR_ENV: &str = "UNICSI_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "unicsi",
    version,
    about = "Universal multi-rate CSI feedback autoencoders: data, training, evaluation, benchmarks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate CSI datasets from tapped-delay-line profiles.
    Gen(GenArgs),
    /// Train one approach on a dataset and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint: NMSE per latent size.
    Eval(EvalArgs),
    /// Measure inference latency and flop counts of a checkpoint.
    Bench(BenchArgs),
    /// Train, evaluate and benchmark all three approaches.
    Compare(CompareArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    /// Comma-separated profiles: builtin names (epa, eva, tdl100, ...),
    /// custom "tdl:<taps>:<spacing_ns>:<rms_ns>", or paths to JSON files.
    #[arg(long, value_delimiter = ',', default_value = "epa")]
    pub profile: Vec<String>,
    /// Resource-block counts (1..=256), comma separated.
    #[arg(long, value_delimiter = ',', default_value = "128")]
    pub k: Vec<usize>,
    /// BS antenna counts.
    #[arg(long, value_delimiter = ',', default_value = "32")]
    pub nbs: Vec<usize>,
    /// UE antenna counts.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    pub nue: Vec<usize>,
    /// Estimation SNRs in dB; "inf" disables noise.
    #[arg(long, value_delimiter = ',', default_value = "20")]
    pub snr: Vec<String>,
    /// Tensors per setting.
    #[arg(long, default_value_t = 12)]
    pub samples: usize,
    /// Base seed; setting i uses seed + i (recorded in the manifest).
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// RB-granularity bin spacing in Hz.
    #[arg(long, default_value_t = DEFAULT_SUBCARRIER_SPACING_HZ)]
    pub spacing_hz: f64,
    /// Store raw frequency-domain CSI or preprocessed delay-domain samples.
    #[arg(long, default_value = "frequency")]
    pub domain: String,
    /// Dataset name (file prefix).
    #[arg(long, default_value = "dataset")]
    pub name: String,
    /// Output directory (default: $UNICSI_OUT_DIR or ".").
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// List builtin profiles and exit.
    #[arg(long, default_value_t = false)]
    pub list_profiles: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Dataset manifest (.json) or a single container (.csit).
    #[arg(long)]
    pub data: PathBuf,
    /// naive | saldr | masked
    #[arg(long, default_value = "masked")]
    pub approach: String,
    /// Latent sizes: "4,8,16,32" or ranges like "1..32".
    #[arg(long, default_value = "4,8,16,32")]
    pub lambdas: String,
    /// Loss weights (default uniform); must sum to 1.
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub substep_epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Run the freeze/fine-tune schedule after joint training (masked only).
    #[arg(long, default_value_t = false)]
    pub fine_tune: bool,
    /// Checkpoint path (default: <out dir>/model.csae).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Frequency-domain dataset manifest or container.
    #[arg(long)]
    pub data: PathBuf,
    /// Results CSV path (default: <out dir>/results.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for raw f64 reconstruction dumps (one file per latent size).
    #[arg(long)]
    pub dump_recon: Option<PathBuf>,
    /// Directory to write fig7.csv plot data into.
    #[arg(long)]
    pub emit_plot_data: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Timed passes per compression ratio (after 3 warmup passes).
    #[arg(long, default_value_t = 10_000)]
    pub repeats: usize,
    /// Benchmark in f32 instead of f64.
    #[arg(long, default_value_t = false)]
    pub f32: bool,
    /// Bench CSV path (default: <out dir>/bench.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory to write fig8.csv / fig9.csv scaling data into.
    #[arg(long)]
    pub emit_plot_data: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct CompareArgs {
    /// Frequency-domain dataset manifest or container.
    #[arg(long)]
    pub data: PathBuf,
    /// Cases by cardinality: "4" = {4,8,16,32}, "32" = {1..32}, or an
    /// explicit list like "2-8-32".
    #[arg(long, value_delimiter = ',', default_value = "4,32")]
    pub cases: Vec<String>,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    /// Fine-tune epochs per sub-step for the masked approach (0 disables).
    #[arg(long, default_value_t = 5)]
    pub substep_epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 20)]
    pub repeats: usize,
    /// Also write fig7..fig10 plot CSVs.
    #[arg(long, default_value_t = false)]
    pub emit_plot_data: bool,
    /// Output directory (default: $UNICSI_OUT_DIR or ".").
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn main_entry() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

fn out_dir(opt: &Option<PathBuf>) -> PathBuf {
    opt.clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn parse_profile_spec(spec: &str) -> anyhow::Result<ChannelProfile> {
    if let Some(p) = builtin_profile(spec) {
        return Ok(p);
    }
    if let Some(rest) = spec.strip_prefix("tdl:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            bail!("bad TDL spec '{spec}': expected tdl:<taps>:<spacing_ns>:<rms_ns>");
        }
        let taps: usize = parts[0].parse().context("TDL tap count")?;
        let spacing: f64 = parts[1].parse().context("TDL spacing")?;
        let rms: f64 = parts[2].parse().context("TDL rms")?;
        return Ok(ChannelProfile::exponential_tdl(
            format!("tdl:{taps}:{spacing}:{rms}"),
            taps,
            spacing,
            rms,
        )?);
    }
    let path = Path::new(spec);
    if path.exists() {
        let json = std::fs::read_to_string(path)
            .with_context(|| format!("reading profile file {spec}"))?;
        return Ok(ChannelProfile::from_json(&json)?);
    }
    bail!("unknown profile '{spec}' (not builtin, not tdl:..., not a file)")
}

fn parse_snr(s: &str) -> anyhow::Result<Option<f64>> {
    match s.to_ascii_lowercase().as_str() {
        "inf" | "none" | "off" => Ok(None),
        other => Ok(Some(other.parse::<f64>().context("SNR value")?)),
    }
}

/// "4,8,16,32", "1..32" ranges, or dash-separated "2-8-32".
pub fn parse_lambda_list(s: &str) -> anyhow::Result<Vec<usize>> {
    let mut out = Vec::new();
    for piece in s.split([',', '-']) {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        if let Some((a, b)) = piece.split_once("..") {
            let a: usize = a.trim().parse().context("range start")?;
            let b: usize = b.trim().parse().context("range end")?;
            if b < a {
                bail!("empty range {piece}");
            }
            out.extend(a..=b);
        } else {
            out.push(piece.parse().context("latent size")?);
        }
    }
    if out.is_empty() {
        bail!("no latent sizes given");
    }
    Ok(out)
}

fn lambda_set_from(lambdas: &str, weights: &Option<String>) -> anyhow::Result<LambdaSet> {
    let lambdas = parse_lambda_list(lambdas)?;
    match weights {
        None => Ok(LambdaSet::uniform(lambdas)?),
        Some(w) => {
            let ws: Vec<f64> = w
                .split(',')
                .map(|p| p.trim().parse::<f64>().context("weight"))
                .collect::<anyhow::Result<_>>()?;
            Ok(LambdaSet::new(lambdas, ws)?)
        }
    }
}

fn build_approach(
    approach: Approach,
    cat: crate::pipeline::InputCategory,
    ls: &LambdaSet,
    seed: u64,
) -> crate::error::Result<AeBundle> {
    match approach {
        Approach::Masked => build_masked(cat, ls, seed),
        Approach::Saldr => build_saldr(cat, ls, seed),
        Approach::Naive => build_naive(cat, ls, seed),
    }
}

// ---------------------------------------------------------------- gen --

pub fn cmd_gen(args: &GenArgs) -> anyhow::Result<()> {
    if args.list_profiles {
        for p in builtin_profiles() {
            println!(
                "{}: {} taps, delays 0..{} ns",
                p.name,
                p.tap_delays_ns.len(),
                p.tap_delays_ns.last().copied().unwrap_or(0.0)
            );
        }
        return Ok(());
    }
    if args.domain != "frequency" && args.domain != "delay" {
        bail!("--domain must be 'frequency' or 'delay'");
    }
    let profiles: Vec<ChannelProfile> = args
        .profile
        .iter()
        .map(|s| parse_profile_spec(s))
        .collect::<anyhow::Result<_>>()?;
    let snrs: Vec<Option<f64>> = args
        .snr
        .iter()
        .map(|s| parse_snr(s))
        .collect::<anyhow::Result<_>>()?;

    let dir = out_dir(&args.out);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let mut dataset_manifest = DatasetManifest::new(&args.domain, args.spacing_hz, args.seed);
    let mut setting_idx = 0u64;
    let mut total_tensors = 0usize;
    for profile in &profiles {
        for snr in &snrs {
            for &k in &args.k {
                for &n_bs in &args.nbs {
                    for &n_ue in &args.nue {
                        let setting = GenSetting {
                            profile: profile.clone(),
                            snr_db: *snr,
                            k,
                            n_bs,
                            n_ue,
                            seed: args.seed.wrapping_add(setting_idx),
                            samples: args.samples,
                            subcarrier_spacing_hz: args.spacing_hz,
                        };
                        let tensors = generate_csi(&setting)?;
                        let stored: Vec<CsiTensor> = if args.domain == "delay" {
                            let cat = categorize(k)?;
                            let mut out = Vec::new();
                            for t in &tensors {
                                for slice in partition(t) {
                                    let d = to_delay(&slice, cat)?;
                                    out.push(CsiTensor {
                                        data: d.data,
                                        k: cat.ifft_size,
                                        n_bs: 1,
                                        n_ue: 1,
                                        subcarrier_spacing_hz: args.spacing_hz,
                                    });
                                }
                            }
                            out
                        } else {
                            tensors
                        };
                        let file = format!("{}_{:03}.csit", args.name, setting_idx);
                        let path = dir.join(&file);
                        write_container(&path, &stored)?;
                        total_tensors += stored.len();
                        dataset_manifest.entries.push(ManifestEntry {
                            file,
                            sha256: crate::channelgen::container::file_digest(&path)?,
                            tensor_count: stored.len(),
                            dims: [
                                2,
                                stored[0].k as u32,
                                stored[0].n_bs as u32,
                                stored[0].n_ue as u32,
                            ],
                            setting,
                        });
                        setting_idx += 1;
                    }
                }
            }
        }
    }

    let manifest_path = dir.join(format!("{}.manifest.json", args.name));
    dataset_manifest.save(&manifest_path)?;

    let mut run = RunManifest::new("gen", serde_json::to_value(args)?);
    for e in &dataset_manifest.entries {
        run.add_output(&dir.join(&e.file))?;
    }
    run.add_output(&manifest_path)?;
    run.save_next_to(&manifest_path)?;

    println!(
        "wrote {} setting(s), {} tensor(s), manifest {}",
        dataset_manifest.entries.len(),
        total_tensors,
        manifest_path.display()
    );
    Ok(())
}

// --------------------------------------------------------- data loading --

/// Load a dataset from a manifest (preferred) or a bare container file.
/// Returns the tensors, the domain tag, and the list of files read.
pub fn load_dataset(path: &Path) -> anyhow::Result<(Vec<CsiTensor>, String, Vec<PathBuf>)> {
    if path.extension().and_then(|e| e.to_str()) == Some("json") {
        let m = DatasetManifest::load(path)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let mut tensors = Vec::new();
        let mut files = vec![path.to_path_buf()];
        for e in &m.entries {
            let p = dir.join(&e.file);
            tensors.extend(read_container(&p, m.subcarrier_spacing_hz)?);
            files.push(p);
        }
        if tensors.is_empty() {
            bail!("dataset manifest {} lists no tensors", path.display());
        }
        Ok((tensors, m.domain, files))
    } else {
        let tensors = read_container(path, DEFAULT_SUBCARRIER_SPACING_HZ)?;
        Ok((tensors, "frequency".into(), vec![path.to_path_buf()]))
    }
}

/// Turn a loaded dataset into normalized delay-domain training samples.
pub fn dataset_to_delay(tensors: &[CsiTensor], domain: &str) -> anyhow::Result<Vec<DelaySample>> {
    let samples = match domain {
        "frequency" => delay_dataset(tensors)?,
        "delay" => tensors
            .iter()
            .map(|t| {
                let cat = categorize(t.k)?;
                if t.n_bs != 1 || t.n_ue != 1 || t.k != cat.ifft_size {
                    return Err(Error::usage(
                        "delay-domain containers must hold [2, N, 1, 1] samples",
                    ));
                }
                Ok(DelaySample {
                    data: t.data.clone(),
                    scale: 1.0,
                    category: cat,
                    origin: None,
                }
                .normalized())
            })
            .collect::<crate::error::Result<Vec<_>>>()?,
        other => bail!("unknown dataset domain '{other}'"),
    };
    let cat = samples
        .first()
        .map(|s| s.category)
        .ok_or_else(|| Error::argument("empty dataset"))?;
    if samples.iter().any(|s| s.category != cat) {
        bail!("dataset mixes input categories; train one category at a time");
    }
    Ok(samples)
}

// -------------------------------------------------------------- train --

pub fn cmd_train(args: &TrainArgs) -> anyhow::Result<()> {
    let approach: Approach = args.approach.parse()?;
    let ls = lambda_set_from(&args.lambdas, &args.weights)?;
    let (tensors, domain, files) = load_dataset(&args.data)?;
    let samples = dataset_to_delay(&tensors, &domain)?;
    let cat = samples[0].category;

    let mut bundle = build_approach(approach, cat, &ls, args.seed)?;
    let cfg = TrainConfig {
        epochs_joint: args.epochs,
        epochs_per_substep: args.substep_epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        seed: args.seed,
        lambda_set: ls.clone(),
        fine_tune: args.fine_tune,
    };
    if args.fine_tune && approach != Approach::Masked {
        bail!("--fine-tune requires --approach masked");
    }
    let mut history = train_joint(&mut bundle, &samples, &cfg)?;
    if args.fine_tune {
        history.extend(fine_tune(&mut bundle, &samples, &cfg)?);
    }

    let ckpt = args
        .out
        .clone()
        .unwrap_or_else(|| out_dir(&None).join("model.csae"));
    if let Some(parent) = ckpt.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let meta = CheckpointMeta {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        approach,
        category_index: cat.index,
        lambdas: ls.lambdas().to_vec(),
        weights: ls.weights().to_vec(),
        init_seed: args.seed,
        training: json!({
            "config": &cfg,
            "dataset": args.data.display().to_string(),
            "sample_count": samples.len(),
            "history": &history,
        }),
    };
    save_bundle(&ckpt, &bundle, &meta)?;
    let history_path = ckpt.with_extension("history.csv");
    write_history_csv(&history_path, &history, &ls)?;

    let mut run = RunManifest::new("train", serde_json::to_value(args)?);
    for f in &files {
        run.add_input(f)?;
    }
    run.add_output(&ckpt)?;
    run.add_output(&history_path)?;
    run.save_next_to(&ckpt)?;

    let final_loss = history.last().map(|r| r.report.total).unwrap_or(f64::NAN);
    println!(
        "trained {} on {} samples (category {}): encoder-side params {}, total {}, final loss {:.6e}",
        approach,
        samples.len(),
        cat.index,
        bundle.encoder_param_count(),
        bundle.total_param_count(),
        final_loss
    );
    println!("checkpoint {}", ckpt.display());
    Ok(())
}

// ---------------------------------------------------------------- eval --

fn write_nmse_csv(
    path: &Path,
    report: &EvalReport,
    scope: NmseScope,
    k_ref: usize,
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["approach", "lambda", "cr", "nmse_linear", "nmse_db", "n"])?;
    for r in report.results.iter().filter(|r| r.scope == scope) {
        let cr = per_part_compression_ratio(r.lambda, k_ref);
        w.write_record([
            r.approach.to_string(),
            r.lambda.to_string(),
            format!("{}", *cr.numer() as f64 / *cr.denom() as f64),
            format!("{:.17e}", r.nmse_linear),
            format!("{:.6}", r.nmse_db),
            r.sample_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Raw reconstruction dump: magic "CSRD", u32 version, u32 pair count,
/// u32 vector length, then (reference, reconstruction) f64 LE row pairs.
fn dump_recons(
    dir: &Path,
    bundle: &AeBundle,
    tensors: &[CsiTensor],
) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for &lambda in bundle.lambda_set.lambdas() {
        let path = dir.join(format!("dump_lambda_{lambda}.bin"));
        let mut rows: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        for t in tensors {
            for slice in partition(t) {
                let dn = to_delay(&slice, bundle.category)?.normalized();
                let recon = bundle.autoencode(&dn.data, lambda)?;
                rows.push((dn.data, recon));
            }
        }
        let mut w = std::io::BufWriter::new(std::fs::File::create(&path)?);
        w.write_all(b"CSRD")?;
        w.write_u32::<LittleEndian>(1)?;
        w.write_u32::<LittleEndian>(rows.len() as u32)?;
        w.write_u32::<LittleEndian>(rows[0].0.len() as u32)?;
        for (h, hat) in &rows {
            for v in h {
                w.write_f64::<LittleEndian>(*v)?;
            }
            for v in hat {
                w.write_f64::<LittleEndian>(*v)?;
            }
        }
        w.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

pub fn cmd_eval(args: &EvalArgs) -> anyhow::Result<()> {
    let (bundle, _meta) = load_bundle(&args.ckpt)?;
    let (tensors, domain, files) = load_dataset(&args.data)?;
    if domain != "frequency" {
        bail!("eval needs a frequency-domain dataset (got '{domain}')");
    }
    let ls = bundle.lambda_set.clone();
    let report = evaluate(&bundle, &tensors, &ls)?;
    let k_ref = bundle.category.rb_max;

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| out_dir(&None).join("results.csv"));
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_nmse_csv(&out, &report, NmseScope::DelaySlice, k_ref)?;
    let tensor_out = out.with_extension("tensor.csv");
    write_nmse_csv(&tensor_out, &report, NmseScope::FullTensor, k_ref)?;

    let mut run = RunManifest::new("eval", serde_json::to_value(args)?);
    run.add_input(&args.ckpt)?;
    for f in &files {
        run.add_input(f)?;
    }
    run.add_output(&out)?;
    run.add_output(&tensor_out)?;

    if let Some(dir) = &args.dump_recon {
        for p in dump_recons(dir, &bundle, &tensors)? {
            run.add_output(&p)?;
        }
    }
    if let Some(dir) = &args.emit_plot_data {
        std::fs::create_dir_all(dir)?;
        let fig7 = dir.join("fig7.csv");
        let mut w = csv::Writer::from_path(&fig7)?;
        w.write_record(["approach", "lambda", "cr", "nmse_db"])?;
        for r in report.results.iter().filter(|r| r.scope == NmseScope::DelaySlice) {
            let cr = per_part_compression_ratio(r.lambda, k_ref);
            w.write_record([
                r.approach.to_string(),
                r.lambda.to_string(),
                format!("{}", *cr.numer() as f64 / *cr.denom() as f64),
                format!("{:.6}", r.nmse_db),
            ])?;
        }
        w.flush()?;
        run.add_output(&fig7)?;
    }
    run.save_next_to(&out)?;

    for r in report.results.iter().filter(|r| r.scope == NmseScope::DelaySlice) {
        println!(
            "lambda {:>3}: NMSE {:.4e} ({:.2} dB) over {} slices",
            r.lambda, r.nmse_linear, r.nmse_db, r.sample_count
        );
    }
    println!("results {}", out.display());
    Ok(())
}

// --------------------------------------------------------------- bench --

fn default_scaling_sets(lambda_max: usize) -> Vec<LambdaSet> {
    // Cardinality n supports the n largest latent sizes up to lambda_max.
    [1usize, 2, 4, 8, 16, 24, 32]
        .iter()
        .filter(|n| **n <= lambda_max)
        .map(|n| {
            LambdaSet::uniform(((lambda_max - n + 1)..=lambda_max).collect()).expect("scaling set")
        })
        .collect()
}

pub fn cmd_bench(args: &BenchArgs) -> anyhow::Result<()> {
    let (bundle, _meta) = load_bundle(&args.ckpt)?;
    let precision = if args.f32 {
        BenchPrecision::F32
    } else {
        BenchPrecision::F64
    };
    let result = bench_latency(&bundle, args.repeats, precision)?;

    let out = args
        .out
        .clone()
        .unwrap_or_else(|| out_dir(&None).join("bench.csv"));
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = csv::Writer::from_path(&out)?;
    w.write_record(["approach", "cardinality", "params", "latency_s", "flops"])?;
    w.write_record([
        result.approach.to_string(),
        result.cardinality.to_string(),
        result.param_count.to_string(),
        format!("{:.9}", result.worst_cr_latency),
        result.worst_cr_flops.to_string(),
    ])?;
    w.flush()?;

    let per_cr = out.with_extension("per_cr.csv");
    let mut w = csv::Writer::from_path(&per_cr)?;
    w.write_record(["approach", "lambda", "latency_s", "flops"])?;
    for c in &result.per_cr {
        w.write_record([
            result.approach.to_string(),
            c.lambda.to_string(),
            format!("{:.9}", c.seconds),
            c.flops.to_string(),
        ])?;
    }
    w.flush()?;

    let mut run = RunManifest::new("bench", serde_json::to_value(args)?);
    run.add_input(&args.ckpt)?;
    run.add_output(&out)?;
    run.add_output(&per_cr)?;

    if let Some(dir) = &args.emit_plot_data {
        std::fs::create_dir_all(dir)?;
        let sets = default_scaling_sets(bundle.lambda_set.lambda_max());
        let rows = scaling_experiment(
            &[bundle.approach],
            &sets,
            bundle.category,
            1,
            args.repeats.min(50),
            precision,
        )?;
        let fig8 = dir.join("fig8.csv");
        let fig9 = dir.join("fig9.csv");
        let mut w8 = csv::Writer::from_path(&fig8)?;
        w8.write_record(["approach", "cardinality", "latency_ms"])?;
        let mut w9 = csv::Writer::from_path(&fig9)?;
        w9.write_record(["approach", "cardinality", "params"])?;
        for r in &rows {
            w8.write_record([
                r.approach.to_string(),
                r.cardinality.to_string(),
                format!("{:.6}", r.worst_latency_s * 1e3),
            ])?;
            w9.write_record([
                r.approach.to_string(),
                r.cardinality.to_string(),
                r.params.to_string(),
            ])?;
        }
        w8.flush()?;
        w9.flush()?;
        run.add_output(&fig8)?;
        run.add_output(&fig9)?;
    }
    run.save_next_to(&out)?;

    println!(
        "{}: worst-CR latency {:.4} ms over {} repeats, {} flops/encode-pass, {} params",
        result.approach,
        result.worst_cr_latency * 1e3,
        result.repeats,
        result.worst_cr_flops,
        result.param_count
    );
    println!("bench {}", out.display());
    Ok(())
}

// ------------------------------------------------------------- compare --

fn case_lambda_set(case: &str) -> anyhow::Result<LambdaSet> {
    match case.trim() {
        "4" => Ok(LambdaSet::uniform(vec![4, 8, 16, 32])?),
        "32" => Ok(LambdaSet::uniform((1..=32).collect())?),
        other => Ok(LambdaSet::uniform(parse_lambda_list(other)?)?),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

pub fn cmd_compare(args: &CompareArgs) -> anyhow::Result<()> {
    let (tensors, domain, files) = load_dataset(&args.data)?;
    if domain != "frequency" {
        bail!("compare needs a frequency-domain dataset (got '{domain}')");
    }
    // 90/10 train/test split by seed-stable hash of the tensor index.
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, t) in tensors.into_iter().enumerate() {
        if (splitmix64(args.seed ^ i as u64) & 0xFFFF) < 6554 {
            test.push(t);
        } else {
            train.push(t);
        }
    }
    if train.is_empty() || test.is_empty() {
        bail!("dataset too small for a 90/10 split");
    }
    let train_samples = delay_dataset(&train)?;
    let cat = train_samples[0].category;

    let dir = out_dir(&args.out);
    std::fs::create_dir_all(&dir)?;
    let table_path = dir.join("table3.csv");
    let mut table = csv::Writer::from_path(&table_path)?;
    table.write_record(["case", "approach", "params", "latency_ms", "flops"])?;

    let mut run = RunManifest::new("compare", serde_json::to_value(args)?);
    for f in &files {
        run.add_input(f)?;
    }

    let mut fig7_rows: Vec<(Approach, usize, f64, f64)> = Vec::new();
    let mut fig10_history: Option<(Vec<EpochRecord>, LambdaSet)> = None;
    let mut case_outputs = Vec::new();

    for (case_idx, case) in args.cases.iter().enumerate() {
        let ls = case_lambda_set(case)?;
        let k_ref = cat.rb_max;
        for approach in [Approach::Naive, Approach::Saldr, Approach::Masked] {
            let mut bundle = build_approach(approach, cat, &ls, args.seed)?;
            let cfg = TrainConfig {
                epochs_joint: args.epochs,
                epochs_per_substep: args.substep_epochs,
                batch_size: args.batch,
                learning_rate: args.lr,
                seed: args.seed,
                lambda_set: ls.clone(),
                fine_tune: approach == Approach::Masked && args.substep_epochs > 0,
            };
            let mut history = train_joint(&mut bundle, &train_samples, &cfg)?;
            if cfg.fine_tune {
                history.extend(fine_tune(&mut bundle, &train_samples, &cfg)?);
                if case_idx == 0 {
                    fig10_history = Some((history.clone(), ls.clone()));
                }
            }
            let report = evaluate(&bundle, &test, &ls)?;
            let bench = bench_latency(&bundle, args.repeats, BenchPrecision::F64)?;

            table.write_record([
                case.clone(),
                approach.to_string(),
                bundle.encoder_param_count().to_string(),
                format!("{:.6}", bench.worst_cr_latency * 1e3),
                bench.worst_cr_flops.to_string(),
            ])?;

            let nmse_path = dir.join(format!("nmse_case_{case}_{approach}.csv"));
            write_nmse_csv(&nmse_path, &report, NmseScope::DelaySlice, k_ref)?;
            case_outputs.push(nmse_path);

            if case_idx == 0 {
                for r in report.results.iter().filter(|r| r.scope == NmseScope::DelaySlice) {
                    let cr = per_part_compression_ratio(r.lambda, k_ref);
                    fig7_rows.push((
                        approach,
                        r.lambda,
                        *cr.numer() as f64 / *cr.denom() as f64,
                        r.nmse_db,
                    ));
                }
            }
            println!(
                "case {case} {approach}: params {}, worst-CR {:.4} ms",
                bundle.encoder_param_count(),
                bench.worst_cr_latency * 1e3
            );
        }
    }
    table.flush()?;
    run.add_output(&table_path)?;
    for p in &case_outputs {
        run.add_output(p)?;
    }

    if args.emit_plot_data {
        let fig7 = dir.join("fig7.csv");
        let mut w = csv::Writer::from_path(&fig7)?;
        w.write_record(["approach", "lambda", "cr", "nmse_db"])?;
        for (a, l, cr, db) in &fig7_rows {
            w.write_record([
                a.to_string(),
                l.to_string(),
                cr.to_string(),
                format!("{db:.6}"),
            ])?;
        }
        w.flush()?;
        run.add_output(&fig7)?;

        let sets = default_scaling_sets(32);
        let rows = scaling_experiment(
            &[Approach::Naive, Approach::Saldr, Approach::Masked],
            &sets,
            cat,
            args.seed,
            args.repeats.min(20),
            BenchPrecision::F64,
        )?;
        let fig8 = dir.join("fig8.csv");
        let fig9 = dir.join("fig9.csv");
        let mut w8 = csv::Writer::from_path(&fig8)?;
        w8.write_record(["approach", "cardinality", "latency_ms"])?;
        let mut w9 = csv::Writer::from_path(&fig9)?;
        w9.write_record(["approach", "cardinality", "params"])?;
        for r in &rows {
            w8.write_record([
                r.approach.to_string(),
                r.cardinality.to_string(),
                format!("{:.6}", r.worst_latency_s * 1e3),
            ])?;
            w9.write_record([
                r.approach.to_string(),
                r.cardinality.to_string(),
                r.params.to_string(),
            ])?;
        }
        w8.flush()?;
        w9.flush()?;
        run.add_output(&fig8)?;
        run.add_output(&fig9)?;

        if let Some((history, ls)) = &fig10_history {
            let fig10 = dir.join("fig10.csv");
            write_history_csv(&fig10, history, ls)?;
            run.add_output(&fig10)?;
        }
    }
    run.save_next_to(&table_path)?;
    println!("comparison table {}", table_path.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_list_parsing() {
        assert_eq!(parse_lambda_list("4,8,16,32").unwrap(), vec![4, 8, 16, 32]);
        assert_eq!(parse_lambda_list("1..5").unwrap(), vec![1, 2, 3, 4, 5]);
        assert_eq!(parse_lambda_list("2-8-32").unwrap(), vec![2, 8, 32]);
        assert_eq!(
            parse_lambda_list("1..3,8,16..17").unwrap(),
            vec![1, 2, 3, 8, 16, 17]
        );
        assert!(parse_lambda_list("").is_err());
        assert!(parse_lambda_list("5..2").is_err());
    }

    #[test]
    fn profile_specs() {
        assert_eq!(parse_profile_spec("EVA").unwrap().tap_delays_ns.len(), 9);
        let tdl = parse_profile_spec("tdl:5:20:100").unwrap();
        assert_eq!(tdl.tap_delays_ns.len(), 5);
        assert!(parse_profile_spec("nonsense").is_err());
        assert!(parse_profile_spec("tdl:1:2").is_err());
    }

    #[test]
    fn snr_parsing() {
        assert_eq!(parse_snr("20").unwrap(), Some(20.0));
        assert_eq!(parse_snr("inf").unwrap(), None);
        assert!(parse_snr("abc").is_err());
    }

    #[test]
    fn case_sets() {
        assert_eq!(case_lambda_set("4").unwrap().lambdas(), &[4, 8, 16, 32]);
        assert_eq!(case_lambda_set("32").unwrap().len(), 32);
        assert_eq!(case_lambda_set("2-8-32").unwrap().lambdas(), &[2, 8, 32]);
    }

    #[test]
    fn scaling_sets_shapes() {
        let sets = default_scaling_sets(32);
        assert_eq!(sets[0].lambdas(), &[32]);
        assert_eq!(sets.last().unwrap().len(), 32);
        let small = default_scaling_sets(8);
        assert!(small.iter().all(|s| s.lambda_max() == 8));
    }
}
