use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mlrq::synth::{CodebookFamily, ScheduleMode};
use mlrq::trainer::OverfitPolicy;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "mlrq", version, about = "Multi-layer residual vector quantization toolkit")]
#[command(after_help = "Set MLRQ_THREADS to cap the number of worker threads.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Debug, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Distortion-rate curve of random multi-stage codebooks on a Gaussian source.
    Simulate(SimulateArgs),
    /// Distortion and orthogonality of one random codebook as its variance varies.
    SweepVariance(SweepArgs),
    /// Train a layered codebook model on a directory of PGM images.
    Train(TrainArgs),
    /// Encode a PGM image into a layered bitstream.
    Encode(EncodeArgs),
    /// Decode the first layers of a bitstream into a PGM image.
    Decode(DecodeArgs),
    /// PSNR and bits per pixel of every layer prefix, one CSV row each.
    Eval(EvalArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::SweepVariance(_) => "sweep-variance",
            Command::Train(_) => "train",
            Command::Encode(_) => "encode",
            Command::Decode(_) => "decode",
            Command::Eval(_) => "eval",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Gaussian,
    Binary,
}

impl From<Family> for CodebookFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Gaussian => CodebookFamily::Gaussian,
            Family::Binary => CodebookFamily::Binary,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    ResidualEnergy,
    #[value(name = "eq7-literal")]
    #[serde(rename = "eq7-literal")]
    Compounded,
}

impl From<Schedule> for ScheduleMode {
    fn from(s: Schedule) -> Self {
        match s {
            Schedule::ResidualEnergy => ScheduleMode::ResidualEnergy,
            Schedule::Compounded => ScheduleMode::Compounded,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Report,
    Strict,
    Shrink,
}

impl From<Policy> for OverfitPolicy {
    fn from(p: Policy) -> Self {
        match p {
            Policy::Report => OverfitPolicy::Report,
            Policy::Strict => OverfitPolicy::Strict,
            Policy::Shrink => OverfitPolicy::Shrink,
        }
    }
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Source dimension.
    #[arg(long, default_value_t = 512)]
    pub n: usize,
    /// Number of layers.
    #[arg(long, default_value_t = 200)]
    pub layers: usize,
    /// Codewords per layer.
    #[arg(long, default_value_t = 4096)]
    pub k: usize,
    /// Source variance.
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    /// Source realizations averaged per layer.
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = Family::Gaussian)]
    pub family: Family,
    #[arg(long, value_enum, default_value_t = Schedule::ResidualEnergy)]
    pub schedule: Schedule,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV (layer,cum_rate_bits,distortion,shannon_bound).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    /// Number of evenly spaced variances, starting at 0.
    #[arg(long, default_value_t = 41)]
    pub points: usize,
    /// Largest variance as a multiple of sigma2 (1 - 2^(-2 log2(k)/n)).
    #[arg(long, default_value_t = 4.0)]
    pub max_multiple: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV (variance,distortion,residual_vs_estimate,residual_vs_source).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// PGM files or directories of PGM files.
    #[arg(long, required = true, num_args = 1..)]
    pub images: Vec<PathBuf>,
    /// Codebook size per layer, e.g. "256x5,128x5,32x5,16x5".
    #[arg(long, visible_alias = "k", default_value = "256x5,128x5,32x5,16x5")]
    pub layer_sizes: String,
    /// Block side length in pixels.
    #[arg(long, default_value_t = 8)]
    pub block: usize,
    /// Overfit margin: a layer is flagged when test MSE > (1 + margin) train MSE.
    #[arg(long, default_value_t = 0.10)]
    pub margin: f64,
    #[arg(long, value_enum, default_value_t = Policy::Report)]
    pub policy: Policy,
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub rel_tol: f64,
    /// Fraction of images used for training; the rest are held out.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-layer report CSV [default: <out>.report.csv].
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Input PGM image.
    #[arg(long)]
    pub input: PathBuf,
    /// Layers to encode [default: all].
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct DecodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Input bitstream.
    #[arg(long)]
    pub input: PathBuf,
    /// Layers to decode [default: all in the stream].
    #[arg(long)]
    pub layers: Option<usize>,
    /// Output PGM image.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// PGM files or directories of PGM files.
    #[arg(long, required = true, num_args = 1..)]
    pub images: Vec<PathBuf>,
    /// Output CSV (image,layers,raw_bpp,coded_bpp,psnr_db).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Debug, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of their recorded locations.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
