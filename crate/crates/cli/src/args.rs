use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "swlrtr", version, about = "Hyperspectral mixed-noise removal")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SWLRTR_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a seeded synthetic low-rank cube.
    Synth(SynthArgs),
    /// Add one of the benchmark noise cases to a clean cube.
    Simulate(SimulateArgs),
    /// Remove mixed noise from a cube.
    Denoise(DenoiseArgs),
    /// Compare two cubes band by band.
    Metrics(MetricsArgs),
    /// Time each pipeline stage across cube sizes.
    Bench(BenchArgs),
    /// Run a command again from its manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 32)]
    pub rows: usize,
    #[arg(long, default_value_t = 32)]
    pub cols: usize,
    #[arg(long, default_value_t = 16)]
    pub bands: usize,
    #[arg(long, default_value_t = 3)]
    pub rank: usize,
    #[arg(long)]
    pub seed: u64,
    /// Output cube path; a manifest is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Clean cube.
    pub clean: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub case: u8,
    #[arg(long)]
    pub seed: u64,
    /// Use the benchmark band counts even when the cube has fewer bands
    /// than they need.
    #[arg(long)]
    pub unscaled: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Solver parameters. Flags override the config file, which overrides the
/// built-in defaults.
#[derive(Args, Debug, Default, Clone)]
pub struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Initial subspace dimension, or `auto`.
    #[arg(long, allow_hyphen_values = true)]
    pub k: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub p: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub q: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda1: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda2: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<String>,
    /// Outer iterations.
    #[arg(long, allow_hyphen_values = true)]
    pub iters: Option<String>,
    /// Any other parameter as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    pub fn flag_pairs(&self) -> Vec<(String, String)> {
        let named = [
            ("k", &self.k),
            ("p", &self.p),
            ("q", &self.q),
            ("lambda1", &self.lambda1),
            ("lambda2", &self.lambda2),
            ("alpha", &self.alpha),
            ("beta", &self.beta),
            ("iters", &self.iters),
        ];
        let mut pairs: Vec<(String, String)> = named
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        for raw in &self.set {
            match raw.split_once('=') {
                Some((k, v)) => pairs.push((k.trim().to_string(), v.trim().to_string())),
                None => pairs.push((raw.clone(), String::new())),
            }
        }
        pairs
    }
}

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    /// Noisy cube.
    pub noisy: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Clean cube; adds per-iteration MPSNR and a metrics report.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Min-max normalize before denoising and map the outputs back.
    #[arg(long)]
    pub normalize: bool,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    pub reference: PathBuf,
    pub test: PathBuf,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Square image sides or `ROWSxCOLS`, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<String>,
    #[arg(long, default_value_t = 16)]
    pub bands: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub case: u8,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub config: ConfigArgs,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write into this directory instead of the recorded outputs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
