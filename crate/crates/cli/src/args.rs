use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "copula-paths", version, about = "Copula-based sample paths from multi-step quantile forecasts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample paths and write paths.csv.
    Generate(RunArgs),
    /// Sample, score against the holdout and write all result files.
    Score(RunArgs),
    /// Like `score`, defaulting to all methods; timing.json carries speedups.
    Bench(RunArgs),
    /// Per-horizon CRPS improvement of copula over autoregressive sampling.
    Snowball(RunArgs),
    /// Train a copula parameter network.
    Train(TrainArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Score(_) => "score",
            Command::Bench(_) => "bench",
            Command::Snowball(_) => "snowball",
            Command::Train(_) => "train",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Tsf,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DataArgs {
    /// Path to a .tsf or long-format .csv file, or `synthetic` for AR(1) series.
    #[arg(long)]
    pub dataset: String,
    /// Input format; inferred from the file extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Forecast horizon; overrides the dataset header and defaults.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Season length of the seasonal-naive baseline.
    #[arg(long)]
    pub seasonality: Option<usize>,
    /// Accept negative observations and allow negative sampled values.
    #[arg(long)]
    pub allow_negative: bool,
    /// Synthetic: number of series.
    #[arg(long, default_value_t = 50)]
    pub n_series: usize,
    /// Synthetic: observations per series, including the holdout.
    #[arg(long, default_value_t = 100)]
    pub series_length: usize,
    /// Synthetic: AR coefficients, assigned to series in turn.
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.6,0.9")]
    pub phis: Vec<f64>,
    /// Synthetic: draw each coefficient uniformly from `LO,HI` instead of `--phis`.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub phi_range: Option<Vec<f64>>,
    /// Synthetic: innovation standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Synthetic: process mean.
    #[arg(long, default_value_t = 20.0)]
    pub mu: f64,
    /// Synthetic: generator seed.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// ar1 | ar1:PHI:SIGMA[:MU] | oracle | seasonal-naive[:M] | biased:B[:INNER] | external:FILE
    #[arg(long, default_value = "ar1")]
    pub forecaster: String,
    /// Comma-separated subset of naive, copula, autoregressive.
    #[arg(long, value_delimiter = ',', default_value = "naive,copula,autoregressive")]
    pub methods: Vec<String>,
    /// Sample paths per series.
    #[arg(long, default_value_t = 10)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// auto | fixed:RHO | module:CHECKPOINT
    #[arg(long, default_value = "auto")]
    pub copula: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneArg {
    Mlp,
    Gru,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputArg {
    Rho,
    RhoBeta,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Source of the training marginals; same grammar as for runs.
    #[arg(long)]
    pub forecaster: Option<String>,
    #[arg(long, value_enum, default_value = "gru")]
    pub backbone: BackboneArg,
    #[arg(long, value_enum, default_value = "rho")]
    pub output_params: OutputArg,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 20)]
    pub train_paths: usize,
    #[arg(long, default_value_t = 8)]
    pub train_horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}
