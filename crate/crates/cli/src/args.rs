//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "btmf",
    version,
    about = "Bayesian temporal matrix factorization for multivariate sensor series: \
             missing-data imputation, rolling forecasts, incremental updating"
)]
pub struct Cli {
    /// Worker threads for per-channel sampling (default: $BTMF_THREADS, else all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a planted low-rank AR dataset.
    Synth(SynthArgs),
    /// Drop entries of a matrix under a missing-data scenario.
    Mask(MaskArgs),
    /// Run a single-window imputation chain.
    Impute(PipelineArgs),
    /// Train on a column prefix, then roll a forecast over what follows.
    Forecast(ForecastArgs),
    /// Run the full incremental pipeline (dynamic then fixed windows).
    Run(PipelineArgs),
    /// Accuracy report for an estimate against truth at masked positions.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output matrix file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub channels_strain: usize,
    #[arg(long, default_value_t = 10)]
    pub channels_temp: usize,
    #[arg(long, default_value_t = 2000)]
    pub columns: usize,
    #[arg(long, default_value_t = 4)]
    pub rank: usize,
    /// Comma-separated AR lag set.
    #[arg(long, default_value = "1,2")]
    pub lags: String,
    #[arg(long, default_value_t = 0.9995)]
    pub spectral_radius: f64,
    #[arg(long, default_value_t = 0.05)]
    pub innovation_std: f64,
    /// Observation noise as a fraction of signal RMS.
    #[arg(long, default_value_t = 0.01)]
    pub noise_frac: f64,
    #[arg(long, default_value_t = 20150601)]
    pub seed: u64,
    #[arg(long, default_value_t = 600)]
    pub interval_secs: u64,
    /// RFC 3339 start timestamp.
    #[arg(long, default_value = "2015-06-01T00:00:00+00:00")]
    pub start: String,
}

#[derive(Args, Debug)]
pub struct MaskArgs {
    /// Input matrix file.
    #[arg(long)]
    pub input: PathBuf,
    /// Missing scenario: rm (random), sm (structured), mm (mixed).
    #[arg(long)]
    pub scenario: String,
    /// Fraction of target cells dropped at random (rm/mm).
    #[arg(long, default_value_t = 0.0)]
    pub eta_random: f64,
    /// Fraction of each target row dropped in blocks (sm/mm).
    #[arg(long, default_value_t = 0.0)]
    pub eta_structured: f64,
    /// Columns per structured block.
    #[arg(long, default_value_t = 144)]
    pub block_length: usize,
    /// Channel group to mask (all rows when omitted).
    #[arg(long)]
    pub target_group: Option<String>,
    /// Use identical block positions in every target row.
    #[arg(long)]
    pub same_blocks: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path for the masked matrix.
    #[arg(long)]
    pub out_masked: PathBuf,
    /// Output path for the mask matrix (1 = observed).
    #[arg(long)]
    pub out_mask: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct PipelineArgs {
    /// Input matrix file.
    #[arg(long)]
    pub input: PathBuf,
    /// Flat key=value config file; flags override file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Ground-truth matrix for accuracy reporting at masked positions.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also emit per-entry mean +/- 3 std band files.
    #[arg(long)]
    pub bands: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// Comma-separated AR lag set.
    #[arg(long)]
    pub lags: Option<String>,
    /// Trailing forecast horizon in columns.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Generic config override, repeatable: --set chain.n_iters_impute=100
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Train on this many leading columns (default: every column).
    #[arg(long)]
    pub train_columns: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Ground-truth matrix file.
    #[arg(long)]
    pub truth: PathBuf,
    /// Estimate matrix file (e.g. an emitted mean matrix).
    #[arg(long)]
    pub estimate: PathBuf,
    /// Mask file; positions with value 0 are evaluated.
    #[arg(long)]
    pub mask: PathBuf,
    /// Truth column the estimate's first column corresponds to.
    #[arg(long, default_value_t = 0)]
    pub offset: usize,
    /// Also write the report to this path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
