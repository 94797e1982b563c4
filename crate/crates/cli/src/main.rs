//! `saeti`: find snippets, train, generate gaps, impute and evaluate.
//!
//! Exit codes: 0 success, 2 usage or validation error, 1 runtime failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "saeti", version, about = "Snippet-guided imputation of multivariate time series")]
#[command(long_about = "Snippet-guided imputation of multivariate time series.

Every randomized step (weight init, data split, masking, gap generation) draws
from the single --seed value, so reruns with equal inputs and flags produce
byte-identical files.

EXAMPLES:
  saeti snippets --input train.csv --m 32 --k 3 --out snippets.json
  saeti train --input train.csv --m 32 --k 3 --out model.saeti
  saeti generate-gaps --input test.csv --scenario blackout --gap-len 10 --out gapped.csv --mask-out mask.csv
  saeti impute --input gapped.csv --bundle model.saeti --out imputed.csv
  saeti evaluate --truth test.csv --imputed imputed.csv --mask mask.csv --report report.json --baselines")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the K most significant snippets of every coordinate
    Snippets(SnippetsArgs),
    /// Train the recognizer and reconstructor and write a model bundle
    Train(TrainArgs),
    /// Remove values from a complete series following a gap scenario
    GenerateGaps(GapArgs),
    /// Fill the missing values of a series with a trained bundle
    Impute(ImputeArgs),
    /// Score an imputed series against the truth at masked cells
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
pub struct SnippetsArgs {
    /// Input CSV, header of coordinate names, empty cells for missing values
    #[arg(long)]
    pub input: PathBuf,
    /// Snippet (segment) length
    #[arg(long)]
    pub m: usize,
    /// Number of snippets per coordinate
    #[arg(long)]
    pub k: usize,
    /// MPdist inner window length [default: ceil(m/2)]
    #[arg(long)]
    pub ell: Option<usize>,
    /// Output JSON with one snippet set per coordinate
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Representative series (CSV)
    #[arg(long)]
    pub input: PathBuf,
    /// Window and snippet length
    #[arg(long)]
    pub m: usize,
    /// Snippets per coordinate
    #[arg(long)]
    pub k: usize,
    /// MPdist inner window length [default: ceil(m/2)]
    #[arg(long)]
    pub ell: Option<usize>,
    /// Latent size of the reconstructor [default: ceil(d*m/4)]
    #[arg(long)]
    pub latent: Option<usize>,
    /// Seed for every random draw
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output bundle; per-epoch losses go to <out>.losses.csv
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Share of input points masked during training
    #[arg(long, default_value_t = 0.25)]
    pub mask_fraction: f64,
    /// Training window stride [default: m, non-overlapping]
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Args)]
pub struct GapArgs {
    /// Complete input series (CSV)
    #[arg(long)]
    pub input: PathBuf,
    /// blackout, mcar or tsnbr
    #[arg(long)]
    pub scenario: String,
    /// Block length [default: 10 for blackout, n/10 for tsnbr]; MCAR uses --block-len
    #[arg(long)]
    pub gap_len: Option<usize>,
    /// Target missing fraction for mcar
    #[arg(long, default_value_t = 0.25)]
    pub rate: f64,
    /// Block length for mcar
    #[arg(long, default_value_t = saeti::scenarios::MCAR_BLOCK_LEN)]
    pub block_len: usize,
    /// Coordinate (1-based) for tsnbr
    #[arg(long, default_value_t = 1)]
    pub coord: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Gapped series (CSV)
    #[arg(long)]
    pub out: PathBuf,
    /// Removed cells as a `row,col` CSV, both 1-based
    #[arg(long)]
    pub mask_out: PathBuf,
}

#[derive(Args)]
pub struct ImputeArgs {
    /// Series with gaps (CSV)
    #[arg(long)]
    pub input: PathBuf,
    /// Model bundle written by `train`
    #[arg(long)]
    pub bundle: PathBuf,
    /// Gap-free output series (CSV)
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Complete reference series (CSV)
    #[arg(long)]
    pub truth: PathBuf,
    /// Imputed series (CSV)
    #[arg(long)]
    pub imputed: PathBuf,
    /// Cells to score, `row,col` CSV as written by generate-gaps
    #[arg(long)]
    pub mask: PathBuf,
    /// Output JSON report
    #[arg(long)]
    pub report: PathBuf,
    /// Also score mean and linear-interpolation baselines
    #[arg(long)]
    pub baselines: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Snippets(a) => commands::snippets(&a),
        Command::Train(a) => commands::train(&a),
        Command::GenerateGaps(a) => commands::generate_gaps(&a),
        Command::Impute(a) => commands::impute(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
