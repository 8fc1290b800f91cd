use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "qsat", version, about = "Sample-size estimation for qualitative studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a calibrated synthetic corpus as CSV.
    Synth(SynthArgs),
    /// Train every learner, stack, calibrate and save a model bundle.
    Train(TrainArgs),
    /// Score an existing bundle on a labelled CSV.
    Evaluate(EvaluateArgs),
    /// Predict the sample size for one study description.
    Predict(PredictArgs),
    /// Serve the prediction API over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Latent {
    Design,
    Mixture,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    /// Records generated for each of the five designs.
    #[arg(long, default_value_t = 150)]
    pub per_design: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Monotone signal strength in [0, 1].
    #[arg(long, default_value_t = 0.8)]
    pub signal: f64,
    /// Probability in [0, 0.5] of replacing a score with a random level.
    #[arg(long, default_value_t = 0.1)]
    pub flip: f64,
    #[arg(long, value_enum, default_value_t = Latent::Design)]
    pub latent: Latent,
    /// Output CSV path; the generator config is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    TestSplit,
    Dedicated,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Training corpus CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Bundle path, conventionally `*.qsat.json`. Reports are written beside it.
    #[arg(long)]
    pub out: PathBuf,
    /// Full training configuration (JSON); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Grid overrides (JSON object of learner -> axes).
    #[arg(long)]
    pub grids: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of cross-validation folds.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub calibration: Option<Calibration>,
    /// Skip downsampling designs to equal counts.
    #[arg(long)]
    pub no_balance: bool,
    /// Also fit a lasso (reported, not averaged).
    #[arg(long)]
    pub include_lasso: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Labelled CSV to score.
    #[arg(long)]
    pub data: PathBuf,
    /// Report JSON path; a CSV is written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    /// Request body as a JSON file, same schema as the HTTP API.
    #[arg(long, conflicts_with_all = ["design", "scores"])]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub design: Option<String>,
    /// One `metric=value` pair; repeat for all ten metrics.
    #[arg(long = "score", value_name = "KEY=VALUE")]
    pub scores: Vec<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Also write the response to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub bind: String,
    /// Port to listen on; 0 picks a free port.
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}
