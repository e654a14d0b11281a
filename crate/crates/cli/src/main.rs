mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use phenowarp::distance::{Measure, VectorMode, WarpConfig};
use phenowarp::preprocess::{PipelineConfig, Smoothing};
use phenowarp::vegindex::IndexKind;

#[derive(Debug, Parser, Serialize)]
#[command(name = "phenowarp", version, about = "Crop-type mapping with vector dynamic time warping")]
pub struct Cli {
    /// Flat `key = value` file; keys are long flag names. Command-line flags take precedence.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (0 uses all cores). Output does not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Fill cloud gaps, smooth and resample fields onto a common grid.
    Preprocess(PreprocessArgs),
    /// Run the stratified classification experiment.
    Classify(ClassifyArgs),
    /// Select the discriminative time window from class median profiles.
    SelectWindow(SelectWindowArgs),
    /// Generate two synthetic years in the ingest schema.
    Simulate(SimulateArgs),
    /// Print the local and accumulated cost matrices for two fields.
    Distance(DistanceArgs),
    /// Compute accuracy metrics from a predictions file.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct InputArgs {
    /// Observation CSV files (repeatable or comma-separated).
    #[arg(long, required = true, value_delimiter = ',', action = clap::ArgAction::Append)]
    pub observations: Vec<PathBuf>,

    /// Label CSV (`field_id,year,crop`).
    #[arg(long)]
    pub labels: PathBuf,

    /// Vegetation index computed from band reflectances when `vi` is empty.
    #[arg(long, default_value = "msavi")]
    pub index: IndexKind,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SmoothingArg {
    Sg,
    DoubleSigmoid,
    None,
}

#[derive(Debug, Args, Serialize)]
pub struct PipelineArgs {
    #[arg(long, value_enum, default_value = "sg")]
    pub smoothing: SmoothingArg,

    /// Savitzky-Golay window length in samples (odd).
    #[arg(long, default_value_t = 5)]
    pub sg_window: usize,

    /// Savitzky-Golay polynomial order.
    #[arg(long, default_value_t = 2)]
    pub sg_order: usize,

    /// Common grid step in days.
    #[arg(long, default_value_t = 1)]
    pub step: i32,
}

impl PipelineArgs {
    pub fn config(&self) -> PipelineConfig {
        let smoothing = match self.smoothing {
            SmoothingArg::Sg => Smoothing::SavitzkyGolay {
                window: self.sg_window,
                order: self.sg_order,
            },
            SmoothingArg::DoubleSigmoid => Smoothing::DoubleSigmoid,
            SmoothingArg::None => Smoothing::None,
        };
        PipelineConfig {
            smoothing,
            step: self.step,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VectorModeArg {
    Pair,
    Segment,
}

#[derive(Debug, Args, Serialize)]
pub struct WarpArgs {
    #[arg(long, default_value = "vdtw")]
    pub measure: Measure,

    /// Warping band half-width in days.
    #[arg(long, default_value_t = 15.0)]
    pub band_days: f64,

    #[arg(long, default_value_t = 0.1)]
    pub twdtw_alpha: f64,

    #[arg(long, default_value_t = 50.0)]
    pub twdtw_beta: f64,

    #[arg(long, value_enum, default_value = "pair")]
    pub vector_mode: VectorModeArg,
}

impl WarpArgs {
    pub fn config(&self) -> WarpConfig {
        WarpConfig {
            measure: self.measure,
            band_days: self.band_days,
            twdtw_alpha: self.twdtw_alpha,
            twdtw_beta: self.twdtw_beta,
            vector_mode: match self.vector_mode {
                VectorModeArg::Pair => VectorMode::Pair,
                VectorModeArg::Segment => VectorMode::Segment,
            },
            ..WarpConfig::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct PreprocessArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierArg {
    NearestNeighbor,
    MedianTemplate,
}

#[derive(Debug, Args, Serialize)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub warp: WarpArgs,
    #[arg(long)]
    pub train_year: i32,
    /// Defaults to the training year (same-year experiment).
    #[arg(long)]
    pub test_year: Option<i32>,
    #[arg(long, default_value_t = 5)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 100)]
    pub replications: usize,
    #[arg(long, value_enum, default_value = "nearest-neighbor")]
    pub classifier: ClassifierArg,
    /// Restrict series to `O1,O2` (days).
    #[arg(long, value_parser = parse_window, conflicts_with = "window_file")]
    pub window: Option<(i32, i32)>,
    /// Read the window from a `select-window` output JSON.
    #[arg(long)]
    pub window_file: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_window(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected O1,O2, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<i32>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyArg {
    MinLength,
    Union,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectWindowArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Band used by the expansion scores (always plain DTW).
    #[arg(long, default_value_t = 15.0)]
    pub band_days: f64,
    /// Year whose class medians define the window.
    #[arg(long)]
    pub year: i32,
    #[arg(long, value_enum, default_value = "min-length")]
    pub policy: PolicyArg,
    /// Plateau tolerance on the first difference, as a fraction of the score range per grid step.
    #[arg(long, default_value_t = 1e-3)]
    pub eps1: f64,
    /// Plateau tolerance on the second difference, same units as `eps1`.
    #[arg(long, default_value_t = 1e-3)]
    pub eps2: f64,
    #[arg(long, default_value_t = 3)]
    pub smoothing_width: usize,
    #[arg(long, default_value_t = 3)]
    pub stability_run: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetArg {
    /// Default class variability, identity scenarios unless overridden.
    TwoClass,
    /// Clean year A, S4-perturbed year B on an 8-day grid.
    S4Benchmark,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value = "two-class")]
    pub preset: PresetArg,
    #[arg(long, default_value_t = 100)]
    pub n_per_class: usize,
    /// identity, s1, s2, s3 or s4.
    #[arg(long)]
    pub scenario_a: Option<String>,
    #[arg(long)]
    pub scenario_b: Option<String>,
    #[arg(long)]
    pub grid_start: Option<i32>,
    #[arg(long)]
    pub grid_end: Option<i32>,
    #[arg(long)]
    pub grid_step: Option<i32>,
    #[arg(long, default_value_t = 2019)]
    pub year_a: i32,
    #[arg(long, default_value_t = 2020)]
    pub year_b: i32,
    /// Probability of flagging each sample as cloud, both years.
    #[arg(long)]
    pub cloud_fraction: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DistanceArgs {
    /// Observation CSV files (repeatable or comma-separated).
    #[arg(long, required = true, value_delimiter = ',', action = clap::ArgAction::Append)]
    pub observations: Vec<PathBuf>,
    #[arg(long, default_value = "msavi")]
    pub index: IndexKind,
    /// First field as `ID` or `ID@YEAR`.
    #[arg(long)]
    pub a: String,
    /// Second field as `ID` or `ID@YEAR`.
    #[arg(long)]
    pub b: String,
    #[command(flatten)]
    pub warp: WarpArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// CSV with `predicted` and `observed` columns.
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match config::parse_with_config(std::env::args_os().collect()) {
        Ok(cli) => cli,
        Err(config::ParseError::Clap(e)) => e.exit(),
        Err(config::ParseError::Config(msg)) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
