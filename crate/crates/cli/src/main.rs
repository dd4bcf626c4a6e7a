//! `artic`: synthetic corpora, guided factor analysis, NCMF training,
//! evaluation and plots.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input or violated
//! invariant, 3 bad arguments.

mod commands;
mod config;
mod files;
mod svg;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use artic::contour::ContourError;
use artic::factana::FactorError;
use artic::ncmf::NcmfError;
use artic::numkit::NumError;
use artic::recog::RecogError;
use clap::{Args, Parser, Subcommand};

/// A flag or config value is unusable.
#[derive(Debug)]
pub struct ArgError(pub String);

/// An input file parsed but its content breaks an invariant.
#[derive(Debug)]
pub struct InvalidInput(pub String);

impl fmt::Display for ArgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid argument: {}", self.0)
    }
}

impl fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid input: {}", self.0)
    }
}

impl std::error::Error for ArgError {}
impl std::error::Error for InvalidInput {}

#[derive(Debug, Parser)]
#[command(
    name = "artic",
    version,
    about = "Guided factor analysis and convolutive gesture decomposition of vocal-tract contours"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat JSON file whose keys match the long flag names; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic contour sequence with known factors and gestures.
    ///
    /// Writes contours.csf and truth.json (factors 2p×5, scores t×5,
    /// activations D×t, kernels K×D×5).
    Gen(GenArgs),
    /// Extract one factor per articulator and the factor scores.
    ///
    /// Writes factors.json, scores.csv (columns jaw,tongue,lip,velum,larynx;
    /// one row per frame) and report.json (relative reconstruction error).
    Factors(FactorsArgs),
    /// Train the NCMF autoencoder on factor scores.
    ///
    /// Writes checkpoint.json, trace.csv (columns update,loss,mse,sparsity,lr;
    /// one row per update) and gestural_scores.csv (columns g1..gD; one row
    /// per frame).
    Train(TrainArgs),
    /// Report sparsity, phone error rate, range and model variance.
    ///
    /// Writes report.csv with columns
    /// feature,n_speakers,per,range,model_variance,sparsity.
    /// A --per-table CSV has columns
    /// feature,model,<one PER column per data size> with model base or large.
    Eval(EvalArgs),
    /// Render gestural scores and gestures as SVG.
    ///
    /// Writes heatmap.svg from --scores and gestures.svg from --checkpoint.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    /// Vertices per contour (2p coordinates).
    #[arg(long)]
    p: Option<usize>,
    /// Frames.
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    gestures: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    /// Standard deviation of additive coordinate noise.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    fps: Option<f64>,
}

#[derive(Debug, Args)]
struct FactorsArgs {
    /// Contour file (CSF).
    input: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Check and use these factors instead of extracting them.
    #[arg(long)]
    factors_in: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Factor scores CSV from `factors`.
    scores: PathBuf,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    updates: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    gestures: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    /// Training segment length in frames; 0 uses the whole sequence.
    #[arg(long)]
    segment: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Add weight decay to the gradient instead of shrinking parameters directly.
    #[arg(long)]
    coupled_weight_decay: bool,
    /// factors.json to store with the model (needed for gesture plots).
    #[arg(long)]
    factors: Option<PathBuf>,
    /// truth.json supplying phone targets for CTC fine-tuning (lambda2 > 0).
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Factor scores CSV to encode.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// truth.json whose activation peaks give phone targets.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Require a phone error rate.
    #[arg(long)]
    per: bool,
    /// PER-by-data-size table to aggregate into range and model variance.
    #[arg(long)]
    per_table: Option<PathBuf>,
    #[arg(long)]
    beam_width: Option<usize>,
    #[arg(long)]
    head_updates: Option<usize>,
    /// Utterance length in frames for recognition.
    #[arg(long)]
    utterance: Option<usize>,
    /// Held-out utterances at the end of the sequence.
    #[arg(long)]
    test_utterances: Option<usize>,
}

#[derive(Debug, Args)]
struct PlotArgs {
    #[command(flatten)]
    common: Common,
    /// gestural_scores.csv from `train`.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// checkpoint.json with factors, for gesture strips.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

/// Exit code for an error: the first recognised cause decides.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<ArgError>() {
            return 3;
        }
        if cause.is::<InvalidInput>() || cause.is::<NumError>() {
            return 2;
        }
        if cause.is::<std::io::Error>() {
            return 1;
        }
        if let Some(c) = cause.downcast_ref::<ContourError>() {
            return match c {
                ContourError::Io(_) => 1,
                ContourError::Argument(_) => 3,
                _ => 2,
            };
        }
        if let Some(c) = cause.downcast_ref::<FactorError>() {
            return if matches!(c, FactorError::Argument(_)) {
                3
            } else {
                2
            };
        }
        if let Some(c) = cause.downcast_ref::<NcmfError>() {
            return if matches!(c, NcmfError::Argument(_)) {
                3
            } else {
                2
            };
        }
        if let Some(c) = cause.downcast_ref::<RecogError>() {
            return if matches!(c, RecogError::Argument(_)) {
                3
            } else {
                2
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Gen(a) => commands::gen(a),
        Command::Factors(a) => commands::factors(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Plot(a) => commands::plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
