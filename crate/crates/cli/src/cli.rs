//! Command-line surface: argument definitions and the process entry
//! point. Exit codes: 0 success, 1 usage error, 2 data error, 3 internal
//! invariant failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands;

#[derive(Parser)]
#[command(
    name = "cpkit",
    version,
    about = "Split-conformal prediction sets over classifier softmax outputs: \
             calibrate, predict, evaluate coverage and expert agreement, and \
             probe aleatoric/epistemic uncertainty."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Calibrate a conformal predictor on a labeled softmax CSV.
    Calibrate(CalibrateArgs),
    /// Generate per-sample prediction sets from a calibrated predictor.
    Predict(PredictArgs),
    /// Score prediction sets against consensus labels and expert annotations.
    Evaluate(EvaluateArgs),
    /// Derive majority-vote consensus labels from an annotations CSV.
    Consensus(ConsensusArgs),
    /// Fleiss' kappa inter-rater agreement with a bootstrap confidence interval.
    Kappa(KappaArgs),
    /// Fraction of samples whose set width equals the unique expert label count.
    Aleatoric(AleatoricArgs),
    /// Width trends across noise-level series and against foreign datasets.
    #[command(subcommand)]
    Ood(OodCommand),
    /// Evaluate every (method, alpha) cell and write the combined report.
    Sweep(SweepArgs),
    /// Generate synthetic fixtures from a generator spec.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Args)]
pub struct CalibrateArgs {
    /// Conformal method: lac, aps, or raps.
    #[arg(long)]
    pub method: String,
    /// Miscoverage level in (0, 1).
    #[arg(long)]
    pub alpha: f64,
    /// Labeled calibration softmax CSV.
    #[arg(long)]
    pub calib: PathBuf,
    /// Output predictor JSON path.
    #[arg(long)]
    pub out: PathBuf,
    /// Tuning seed (falls back to $CPKIT_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Clamp the RAPS rank penalty at zero instead of the literal form.
    #[arg(long)]
    pub raps_positive_part: bool,
}

#[derive(Args)]
pub struct PredictArgs {
    /// Predictor JSON written by `calibrate`.
    #[arg(long)]
    pub predictor: PathBuf,
    /// Test softmax CSV (same class columns as the predictor).
    #[arg(long)]
    pub test: PathBuf,
    /// Output prediction-sets CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Prediction-sets CSV written by `predict`.
    #[arg(long)]
    pub sets: PathBuf,
    /// Consensus CSV written by `consensus`; defines the label space.
    #[arg(long)]
    pub consensus: PathBuf,
    /// Annotations CSV (sample_id,annotator_id,label).
    #[arg(long)]
    pub annotations: PathBuf,
    /// Output path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    /// Collapse shorthand cytology labels onto their parent classes.
    #[arg(long)]
    pub merge: bool,
}

#[derive(Args)]
pub struct ConsensusArgs {
    /// Annotations CSV (sample_id,annotator_id,label).
    #[arg(long)]
    pub annotations: PathBuf,
    /// Minimum votes the plurality label needs.
    #[arg(long, default_value_t = 2)]
    pub min_agreement: usize,
    /// Output path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated class names defining the label space.
    #[arg(long, default_value = "NILM,LSIL,HSIL,Artefact")]
    pub classes: String,
    /// Collapse shorthand cytology labels onto their parent classes.
    #[arg(long)]
    pub merge: bool,
}

#[derive(Args)]
pub struct KappaArgs {
    /// Annotations CSV (sample_id,annotator_id,label).
    #[arg(long)]
    pub annotations: PathBuf,
    /// Number of bootstrap resamples for the confidence interval.
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
    /// Bootstrap seed (falls back to $CPKIT_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated class names defining the label space.
    #[arg(long, default_value = "NILM,LSIL,HSIL,Artefact")]
    pub classes: String,
    /// Collapse shorthand cytology labels onto their parent classes.
    #[arg(long)]
    pub merge: bool,
    /// Output path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

#[derive(Args)]
pub struct AleatoricArgs {
    /// Prediction-sets CSV written by `predict`.
    #[arg(long)]
    pub sets: PathBuf,
    /// Annotations CSV (sample_id,annotator_id,label).
    #[arg(long)]
    pub annotations: PathBuf,
    /// Comma-separated class names defining the label space.
    #[arg(long, default_value = "NILM,LSIL,HSIL,Artefact")]
    pub classes: String,
    /// Collapse shorthand cytology labels onto their parent classes.
    #[arg(long)]
    pub merge: bool,
}

#[derive(Subcommand)]
pub enum OodCommand {
    /// Width profile across a noise-level series listed in a manifest.
    Series(OodSeriesArgs),
    /// Width comparison between an in-distribution and a foreign dataset.
    Compare(OodCompareArgs),
}

#[derive(Args)]
pub struct OodSeriesArgs {
    /// Predictor JSON written by `calibrate`.
    #[arg(long)]
    pub predictor: PathBuf,
    /// Noise-series manifest: JSON array of {sigma, path} entries.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output directory for series_stats.csv and series_summary.json
    /// (stdout JSON when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct OodCompareArgs {
    /// Predictor JSON written by `calibrate`.
    #[arg(long)]
    pub predictor: PathBuf,
    /// In-distribution softmax CSV.
    #[arg(long)]
    pub ind: PathBuf,
    /// Out-of-distribution softmax CSV.
    #[arg(long)]
    pub ood: PathBuf,
    /// Output path (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Comma-separated methods to evaluate.
    #[arg(long, default_value = "lac,aps,raps")]
    pub methods: String,
    /// Comma-separated miscoverage levels.
    #[arg(long, default_value = "0.05,0.1,0.15,0.2")]
    pub alphas: String,
    /// Labeled calibration softmax CSV.
    #[arg(long)]
    pub calib: PathBuf,
    /// Test softmax CSV.
    #[arg(long)]
    pub test: PathBuf,
    /// Annotations CSV for the test samples.
    #[arg(long)]
    pub annotations: PathBuf,
    /// Output directory for report.csv and report.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Value of the report's `model` column (test file stem when omitted).
    #[arg(long)]
    pub model_tag: Option<String>,
    /// Minimum votes the plurality label needs for consensus.
    #[arg(long, default_value_t = 2)]
    pub min_agreement: usize,
    /// Collapse shorthand cytology labels onto their parent classes.
    #[arg(long)]
    pub merge: bool,
    /// Clamp the RAPS rank penalty at zero instead of the literal form.
    #[arg(long)]
    pub raps_positive_part: bool,
    /// Tuning seed (falls back to $CPKIT_SEED, then 0).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct SynthArgs {
    /// Generator spec JSON.
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory for softmax.csv, annotations.csv, manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated noise levels; also writes softmax_sigma_<s>.csv per
    /// level plus noise_manifest.json.
    #[arg(long)]
    pub sigmas: Option<String>,
}

/// Parses arguments, dispatches, and maps the outcome to an exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            commands::exit_code(&err)
        }
    }
}
