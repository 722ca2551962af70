//! Command implementations and error → exit-code classification.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Result;

use cpkit_core::conformal::{calibrate, predict_sets, MethodKind, MethodSpec};
use cpkit_core::consensus::{fleiss_kappa, majority_vote, vote_counts, VoteOutcome};
use cpkit_core::io;
use cpkit_core::metrics::{agreement_metrics, coverage_metrics, sweep, SweepConfig};
use cpkit_core::model::{LabelSpace, PredictionSet};
use cpkit_core::synth::{generate, make_noise_series, GeneratorSpec};
use cpkit_core::uncertainty::{aleatoric_capture, ood_dataset_compare, ood_width_profile};

use crate::cli::{
    AleatoricArgs, CalibrateArgs, Command, ConsensusArgs, EvaluateArgs, KappaArgs, OodCommand,
    OodCompareArgs, OodSeriesArgs, OutputFormat, PredictArgs, SweepArgs, SynthArgs,
};

/// Bad flag values or invalid flag combinations (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

/// A state the program promises can never occur (exit code 3).
#[derive(Debug)]
pub struct InternalError(pub String);

impl fmt::Display for InternalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "internal invariant failure: {}", self.0)
    }
}

impl std::error::Error for InternalError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Classifies an error chain: usage → 1, internal → 3, data → 2.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    if err.downcast_ref::<InternalError>().is_some() {
        return 3;
    }
    if let Some(core) = err.downcast_ref::<cpkit_core::Error>() {
        // A bad alpha can only come from a flag.
        if matches!(core, cpkit_core::Error::InvalidAlpha(_)) {
            return 1;
        }
    }
    2
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Calibrate(args) => run_calibrate(args),
        Command::Predict(args) => run_predict(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Consensus(args) => run_consensus(args),
        Command::Kappa(args) => run_kappa(args),
        Command::Aleatoric(args) => run_aleatoric(args),
        Command::Ood(OodCommand::Series(args)) => run_ood_series(args),
        Command::Ood(OodCommand::Compare(args)) => run_ood_compare(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Synth(args) => run_synth(args),
    }
}

// ---------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------

/// `--seed` flag, then `$CPKIT_SEED`, then 0.
fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var("CPKIT_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("CPKIT_SEED must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

fn parse_classes(flag: &str) -> Result<LabelSpace> {
    let names: Vec<&str> = flag.split(',').map(str::trim).collect();
    LabelSpace::new(names).map_err(|e| usage(format!("--classes: {e}")))
}

fn parse_methods(flag: &str, raps_positive_part: bool) -> Result<Vec<MethodSpec>> {
    let mut methods = Vec::new();
    for part in flag.split(',') {
        let kind: MethodKind = part
            .trim()
            .parse()
            .map_err(|e: String| usage(format!("--methods: {e}")))?;
        methods.push(MethodSpec::from_kind(kind, raps_positive_part));
    }
    if methods.is_empty() {
        return Err(usage("--methods must name at least one method"));
    }
    Ok(methods)
}

fn parse_alphas(flag: &str) -> Result<Vec<f64>> {
    let mut alphas = Vec::new();
    for part in flag.split(',') {
        let a: f64 = part
            .trim()
            .parse()
            .map_err(|_| usage(format!("--alphas: `{part}` is not a number")))?;
        if !(a > 0.0 && a < 1.0) {
            return Err(usage(format!(
                "--alphas: {a} must lie strictly between 0 and 1"
            )));
        }
        alphas.push(a);
    }
    if alphas.is_empty() {
        return Err(usage("--alphas must list at least one level"));
    }
    Ok(alphas)
}

fn parse_sigmas(flag: &str) -> Result<Vec<f64>> {
    flag.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("--sigmas: `{part}` is not a number")))
        })
        .collect()
}

/// Errors when two files disagree on class names.
fn check_same_classes(expected: &LabelSpace, got: &LabelSpace, what: &str) -> Result<()> {
    if expected != got {
        return Err(cpkit_core::Error::InvalidLabelSpace(format!(
            "{what}: classes {:?} do not match the predictor's {:?}",
            got.classes(),
            expected.classes()
        ))
        .into());
    }
    Ok(())
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| cpkit_core::Error::file_io(path.display().to_string(), e).into())
}

/// Writes `contents` and logs the path on stderr (stdout stays parseable).
fn emit_file(path: &Path, contents: &[u8]) -> Result<()> {
    io::write_bytes(path, contents)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn emit_or_print(out: Option<&PathBuf>, contents: &str) -> Result<()> {
    match out {
        Some(path) => emit_file(path, contents.as_bytes()),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

// ---------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------

fn run_calibrate(args: CalibrateArgs) -> Result<()> {
    let method_kind: MethodKind = args
        .method
        .parse()
        .map_err(|e: String| usage(format!("--method: {e}")))?;
    let method = MethodSpec::from_kind(method_kind, args.raps_positive_part);
    let seed = resolve_seed(args.seed)?;
    let (calib, ls) = io::parse_softmax_csv(&args.calib)?;
    let predictor = calibrate(&calib, &ls, method, args.alpha, seed)?;
    io::write_predictor(&args.out, &predictor)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn run_predict(args: PredictArgs) -> Result<()> {
    let predictor = io::read_predictor(&args.predictor)?;
    let (test, ls) = io::parse_softmax_csv(&args.test)?;
    check_same_classes(&predictor.label_space, &ls, "--test")?;
    let sets = predict_sets(&predictor, &test)?;
    io::write_sets_csv(&args.out, &sets, &ls)?;
    eprintln!("wrote {}", args.out.display());
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let (consensus, ls) = io::parse_consensus_csv(&args.consensus)?;
    let sets = io::parse_sets_csv(&args.sets, &ls)?;
    let annotations = io::parse_annotations_csv(&args.annotations, &ls, args.merge)?;
    let consensus_sets: Vec<PredictionSet> = sets
        .iter()
        .filter(|s| consensus.contains_key(&s.sample_id))
        .cloned()
        .collect();
    if consensus_sets.is_empty() {
        return Err(cpkit_core::Error::EmptyCollection {
            what: "prediction sets with a consensus label",
        }
        .into());
    }
    let coverage = coverage_metrics(&consensus_sets, &consensus)?;
    let agreement = agreement_metrics(&sets, &annotations)?;
    let rendered = match args.format {
        OutputFormat::Csv => io::evaluation_summary_csv(&coverage, &agreement),
        OutputFormat::Json => {
            let doc = serde_json::json!({ "coverage": coverage, "agreement": agreement });
            serde_json::to_string_pretty(&doc)
                .map_err(|e| InternalError(format!("serializing evaluation report: {e}")))?
                + "\n"
        }
    };
    emit_or_print(args.out.as_ref(), &rendered)
}

fn run_consensus(args: ConsensusArgs) -> Result<()> {
    let ls = parse_classes(&args.classes)?;
    let annotations = io::parse_annotations_csv(&args.annotations, &ls, args.merge)?;
    let rows: Vec<(String, VoteOutcome, Vec<usize>)> = annotations
        .values()
        .map(|ann| {
            (
                ann.sample_id.clone(),
                majority_vote(ann, args.min_agreement),
                vote_counts(ann, ls.k()),
            )
        })
        .collect();
    emit_or_print(args.out.as_ref(), &io::consensus_csv(&rows, &ls))
}

fn run_kappa(args: KappaArgs) -> Result<()> {
    let ls = parse_classes(&args.classes)?;
    let annotations = io::parse_annotations_csv(&args.annotations, &ls, args.merge)?;
    let items: Vec<_> = annotations.values().cloned().collect();
    let seed = resolve_seed(args.seed)?;
    let result = fleiss_kappa(&items, &ls, args.bootstrap, seed)?;
    let rendered = match args.format {
        OutputFormat::Csv => io::kappa_csv(&result),
        OutputFormat::Json => io::kappa_json(&result)?,
    };
    emit_or_print(args.out.as_ref(), &rendered)
}

fn run_aleatoric(args: AleatoricArgs) -> Result<()> {
    let ls = parse_classes(&args.classes)?;
    let sets = io::parse_sets_csv(&args.sets, &ls)?;
    let annotations = io::parse_annotations_csv(&args.annotations, &ls, args.merge)?;
    let capture = aleatoric_capture(&sets, &annotations)?;
    println!("{capture}");
    Ok(())
}

fn run_ood_series(args: OodSeriesArgs) -> Result<()> {
    let predictor = io::read_predictor(&args.predictor)?;
    let (series, ls) = io::load_noise_series(&args.manifest)?;
    check_same_classes(&predictor.label_space, &ls, "noise series")?;
    let profile = ood_width_profile(&predictor, &series)?;
    match &args.out {
        Some(dir) => {
            ensure_dir(dir)?;
            emit_file(&dir.join("series_stats.csv"), io::width_profile_csv(&profile).as_bytes())?;
            emit_file(&dir.join("series_summary.json"), io::width_profile_json(&profile)?.as_bytes())
        }
        None => {
            print!("{}", io::width_profile_json(&profile)?);
            Ok(())
        }
    }
}

fn run_ood_compare(args: OodCompareArgs) -> Result<()> {
    let predictor = io::read_predictor(&args.predictor)?;
    let (ind, ind_ls) = io::parse_softmax_csv(&args.ind)?;
    check_same_classes(&predictor.label_space, &ind_ls, "--ind")?;
    let (ood, ood_ls) = io::parse_softmax_csv(&args.ood)?;
    check_same_classes(&predictor.label_space, &ood_ls, "--ood")?;
    let cmp = ood_dataset_compare(&predictor, &ind, &ood)?;
    emit_or_print(args.out.as_ref(), &io::ood_comparison_json(&cmp)?)
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let methods = parse_methods(&args.methods, args.raps_positive_part)?;
    let alphas = parse_alphas(&args.alphas)?;
    let seed = resolve_seed(args.seed)?;
    let (calib, calib_ls) = io::parse_softmax_csv(&args.calib)?;
    let (test, test_ls) = io::parse_softmax_csv(&args.test)?;
    check_same_classes(&calib_ls, &test_ls, "--test")?;
    let annotations = io::parse_annotations_csv(&args.annotations, &calib_ls, args.merge)?;
    let cfg = SweepConfig {
        methods,
        alphas,
        model_tag: args
            .model_tag
            .unwrap_or_else(|| io::dataset_name_from_path(&args.test)),
        tuning_seed: seed,
        min_agreement: args.min_agreement,
    };
    let report = sweep(&calib, &test, &annotations, &calib_ls, &cfg)?;
    ensure_dir(&args.out)?;
    emit_file(&args.out.join("report.csv"), io::report_to_csv(&report).as_bytes())?;
    emit_file(&args.out.join("report.json"), io::report_to_json(&report)?.as_bytes())
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let spec_json = io::read_to_string(&args.spec)?;
    let spec: GeneratorSpec = serde_json::from_str(&spec_json).map_err(|e| {
        cpkit_core::Error::parse(args.spec.display().to_string(), None, e.to_string())
    })?;
    spec.validate()?;
    let sigmas = args.sigmas.as_deref().map(parse_sigmas).transpose()?;
    ensure_dir(&args.out)?;
    let ls = spec.label_space();

    let dataset = generate(&spec)?;
    io::write_softmax_csv(&args.out.join("softmax.csv"), &dataset, &ls)?;
    eprintln!("wrote {}", args.out.join("softmax.csv").display());
    let annotations = dataset
        .annotations
        .as_ref()
        .ok_or_else(|| InternalError("generated dataset lacks annotations".into()))?;
    io::write_annotations_csv(&args.out.join("annotations.csv"), annotations, &ls)?;
    eprintln!("wrote {}", args.out.join("annotations.csv").display());

    let mut manifest = spec.manifest();
    manifest.sigmas = sigmas.clone();
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| InternalError(format!("serializing manifest: {e}")))?
        + "\n";
    emit_file(&args.out.join("manifest.json"), manifest_json.as_bytes())?;

    if let Some(sigmas) = sigmas {
        let series = make_noise_series(&spec, &sigmas)?;
        let mut entries = Vec::new();
        for (sigma, level) in series.levels() {
            let file_name = format!("softmax_sigma_{sigma}.csv");
            io::write_softmax_csv(&args.out.join(&file_name), level, &ls)?;
            eprintln!("wrote {}", args.out.join(&file_name).display());
            entries.push(io::NoiseManifestEntry {
                sigma: *sigma,
                path: file_name,
            });
        }
        io::write_noise_manifest(&args.out.join("noise_manifest.json"), &entries)?;
        eprintln!("wrote {}", args.out.join("noise_manifest.json").display());
    }
    Ok(())
}
