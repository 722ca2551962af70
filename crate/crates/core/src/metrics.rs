//! Prediction-set evaluation: coverage against consensus labels and
//! agreement against full expert annotation sets.
//!
//! Coverage metrics treat the consensus label as ground truth: `cc` is the
//! fraction of sets containing it, `ssc` the minimum coverage over groups
//! of equal set size (including size 0), and `mean_width` the average
//! cardinality. Agreement metrics compare each set `C` with the unique
//! expert label set `Y` via precision/recall/F1/Jaccard and exact match.
//! [`sweep`] runs every (method, α) cell over a calibration/test pair and
//! assembles the combined table.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::conformal::{calibrate, predict_sets, MethodSpec};
use crate::consensus::{majority_vote, VoteOutcome};
use crate::error::{Error, Result};
use crate::model::{AnnotationSet, Dataset, LabelSpace, PredictionSet};

/// The default miscoverage grid used by evaluation sweeps.
pub const DEFAULT_ALPHAS: [f64; 4] = [0.05, 0.1, 0.15, 0.2];

/// Coverage of one set-size group.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SizeGroup {
    pub coverage: f64,
    pub count: usize,
}

/// Consensus-label coverage statistics for a batch of prediction sets.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CoverageReport {
    /// Fraction of sets containing the consensus label.
    pub cc: f64,
    /// Minimum coverage over the observed set-size groups.
    pub ssc: f64,
    pub mean_width: f64,
    /// Observed set size → (coverage within the group, group count).
    pub per_size_coverage: BTreeMap<usize, SizeGroup>,
}

/// Expert-agreement statistics for a batch of prediction sets.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AgreementReport {
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub mean_jaccard: f64,
    pub exact_match_accuracy: f64,
    /// Number of samples all means are taken over.
    pub n: usize,
    /// Samples whose F1 was undefined (precision + recall = 0) and zeroed.
    pub n_f1_undefined: usize,
}

/// Computes CC, SSC, and mean width of `sets` against consensus labels.
///
/// # Errors
/// Empty `sets`, or a set whose sample has no consensus entry.
pub fn coverage_metrics(
    sets: &[PredictionSet],
    consensus: &BTreeMap<String, usize>,
) -> Result<CoverageReport> {
    if sets.is_empty() {
        return Err(Error::EmptyCollection {
            what: "prediction set list",
        });
    }
    let mut covered_total = 0usize;
    let mut width_total = 0usize;
    let mut groups: BTreeMap<usize, (usize, usize)> = BTreeMap::new(); // size → (covered, count)
    for set in sets {
        let label = *consensus
            .get(&set.sample_id)
            .ok_or_else(|| Error::MissingConsensus {
                sample_id: set.sample_id.clone(),
            })?;
        let covered = set.contains(label);
        covered_total += covered as usize;
        width_total += set.width();
        let g = groups.entry(set.width()).or_insert((0, 0));
        g.0 += covered as usize;
        g.1 += 1;
    }
    let n = sets.len() as f64;
    let per_size_coverage: BTreeMap<usize, SizeGroup> = groups
        .into_iter()
        .map(|(size, (covered, count))| {
            (
                size,
                SizeGroup {
                    coverage: covered as f64 / count as f64,
                    count,
                },
            )
        })
        .collect();
    let ssc = per_size_coverage
        .values()
        .map(|g| g.coverage)
        .fold(f64::INFINITY, f64::min);
    Ok(CoverageReport {
        cc: covered_total as f64 / n,
        ssc,
        mean_width: width_total as f64 / n,
        per_size_coverage,
    })
}

/// Per-sample agreement terms between a prediction set and the unique
/// expert label set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleAgreement {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub jaccard: f64,
    pub exact: bool,
}

/// Agreement terms for one sample: `C` = set members, `Y` = unique expert
/// labels. Empty `C` zeroes all four ratio metrics by convention.
pub fn sample_agreement(set: &PredictionSet, ann: &AnnotationSet) -> Result<SampleAgreement> {
    let y = ann.unique_labels();
    if y.is_empty() {
        return Err(Error::EmptyAnnotations {
            sample_id: ann.sample_id.clone(),
        });
    }
    let c_len = set.width();
    let inter = set.members().iter().filter(|m| y.contains(m)).count();
    let union = c_len + y.len() - inter;
    let precision = if c_len == 0 {
        0.0
    } else {
        inter as f64 / c_len as f64
    };
    let recall = inter as f64 / y.len() as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    let jaccard = inter as f64 / union as f64;
    let exact = c_len == y.len() && inter == c_len;
    Ok(SampleAgreement {
        precision,
        recall,
        f1,
        jaccard,
        exact,
    })
}

/// Means of the per-sample agreement terms over all of `sets`.
///
/// # Errors
/// Empty `sets`, a sample with no annotation entry, or an annotation set
/// with no labels.
pub fn agreement_metrics(
    sets: &[PredictionSet],
    annotations: &BTreeMap<String, AnnotationSet>,
) -> Result<AgreementReport> {
    if sets.is_empty() {
        return Err(Error::EmptyCollection {
            what: "prediction set list",
        });
    }
    let mut sums = (0.0, 0.0, 0.0, 0.0); // precision, recall, f1, jaccard
    let mut exact = 0usize;
    let mut n_f1_undefined = 0usize;
    for set in sets {
        let ann = annotations
            .get(&set.sample_id)
            .ok_or_else(|| Error::MissingAnnotation {
                sample_id: set.sample_id.clone(),
            })?;
        let s = sample_agreement(set, ann)?;
        sums.0 += s.precision;
        sums.1 += s.recall;
        sums.2 += s.f1;
        sums.3 += s.jaccard;
        exact += s.exact as usize;
        if s.precision + s.recall == 0.0 {
            n_f1_undefined += 1;
        }
    }
    let n = sets.len();
    let nf = n as f64;
    Ok(AgreementReport {
        mean_precision: sums.0 / nf,
        mean_recall: sums.1 / nf,
        mean_f1: sums.2 / nf,
        mean_jaccard: sums.3 / nf,
        exact_match_accuracy: exact as f64 / nf,
        n,
        n_f1_undefined,
    })
}

/// One (method, model, α) row of an evaluation sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EvaluationRow {
    pub method: String,
    pub model: String,
    pub alpha: f64,
    pub cc: f64,
    pub ssc: f64,
    pub mean_width: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f1: f64,
    pub mean_jaccard: f64,
    pub exact_match: f64,
}

/// The full sweep table, one row per (method, α) in grid order.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EvaluationReport {
    pub rows: Vec<EvaluationRow>,
}

/// Configuration of an evaluation sweep.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub methods: Vec<MethodSpec>,
    pub alphas: Vec<f64>,
    /// Tag naming the upstream model in the `model` column.
    pub model_tag: String,
    pub tuning_seed: u64,
    /// Majority-vote threshold used to derive consensus labels.
    pub min_agreement: usize,
}

/// Calibrates and evaluates every (method, α) cell.
///
/// Consensus labels are derived from `annotations` by majority vote;
/// samples without consensus are dropped from coverage metrics (agreement
/// metrics use every test sample). Cells are evaluated in parallel and
/// merged in grid order (methods outer, alphas inner).
///
/// # Errors
/// Propagated from calibration, prediction, and the metric computations;
/// additionally when no test sample reaches consensus.
pub fn sweep(
    calib: &Dataset,
    test: &Dataset,
    annotations: &BTreeMap<String, AnnotationSet>,
    ls: &LabelSpace,
    cfg: &SweepConfig,
) -> Result<EvaluationReport> {
    if cfg.methods.is_empty() || cfg.alphas.is_empty() {
        return Err(Error::EmptyCollection {
            what: "sweep method/alpha grid",
        });
    }
    let consensus: BTreeMap<String, usize> = annotations
        .iter()
        .filter_map(|(id, a)| match majority_vote(a, cfg.min_agreement) {
            VoteOutcome::Consensus(c) => Some((id.clone(), c)),
            VoteOutcome::Excluded => None,
        })
        .collect();

    let cells: Vec<(MethodSpec, f64)> = cfg
        .methods
        .iter()
        .flat_map(|&m| cfg.alphas.iter().map(move |&a| (m, a)))
        .collect();

    let rows: Vec<EvaluationRow> = cells
        .par_iter()
        .map(|&(method, alpha)| {
            let predictor = calibrate(calib, ls, method, alpha, cfg.tuning_seed)?;
            let sets = predict_sets(&predictor, test)?;
            let consensus_sets: Vec<PredictionSet> = sets
                .iter()
                .filter(|s| consensus.contains_key(&s.sample_id))
                .cloned()
                .collect();
            if consensus_sets.is_empty() {
                return Err(Error::EmptyCollection {
                    what: "test samples with a consensus label",
                });
            }
            let cov = coverage_metrics(&consensus_sets, &consensus)?;
            let agr = agreement_metrics(&sets, annotations)?;
            Ok(EvaluationRow {
                method: method.kind().as_str().to_string(),
                model: cfg.model_tag.clone(),
                alpha,
                cc: cov.cc,
                ssc: cov.ssc,
                mean_width: cov.mean_width,
                mean_precision: agr.mean_precision,
                mean_recall: agr.mean_recall,
                mean_f1: agr.mean_f1,
                mean_jaccard: agr.mean_jaccard,
                exact_match: agr.exact_match_accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(EvaluationReport { rows })
}
