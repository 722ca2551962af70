//! Uncertainty harnesses built on prediction-set width.
//!
//! Aleatoric: [`aleatoric_capture`] measures how often a set's width equals
//! the number of unique expert labels — the set is exactly as wide as the
//! experts are divided. Epistemic: [`ood_width_profile`] tracks mean width
//! across a ladder of noise levels `σ` and summarizes the trend with a
//! Spearman rank correlation, and [`ood_dataset_compare`] contrasts width
//! statistics between an in-distribution and a foreign dataset under one
//! calibrated predictor.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::conformal::{predict_sets, CalibratedPredictor};
use crate::error::{Error, Result};
use crate::model::{AnnotationSet, Dataset, PredictionSet};

/// An ordered ladder of datasets at strictly increasing noise levels.
///
/// The `σ = 0` entry is the in-distribution baseline; all levels share one
/// sample-id universe and one class count.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSeries {
    levels: Vec<(f64, Dataset)>,
}

impl NoiseSeries {
    /// Validates and wraps `(σ, dataset)` pairs.
    ///
    /// # Errors
    /// Empty list, σ ladder not strictly increasing from 0, an empty
    /// dataset, or levels disagreeing on sample ids or class count.
    pub fn new(levels: Vec<(f64, Dataset)>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidSeries("no levels".into()));
        }
        if levels[0].0 != 0.0 {
            return Err(Error::InvalidSeries(format!(
                "first level must be sigma 0, got {}",
                levels[0].0
            )));
        }
        if levels.iter().any(|(s, _)| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidSeries(
                "sigmas must be finite and non-negative".into(),
            ));
        }
        if levels.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidSeries(
                "sigmas must be strictly increasing".into(),
            ));
        }
        let ids = |d: &Dataset| -> BTreeSet<String> {
            d.records.iter().map(|r| r.sample_id.clone()).collect()
        };
        let first = &levels[0].1;
        if first.records.is_empty() {
            return Err(Error::InvalidSeries(format!(
                "level sigma=0 dataset '{}' is empty",
                first.name
            )));
        }
        let base_ids = ids(first);
        let k = first.records[0].probs.len();
        for (sigma, d) in &levels {
            if d.records.is_empty() {
                return Err(Error::InvalidSeries(format!(
                    "level sigma={sigma} dataset '{}' is empty",
                    d.name
                )));
            }
            if ids(d) != base_ids {
                return Err(Error::InvalidSeries(format!(
                    "level sigma={sigma} has a different sample-id universe"
                )));
            }
            if d.records.iter().any(|r| r.probs.len() != k) {
                return Err(Error::InvalidSeries(format!(
                    "level sigma={sigma} has records with a class count other than {k}"
                )));
            }
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[(f64, Dataset)] {
        &self.levels
    }
}

/// Width statistics of one noise level.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct LevelStats {
    pub sigma: f64,
    pub mean_width: f64,
    /// `width_histogram[w]` counts sets of width `w`, for `w in 0..=K`.
    pub width_histogram: Vec<usize>,
    /// Fraction of sets containing every class.
    pub full_set_fraction: f64,
}

/// Width trend across a noise series.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WidthProfile {
    pub per_level: Vec<LevelStats>,
    /// Spearman rank correlation between σ and per-level mean width.
    pub trend_correlation: f64,
    /// True when the correlation is undefined (constant ranks) and
    /// `trend_correlation` was reported as 0.
    pub degenerate_trend: bool,
}

/// Width comparison between an in-distribution and a foreign dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct OodComparison {
    pub ind_mean_width: f64,
    pub ood_mean_width: f64,
    pub ind_width_histogram: Vec<usize>,
    pub ood_width_histogram: Vec<usize>,
    /// `ood_mean_width - ind_mean_width`.
    pub mean_width_difference: f64,
}

/// Fraction of samples whose set width equals the number of unique expert
/// labels.
///
/// # Errors
/// Empty `sets` or a sample without an annotation entry.
pub fn aleatoric_capture(
    sets: &[PredictionSet],
    annotations: &std::collections::BTreeMap<String, AnnotationSet>,
) -> Result<f64> {
    if sets.is_empty() {
        return Err(Error::EmptyCollection {
            what: "prediction set list",
        });
    }
    let mut matches = 0usize;
    for set in sets {
        let ann = annotations
            .get(&set.sample_id)
            .ok_or_else(|| Error::MissingAnnotation {
                sample_id: set.sample_id.clone(),
            })?;
        matches += (ann.unique_labels().len() == set.width()) as usize;
    }
    Ok(matches as f64 / sets.len() as f64)
}

fn width_stats(sigma: f64, sets: &[PredictionSet], k: usize) -> LevelStats {
    let mut hist = vec![0usize; k + 1];
    let mut total = 0usize;
    for s in sets {
        hist[s.width()] += 1;
        total += s.width();
    }
    let n = sets.len() as f64;
    LevelStats {
        sigma,
        mean_width: total as f64 / n,
        width_histogram: hist.clone(),
        full_set_fraction: hist[k] as f64 / n,
    }
}

/// Average ranks (ties get the mean of their positions, 1-indexed).
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0; // mean of 1-indexed positions i+1..=j+1
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; `(0.0, true)` when either side has constant
/// ranks (undefined correlation).
pub fn spearman(xs: &[f64], ys: &[f64]) -> (f64, bool) {
    debug_assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in rx.iter().zip(&ry) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return (0.0, true);
    }
    (sxy / (sxx * syy).sqrt(), false)
}

/// Per-level width statistics plus the (σ, mean width) rank-correlation
/// trend. Levels are evaluated in parallel and reported in ladder order.
///
/// # Errors
/// Propagated from prediction (class-count mismatch with the predictor).
pub fn ood_width_profile(p: &CalibratedPredictor, series: &NoiseSeries) -> Result<WidthProfile> {
    let k = p.label_space.k();
    let per_level: Vec<LevelStats> = series
        .levels()
        .par_iter()
        .map(|(sigma, dataset)| {
            let sets = predict_sets(p, dataset)?;
            Ok(width_stats(*sigma, &sets, k))
        })
        .collect::<Result<Vec<_>>>()?;
    let sigmas: Vec<f64> = per_level.iter().map(|l| l.sigma).collect();
    let widths: Vec<f64> = per_level.iter().map(|l| l.mean_width).collect();
    let (trend_correlation, degenerate_trend) = spearman(&sigmas, &widths);
    Ok(WidthProfile {
        per_level,
        trend_correlation,
        degenerate_trend,
    })
}

/// Width statistics of `ind` and `ood` under one predictor, plus their
/// mean-width difference (OOD − InD).
///
/// # Errors
/// Empty datasets or class-count mismatch with the predictor.
pub fn ood_dataset_compare(
    p: &CalibratedPredictor,
    ind: &Dataset,
    ood: &Dataset,
) -> Result<OodComparison> {
    for d in [ind, ood] {
        if d.records.is_empty() {
            return Err(Error::EmptyCollection {
                what: "comparison dataset records",
            });
        }
    }
    let k = p.label_space.k();
    let ind_stats = width_stats(0.0, &predict_sets(p, ind)?, k);
    let ood_stats = width_stats(0.0, &predict_sets(p, ood)?, k);
    Ok(OodComparison {
        ind_mean_width: ind_stats.mean_width,
        ood_mean_width: ood_stats.mean_width,
        ind_width_histogram: ind_stats.width_histogram,
        ood_width_histogram: ood_stats.width_histogram,
        mean_width_difference: ood_stats.mean_width - ind_stats.mean_width,
    })
}
