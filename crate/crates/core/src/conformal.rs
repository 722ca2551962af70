//! Split-conformal calibration and prediction-set construction.
//!
//! Three methods over classifier softmax outputs:
//!
//! * **LAC** — score `1 − p[y]`; set `{y : p[y] ≥ 1 − q̂}` (may be empty);
//! * **APS** — score = cumulative sum of descending-sorted probabilities up
//!   to the true class; set = smallest prefix whose cumulative sum ≥ `q̂`;
//! * **RAPS** — APS plus a rank penalty `λ·(k − k_reg)`; λ and `k_reg` are
//!   tuned on a held-out 20% slice of the calibration set.
//!
//! All methods share the finite-sample quantile: `q̂` is the
//! `⌈(1−α)(n+1)⌉`-th ascending order statistic of the calibration scores,
//! saturating to the `+∞` sentinel (full label set) when the rank exceeds
//! `n`. The rank is computed with exact integer arithmetic over the binary
//! value of `α`, so no intermediate float rounding can shift it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Dataset, LabelSpace, PredictionSet, SoftmaxRecord};

/// The λ grid searched during RAPS tuning.
pub const RAPS_LAMBDA_GRID: [f64; 5] = [0.001, 0.01, 0.1, 0.2, 0.5];

/// Minimum calibration-set size for RAPS (so the 20% tuning slice has at
/// least two records).
pub const RAPS_MIN_CALIBRATION: usize = 10;

/// Which conformal method to calibrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MethodKind {
    Lac,
    Aps,
    Raps,
}

impl MethodKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::Lac => "lac",
            MethodKind::Aps => "aps",
            MethodKind::Raps => "raps",
        }
    }
}

impl std::str::FromStr for MethodKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "lac" => Ok(MethodKind::Lac),
            "aps" => Ok(MethodKind::Aps),
            "raps" => Ok(MethodKind::Raps),
            other => Err(format!("unknown method `{other}` (expected lac, aps, or raps)")),
        }
    }
}

/// Method selection passed to [`calibrate`]. RAPS carries the choice
/// between the literal rank penalty `λ(k − k_reg)` and the clamped variant
/// `λ·max(0, k − k_reg)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSpec {
    Lac,
    Aps,
    Raps { positive_part: bool },
}

impl MethodSpec {
    pub fn kind(self) -> MethodKind {
        match self {
            MethodSpec::Lac => MethodKind::Lac,
            MethodSpec::Aps => MethodKind::Aps,
            MethodSpec::Raps { .. } => MethodKind::Raps,
        }
    }

    pub fn from_kind(kind: MethodKind, raps_positive_part: bool) -> Self {
        match kind {
            MethodKind::Lac => MethodSpec::Lac,
            MethodKind::Aps => MethodSpec::Aps,
            MethodKind::Raps => MethodSpec::Raps {
                positive_part: raps_positive_part,
            },
        }
    }
}

/// RAPS hyperparameters fixed by calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct RapsParams {
    pub lambda: f64,
    /// 1-indexed rank at which the penalty starts; in `[1, K]`.
    pub k_reg: usize,
    /// Apply the positive-part clamp `(k − k_reg)⁺` instead of the literal
    /// difference.
    pub positive_part: bool,
}

/// A calibrated method: LAC and APS are parameter-free; RAPS carries its
/// tuned hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ConformalMethod {
    Lac,
    Aps,
    Raps(RapsParams),
}

impl ConformalMethod {
    pub fn kind(&self) -> MethodKind {
        match self {
            ConformalMethod::Lac => MethodKind::Lac,
            ConformalMethod::Aps => MethodKind::Aps,
            ConformalMethod::Raps(_) => MethodKind::Raps,
        }
    }
}

/// Immutable result of calibration; everything needed to build prediction
/// sets for new records.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedPredictor {
    pub method: ConformalMethod,
    pub alpha: f64,
    /// Conformal threshold; `f64::INFINITY` when the corrected rank exceeds
    /// the calibration size (all sets become the full label set).
    pub q_hat: f64,
    /// Number of scores the quantile was taken over (for RAPS, the 80%
    /// scoring slice).
    pub n_cal: usize,
    pub label_space: LabelSpace,
}

/// Class indices sorted by descending probability (ties broken by ascending
/// class index) together with the cumulative sums of the sorted values.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedProbs {
    order: Vec<usize>,
    cum: Vec<f64>,
}

impl SortedProbs {
    pub fn new(probs: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        let mut cum = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for &c in &order {
            acc += probs[c];
            cum.push(acc);
        }
        SortedProbs { order, cum }
    }

    pub fn k(&self) -> usize {
        self.order.len()
    }

    /// Class indices, highest probability first.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// `cum[i]` = sum of the `i+1` largest probabilities.
    pub fn cum(&self) -> &[f64] {
        &self.cum
    }

    /// 1-indexed position of `class` in the descending order.
    pub fn rank_of(&self, class: usize) -> usize {
        self.order
            .iter()
            .position(|&c| c == class)
            .expect("class index within label space")
            + 1
    }
}

fn require_true_label(r: &SoftmaxRecord) -> Result<usize> {
    r.true_label.ok_or_else(|| Error::MissingTrueLabel {
        sample_id: r.sample_id.clone(),
    })
}

/// LAC nonconformity score: `1 − probs[true_label]`.
pub fn score_lac(r: &SoftmaxRecord) -> Result<f64> {
    let t = require_true_label(r)?;
    Ok(1.0 - r.probs[t])
}

/// APS nonconformity score: cumulative descending-sorted probability up to
/// and including the true class's position.
pub fn score_aps(r: &SoftmaxRecord) -> Result<f64> {
    let t = require_true_label(r)?;
    let sp = SortedProbs::new(&r.probs);
    Ok(sp.cum[sp.rank_of(t) - 1])
}

/// Rank penalty term: `k − k_reg`, optionally clamped at zero.
fn rank_penalty(k: usize, k_reg: usize, positive_part: bool) -> f64 {
    let raw = k as f64 - k_reg as f64;
    if positive_part {
        raw.max(0.0)
    } else {
        raw
    }
}

/// RAPS nonconformity score: APS score plus `λ·(rank − k_reg)` where rank
/// is the true class's 1-indexed position in [`SortedProbs`]. The penalty
/// is the literal difference (negative below `k_reg`) unless
/// `positive_part` is set.
pub fn score_raps(r: &SoftmaxRecord, lambda: f64, k_reg: usize, positive_part: bool) -> Result<f64> {
    let t = require_true_label(r)?;
    let sp = SortedProbs::new(&r.probs);
    let rank = sp.rank_of(t);
    Ok(sp.cum[rank - 1] + lambda * rank_penalty(rank, k_reg, positive_part))
}

/// `⌊α·k⌋` computed exactly from the binary representation of `α ∈ (0,1)`.
///
/// `α = m·2^−s` for integers `m < 2^53`, `s ≤ 1074`, so `⌊α·k⌋` is an exact
/// 128-bit shift — no float product that could round across an integer.
fn floor_alpha_times(alpha: f64, k: u64) -> u64 {
    debug_assert!(alpha > 0.0 && alpha < 1.0);
    let bits = alpha.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (m, e) = if exp == 0 {
        (frac, -1074i64) // subnormal
    } else {
        (frac | (1u64 << 52), exp - 1075)
    };
    let shift = -e; // alpha < 1 forces e < 0
    debug_assert!(shift > 0);
    let prod = (m as u128) * (k as u128);
    if shift >= 128 {
        0
    } else {
        (prod >> shift) as u64
    }
}

/// The 1-indexed rank `⌈(1−α)(n+1)⌉`, exact over the received `α`.
///
/// Uses the identity `⌈(n+1) − α(n+1)⌉ = (n+1) − ⌊α(n+1)⌋` so the whole
/// computation stays in integers. May return `n + 1`, in which case the
/// quantile saturates to the `+∞` sentinel.
pub(crate) fn quantile_rank(alpha: f64, n: usize) -> usize {
    let np1 = n as u64 + 1;
    (np1 - floor_alpha_times(alpha, np1)) as usize
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && 0.0 < alpha && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidAlpha(alpha))
    }
}

/// The `⌈(1−α)(n+1)⌉`-th ascending order statistic of `scores`, or the
/// `+∞` sentinel when that rank exceeds `n`.
///
/// # Errors
/// Empty `scores` or `alpha` outside `(0, 1)`.
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    check_alpha(alpha)?;
    let n = scores.len();
    let rank = quantile_rank(alpha, n);
    if rank > n {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    Ok(sorted[rank - 1])
}

/// Collects `(record index, true label)` for every record, failing on the
/// first record without a label or with a wrong-length probability vector.
fn check_labeled(cal: &Dataset, k: usize) -> Result<()> {
    for r in &cal.records {
        if r.probs.len() != k {
            return Err(Error::LabelSpaceMismatch {
                expected: k,
                got: r.probs.len(),
            });
        }
        require_true_label(r)?;
    }
    Ok(())
}

/// Calibrates a predictor of the requested method at miscoverage `alpha`.
///
/// LAC/APS take the conformal quantile over all calibration scores. RAPS
/// first splits the calibration set into a 20% tuning slice and an 80%
/// scoring slice (deterministic shuffle from `tuning_seed`), fixes `k_reg`
/// as the `⌈(1−α)(n_tune+1)⌉`-th order statistic of the true class's
/// 1-indexed rank on the tuning slice (clamped to `[1, K]`), then picks the
/// λ from [`RAPS_LAMBDA_GRID`] whose scoring-slice quantile yields the
/// smallest mean set width on the tuning slice (ties going to the smaller
/// λ).
///
/// # Errors
/// Unlabeled records, empty calibration set, invalid `alpha`, or a RAPS
/// calibration set smaller than [`RAPS_MIN_CALIBRATION`].
pub fn calibrate(
    cal: &Dataset,
    ls: &LabelSpace,
    spec: MethodSpec,
    alpha: f64,
    tuning_seed: u64,
) -> Result<CalibratedPredictor> {
    check_alpha(alpha)?;
    if cal.records.is_empty() {
        return Err(Error::EmptyCollection {
            what: "calibration set",
        });
    }
    check_labeled(cal, ls.k())?;

    match spec {
        MethodSpec::Lac => {
            let scores: Vec<f64> = cal.records.iter().map(|r| score_lac(r).unwrap()).collect();
            Ok(CalibratedPredictor {
                method: ConformalMethod::Lac,
                alpha,
                q_hat: conformal_quantile(&scores, alpha)?,
                n_cal: scores.len(),
                label_space: ls.clone(),
            })
        }
        MethodSpec::Aps => {
            let scores: Vec<f64> = cal.records.iter().map(|r| score_aps(r).unwrap()).collect();
            Ok(CalibratedPredictor {
                method: ConformalMethod::Aps,
                alpha,
                q_hat: conformal_quantile(&scores, alpha)?,
                n_cal: scores.len(),
                label_space: ls.clone(),
            })
        }
        MethodSpec::Raps { positive_part } => {
            calibrate_raps(cal, ls, alpha, tuning_seed, positive_part)
        }
    }
}

fn calibrate_raps(
    cal: &Dataset,
    ls: &LabelSpace,
    alpha: f64,
    tuning_seed: u64,
    positive_part: bool,
) -> Result<CalibratedPredictor> {
    let n = cal.records.len();
    if n < RAPS_MIN_CALIBRATION {
        return Err(Error::CalibrationTooSmall {
            needed: RAPS_MIN_CALIBRATION,
            got: n,
        });
    }

    // Deterministic 20% tuning / 80% scoring split.
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(tuning_seed);
    idx.shuffle(&mut rng);
    let n_tune = n / 5;
    let (tune_idx, score_idx) = idx.split_at(n_tune);

    // k_reg: conformal-rank order statistic of the true class's 1-indexed
    // rank over the tuning slice, clamped into [1, K].
    let mut true_ranks: Vec<usize> = tune_idx
        .iter()
        .map(|&i| {
            let r = &cal.records[i];
            let sp = SortedProbs::new(&r.probs);
            sp.rank_of(r.true_label.expect("checked labeled"))
        })
        .collect();
    true_ranks.sort_unstable();
    let rank = quantile_rank(alpha, n_tune).min(n_tune);
    let k_reg = true_ranks[rank - 1].clamp(1, ls.k());

    let mut best: Option<(f64, f64, f64)> = None; // (mean width, lambda, q_hat)
    for &lambda in &RAPS_LAMBDA_GRID {
        let scores: Vec<f64> = score_idx
            .iter()
            .map(|&i| score_raps(&cal.records[i], lambda, k_reg, positive_part).unwrap())
            .collect();
        let q_hat = conformal_quantile(&scores, alpha)?;
        let candidate = CalibratedPredictor {
            method: ConformalMethod::Raps(RapsParams {
                lambda,
                k_reg,
                positive_part,
            }),
            alpha,
            q_hat,
            n_cal: scores.len(),
            label_space: ls.clone(),
        };
        let total_width: usize = tune_idx
            .iter()
            .map(|&i| predict_set(&candidate, &cal.records[i]).unwrap().width())
            .sum();
        let mean_width = total_width as f64 / n_tune as f64;
        // Strict improvement only, so ties resolve to the smaller lambda
        // (the grid is ascending).
        if best.is_none_or(|(w, _, _)| mean_width < w) {
            best = Some((mean_width, lambda, q_hat));
        }
    }
    let (_, lambda, q_hat) = best.expect("non-empty lambda grid");

    Ok(CalibratedPredictor {
        method: ConformalMethod::Raps(RapsParams {
            lambda,
            k_reg,
            positive_part,
        }),
        alpha,
        q_hat,
        n_cal: score_idx.len(),
        label_space: ls.clone(),
    })
}

/// Smallest prefix of the sorted order whose generalized cumulative value
/// reaches `q_hat`; the full label set when none does (covers the `+∞`
/// sentinel and float shortfall at `q_hat` near the total mass).
fn prefix_members(probs: &[f64], q_hat: f64, raps: Option<&RapsParams>) -> Vec<usize> {
    let sp = SortedProbs::new(probs);
    let k = sp.k();
    let mut take = k;
    for i in 0..k {
        let penalty = raps.map_or(0.0, |rp| {
            rp.lambda * rank_penalty(i + 1, rp.k_reg, rp.positive_part)
        });
        if sp.cum[i] + penalty >= q_hat {
            take = i + 1;
            break;
        }
    }
    sp.order[..take].to_vec()
}

/// Builds the prediction set for one record.
///
/// LAC keeps every class with probability ≥ `1 − q̂` and may return an
/// empty set; APS/RAPS return the smallest qualifying prefix of the sorted
/// probabilities and are never empty. `q̂ = +∞` yields the full label set
/// for every method.
///
/// # Errors
/// Probability vector length differing from the predictor's label space.
pub fn predict_set(p: &CalibratedPredictor, r: &SoftmaxRecord) -> Result<PredictionSet> {
    let k = p.label_space.k();
    if r.probs.len() != k {
        return Err(Error::LabelSpaceMismatch {
            expected: k,
            got: r.probs.len(),
        });
    }
    let members: Vec<usize> = match &p.method {
        ConformalMethod::Lac => {
            let threshold = 1.0 - p.q_hat;
            (0..k).filter(|&c| r.probs[c] >= threshold).collect()
        }
        ConformalMethod::Aps => prefix_members(&r.probs, p.q_hat, None),
        ConformalMethod::Raps(params) => prefix_members(&r.probs, p.q_hat, Some(params)),
    };
    Ok(PredictionSet::new(r.sample_id.clone(), members))
}

/// [`predict_set`] over every record of a dataset, in record order.
pub fn predict_sets(p: &CalibratedPredictor, d: &Dataset) -> Result<Vec<PredictionSet>> {
    d.records.iter().map(|r| predict_set(p, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn rec(probs: Vec<f64>, true_label: Option<usize>) -> SoftmaxRecord {
        SoftmaxRecord {
            sample_id: "t1".into(),
            probs,
            true_label,
        }
    }

    fn two_class_space() -> LabelSpace {
        LabelSpace::new(vec!["a", "b"]).unwrap()
    }

    fn four_class_space() -> LabelSpace {
        LabelSpace::new(vec!["a", "b", "c", "d"]).unwrap()
    }

    /// Dataset whose LAC scores are exactly the given values.
    fn lac_score_dataset(scores: &[f64]) -> Dataset {
        Dataset {
            name: "cal".into(),
            records: scores
                .iter()
                .enumerate()
                .map(|(i, &s)| SoftmaxRecord {
                    sample_id: format!("c{i}"),
                    probs: vec![1.0 - s, s],
                    true_label: Some(0),
                })
                .collect(),
            annotations: None,
        }
    }

    #[test]
    fn quantile_rank_matches_exact_rational_oracle() {
        // Expected values computed with exact rational arithmetic over the
        // binary value of alpha (Python fractions.Fraction).
        assert_eq!(quantile_rank(0.1, 9), 9);
        assert_eq!(quantile_rank(0.05, 3), 4);
        assert_eq!(quantile_rank(0.4, 1), 2);
        assert_eq!(quantile_rank(0.05, 1000), 951);
        assert_eq!(quantile_rank(0.1, 1000), 901);
        assert_eq!(quantile_rank(0.15, 1000), 851);
        assert_eq!(quantile_rank(0.2, 1000), 801);
        assert_eq!(quantile_rank(0.5, 1), 1);
        assert_eq!(quantile_rank(0.25, 3), 3);
        // The f64 nearest 0.15 lies just below 3/20, so over the received
        // value (1-alpha)*20 is slightly above 17 and the exact ceiling is
        // 18. The function is exact over its input bits by contract.
        assert_eq!(quantile_rank(0.15, 19), 18);
    }

    #[test]
    fn quantile_rank_monotone_in_alpha() {
        let alphas = [0.01, 0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.9, 0.99];
        for n in [1usize, 2, 9, 10, 100, 999] {
            for w in alphas.windows(2) {
                assert!(
                    quantile_rank(w[0], n) >= quantile_rank(w[1], n),
                    "rank not monotone at n={n}, alphas {w:?}"
                );
            }
            for &a in &alphas {
                let r = quantile_rank(a, n);
                assert!((1..=n + 1).contains(&r));
            }
        }
    }

    #[test]
    fn conformal_quantile_nine_evenly_spaced_scores() {
        let scores: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
        assert_eq!(conformal_quantile(&scores, 0.1).unwrap(), 0.9);
    }

    #[test]
    fn conformal_quantile_saturates_to_infinity() {
        assert_eq!(
            conformal_quantile(&[0.3, 0.1, 0.2], 0.05).unwrap(),
            f64::INFINITY
        );
        assert_eq!(conformal_quantile(&[0.5], 0.4).unwrap(), f64::INFINITY);
    }

    #[test]
    fn conformal_quantile_sorts_input() {
        let shuffled = [0.9, 0.1, 0.5, 0.3, 0.7, 0.2, 0.8, 0.4, 0.6];
        assert_eq!(conformal_quantile(&shuffled, 0.1).unwrap(), 0.9);
    }

    #[test]
    fn conformal_quantile_rejects_bad_input() {
        assert!(matches!(
            conformal_quantile(&[], 0.1),
            Err(Error::EmptyScores)
        ));
        for bad in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(
                conformal_quantile(&[0.5, 0.6], bad),
                Err(Error::InvalidAlpha(_))
            ));
        }
    }

    #[test]
    fn sorted_probs_orders_descending_with_index_ties() {
        let sp = SortedProbs::new(&[0.3, 0.4, 0.3]);
        assert_eq!(sp.order(), &[1, 0, 2]);
        let uniform = SortedProbs::new(&[0.25, 0.25, 0.25, 0.25]);
        assert_eq!(uniform.order(), &[0, 1, 2, 3]);
        assert_relative_eq!(uniform.cum()[3], 1.0, max_relative = 1e-12);
        assert_eq!(uniform.rank_of(2), 3);
    }

    #[test]
    fn lac_score_examples() {
        let s = score_lac(&rec(vec![0.6, 0.3, 0.08, 0.02], Some(0))).unwrap();
        assert_relative_eq!(s, 0.4, max_relative = 1e-12);
        assert_eq!(score_lac(&rec(vec![1.0, 0.0, 0.0, 0.0], Some(0))).unwrap(), 0.0);
        assert_eq!(
            score_lac(&rec(vec![0.25, 0.25, 0.25, 0.25], Some(3))).unwrap(),
            0.75
        );
    }

    #[test]
    fn scores_require_true_label() {
        let r = rec(vec![0.5, 0.5], None);
        for err in [
            score_lac(&r).unwrap_err(),
            score_aps(&r).unwrap_err(),
            score_raps(&r, 0.1, 1, false).unwrap_err(),
        ] {
            assert!(matches!(err, Error::MissingTrueLabel { .. }));
        }
    }

    #[test]
    fn aps_score_examples() {
        let probs = vec![0.6, 0.3, 0.08, 0.02];
        assert_relative_eq!(
            score_aps(&rec(probs.clone(), Some(1))).unwrap(),
            0.9,
            max_relative = 1e-12
        );
        assert_eq!(score_aps(&rec(vec![1.0, 0.0, 0.0, 0.0], Some(0))).unwrap(), 1.0);
        assert_relative_eq!(
            score_aps(&rec(probs, Some(3))).unwrap(),
            1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn aps_score_breaks_ties_by_class_index() {
        // classes 0 and 1 tie at 0.4; class 0 sorts first
        let s = score_aps(&rec(vec![0.4, 0.4, 0.2], Some(1))).unwrap();
        assert_relative_eq!(s, 0.8, max_relative = 1e-12);
    }

    #[test]
    fn raps_score_examples() {
        let probs = vec![0.6, 0.3, 0.08, 0.02];
        // true class at rank 2, penalty 0.1*(2-1)
        assert_relative_eq!(
            score_raps(&rec(probs.clone(), Some(1)), 0.1, 1, false).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        // literal form: negative penalty below k_reg
        assert_relative_eq!(
            score_raps(&rec(probs.clone(), Some(0)), 0.5, 2, false).unwrap(),
            0.1,
            max_relative = 1e-12
        );
        // clamped form zeroes the penalty below k_reg
        assert_relative_eq!(
            score_raps(&rec(probs.clone(), Some(0)), 0.5, 2, true).unwrap(),
            0.6,
            max_relative = 1e-12
        );
    }

    #[test]
    fn raps_with_zero_lambda_reduces_to_aps() {
        for t in 0..4 {
            let r = rec(vec![0.45, 0.3, 0.2, 0.05], Some(t));
            for k_reg in 1..=4 {
                assert_eq!(
                    score_raps(&r, 0.0, k_reg, false).unwrap(),
                    score_aps(&r).unwrap()
                );
            }
        }
    }

    #[test]
    fn calibrate_lac_matches_quantile_example() {
        let cal = lac_score_dataset(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]);
        let p = calibrate(&cal, &two_class_space(), MethodSpec::Lac, 0.1, 0).unwrap();
        assert_relative_eq!(p.q_hat, 0.9, max_relative = 1e-12);
        assert_eq!(p.n_cal, 9);
        assert_eq!(p.method, ConformalMethod::Lac);
    }

    #[test]
    fn calibrate_aps_degenerate_perfect_classifier() {
        let cal = Dataset {
            name: "cal".into(),
            records: (0..20)
                .map(|i| SoftmaxRecord {
                    sample_id: format!("c{i}"),
                    probs: vec![1.0, 0.0, 0.0, 0.0],
                    true_label: Some(0),
                })
                .collect(),
            annotations: None,
        };
        let p = calibrate(&cal, &four_class_space(), MethodSpec::Aps, 0.1, 0).unwrap();
        assert_eq!(p.q_hat, 1.0);
        let set = predict_set(&p, &rec(vec![1.0, 0.0, 0.0, 0.0], None)).unwrap();
        assert_eq!(set.members(), &[0]);
    }

    #[test]
    fn calibrate_rejects_unlabeled_and_empty() {
        let ls = two_class_space();
        let empty = Dataset::default();
        assert!(matches!(
            calibrate(&empty, &ls, MethodSpec::Lac, 0.1, 0),
            Err(Error::EmptyCollection { .. })
        ));
        let mut cal = lac_score_dataset(&[0.1, 0.2]);
        cal.records[1].true_label = None;
        assert!(matches!(
            calibrate(&cal, &ls, MethodSpec::Lac, 0.1, 0),
            Err(Error::MissingTrueLabel { .. })
        ));
    }

    #[test]
    fn calibrate_raps_needs_ten_records() {
        let cal = lac_score_dataset(&[0.1; 9]);
        let err = calibrate(
            &cal,
            &two_class_space(),
            MethodSpec::Raps { positive_part: false },
            0.1,
            0,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::CalibrationTooSmall { needed: 10, got: 9 }
        ));
    }

    #[test]
    fn calibrate_raps_is_deterministic_in_seed() {
        let scores: Vec<f64> = (1..=40).map(|i| i as f64 / 41.0).collect();
        let cal = lac_score_dataset(&scores);
        let ls = two_class_space();
        let spec = MethodSpec::Raps { positive_part: false };
        let a = calibrate(&cal, &ls, spec, 0.1, 7).unwrap();
        let b = calibrate(&cal, &ls, spec, 0.1, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_cal, 32); // 80% scoring slice
        match &a.method {
            ConformalMethod::Raps(p) => {
                assert!(RAPS_LAMBDA_GRID.contains(&p.lambda));
                assert!((1..=2).contains(&p.k_reg));
            }
            other => panic!("expected raps, got {other:?}"),
        }
    }

    #[test]
    fn calibrate_raps_breaks_width_ties_toward_smaller_lambda() {
        // Identical one-hot records: every lambda yields identical widths,
        // so the first grid entry must win.
        let cal = Dataset {
            name: "cal".into(),
            records: (0..10)
                .map(|i| SoftmaxRecord {
                    sample_id: format!("c{i}"),
                    probs: vec![1.0, 0.0],
                    true_label: Some(0),
                })
                .collect(),
            annotations: None,
        };
        let p = calibrate(
            &cal,
            &two_class_space(),
            MethodSpec::Raps { positive_part: false },
            0.1,
            3,
        )
        .unwrap();
        match p.method {
            ConformalMethod::Raps(params) => assert_eq!(params.lambda, 0.001),
            _ => unreachable!(),
        }
    }

    #[test]
    fn predict_lac_hand_threshold() {
        let p = CalibratedPredictor {
            method: ConformalMethod::Lac,
            alpha: 0.1,
            q_hat: 0.95,
            n_cal: 100,
            label_space: four_class_space(),
        };
        let set = predict_set(&p, &rec(vec![0.6, 0.3, 0.08, 0.02], None)).unwrap();
        assert_eq!(set.members(), &[0, 1, 2]);
    }

    #[test]
    fn predict_lac_empty_set_on_uniform_record() {
        let p = CalibratedPredictor {
            method: ConformalMethod::Lac,
            alpha: 0.2,
            q_hat: 0.2,
            n_cal: 100,
            label_space: four_class_space(),
        };
        let set = predict_set(&p, &rec(vec![0.25, 0.25, 0.25, 0.25], None)).unwrap();
        assert_eq!(set.width(), 0);
        assert!(set.members().is_empty());
    }

    #[test]
    fn predict_aps_hand_cumulative() {
        let p = CalibratedPredictor {
            method: ConformalMethod::Aps,
            alpha: 0.1,
            q_hat: 0.7,
            n_cal: 100,
            label_space: four_class_space(),
        };
        let set = predict_set(&p, &rec(vec![0.6, 0.3, 0.08, 0.02], None)).unwrap();
        assert_eq!(set.members(), &[0, 1]);
    }

    #[test]
    fn infinite_q_hat_yields_full_set_for_every_method() {
        let ls = four_class_space();
        let probs = vec![0.7, 0.2, 0.06, 0.04];
        for method in [
            ConformalMethod::Lac,
            ConformalMethod::Aps,
            ConformalMethod::Raps(RapsParams {
                lambda: 0.1,
                k_reg: 1,
                positive_part: false,
            }),
        ] {
            let p = CalibratedPredictor {
                method,
                alpha: 0.05,
                q_hat: f64::INFINITY,
                n_cal: 3,
                label_space: ls.clone(),
            };
            let set = predict_set(&p, &rec(probs.clone(), None)).unwrap();
            assert_eq!(set.members(), &[0, 1, 2, 3]);
        }
    }

    #[test]
    fn predict_rejects_wrong_length_record() {
        let p = CalibratedPredictor {
            method: ConformalMethod::Lac,
            alpha: 0.1,
            q_hat: 0.5,
            n_cal: 10,
            label_space: four_class_space(),
        };
        assert!(matches!(
            predict_set(&p, &rec(vec![0.5, 0.5], None)),
            Err(Error::LabelSpaceMismatch { expected: 4, got: 2 })
        ));
    }

    #[test]
    fn nested_quantiles_give_nested_lac_sets() {
        let scores: Vec<f64> = (1..=50).map(|i| i as f64 / 51.0).collect();
        let cal = lac_score_dataset(&scores);
        let ls = two_class_space();
        let tight = calibrate(&cal, &ls, MethodSpec::Lac, 0.05, 0).unwrap();
        let loose = calibrate(&cal, &ls, MethodSpec::Lac, 0.2, 0).unwrap();
        assert!(tight.q_hat >= loose.q_hat);
        for p0 in [0.02, 0.3, 0.55, 0.97] {
            let r = rec(vec![p0, 1.0 - p0], None);
            let wide = predict_set(&tight, &r).unwrap();
            let narrow = predict_set(&loose, &r).unwrap();
            assert!(
                narrow.members().iter().all(|c| wide.contains(*c)),
                "sets not nested at p0={p0}"
            );
        }
    }
}
