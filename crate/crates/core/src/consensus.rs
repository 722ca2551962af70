//! Consensus labels from multi-annotator sets and inter-rater reliability.
//!
//! [`majority_vote`] reduces one sample's annotation multiset to a single
//! consensus label under a strict-plurality rule; samples without a strict
//! plurality reaching the agreement threshold are excluded rather than
//! guessed. [`fleiss_kappa`] computes the chance-corrected agreement
//! statistic over the item×category count matrix, with a percentile
//! bootstrap over items for the 95% confidence interval.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{AnnotationSet, LabelSpace};

/// Outcome of majority voting on one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteOutcome {
    /// The strict-plurality class index.
    Consensus(usize),
    /// No label reached `min_agreement` with a strictly larger count than
    /// every other label; the sample is dropped from consensus analyses.
    Excluded,
}

/// Per-class vote counts for one sample, indexed by class.
pub fn vote_counts(a: &AnnotationSet, k: usize) -> Vec<usize> {
    let mut counts = vec![0usize; k];
    for (_, c) in &a.labels {
        if *c < k {
            counts[*c] += 1;
        }
    }
    counts
}

/// Strict-plurality majority vote: returns the unique label whose count is
/// at least `min_agreement` and strictly greater than every other label's
/// count; ties or insufficient agreement yield [`VoteOutcome::Excluded`].
pub fn majority_vote(a: &AnnotationSet, min_agreement: usize) -> VoteOutcome {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, c) in &a.labels {
        *counts.entry(*c).or_insert(0) += 1;
    }
    let max = counts.values().copied().max().unwrap_or(0);
    if max < min_agreement {
        return VoteOutcome::Excluded;
    }
    let mut top = counts.iter().filter(|(_, &n)| n == max);
    let (&class, _) = top.next().expect("max over non-empty counts");
    if top.next().is_some() {
        VoteOutcome::Excluded // tie for the plurality
    } else {
        VoteOutcome::Consensus(class)
    }
}

/// Fleiss' kappa point estimate with a percentile-bootstrap CI.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Items entering the estimate (all rated by exactly `m_raters`).
    pub n_items: usize,
    /// The common rater count the estimate is computed over.
    pub m_raters: usize,
    /// Items dropped because their rater count differs from `m_raters`.
    pub n_excluded: usize,
    /// Distribution of rater counts over *all* input items.
    pub n_raters_per_item: BTreeMap<usize, usize>,
}

/// Kappa over an item×category count matrix with constant rater count `m`.
/// `None` when expected agreement is 1 (all mass in one category), where
/// the statistic is undefined.
fn kappa_from_counts(rows: &[Vec<usize>], m: usize) -> Option<f64> {
    let n_items = rows.len();
    let k = rows[0].len();
    let denom = (m * (m - 1)) as f64;

    let mut p_bar = 0.0;
    for row in rows {
        let sum_sq: usize = row.iter().map(|&n| n * n).sum();
        p_bar += (sum_sq - m) as f64 / denom;
    }
    p_bar /= n_items as f64;

    let total = (n_items * m) as f64;
    let mut p_e = 0.0;
    for j in 0..k {
        let col: usize = rows.iter().map(|r| r[j]).sum();
        let p_j = col as f64 / total;
        p_e += p_j * p_j;
    }

    if 1.0 - p_e <= 0.0 {
        return None;
    }
    Some((p_bar - p_e) / (1.0 - p_e))
}

/// Percentile of a sorted slice with linear interpolation (`q` in `[0,1]`).
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Fleiss' kappa over `annotations` with a seeded percentile bootstrap.
///
/// Classical Fleiss requires a constant rater count per item, so the items
/// are restricted to the most common rater count `m ≥ 2` (ties toward the
/// larger count); the rest are excluded and reported. Resample `b` of the
/// bootstrap draws from ChaCha8 stream `b + 1` of `seed`, so the CI is
/// deterministic and resamples may be evaluated in parallel. Degenerate
/// resamples (all mass in one category) are dropped. The reported interval
/// is widened, if necessary, to bracket the point estimate.
///
/// # Errors
/// Fewer than two usable items, or expected agreement 1 on the full usable
/// set (kappa undefined).
pub fn fleiss_kappa(
    annotations: &[AnnotationSet],
    ls: &LabelSpace,
    bootstrap_n: usize,
    seed: u64,
) -> Result<KappaResult> {
    let mut n_raters_per_item: BTreeMap<usize, usize> = BTreeMap::new();
    for a in annotations {
        *n_raters_per_item.entry(a.n_raters()).or_insert(0) += 1;
    }

    // Modal rater count among items with >= 2 raters, ties toward more raters.
    let m_raters = n_raters_per_item
        .iter()
        .filter(|(&m, _)| m >= 2)
        .max_by(|(m_a, n_a), (m_b, n_b)| n_a.cmp(n_b).then(m_a.cmp(m_b)))
        .map(|(&m, _)| m)
        .ok_or(Error::TooFewKappaItems { got: 0 })?;

    let rows: Vec<Vec<usize>> = annotations
        .iter()
        .filter(|a| a.n_raters() == m_raters)
        .map(|a| vote_counts(a, ls.k()))
        .collect();
    let n_items = rows.len();
    if n_items < 2 {
        return Err(Error::TooFewKappaItems { got: n_items });
    }
    let n_excluded = annotations.len() - n_items;

    let kappa = kappa_from_counts(&rows, m_raters).ok_or(Error::KappaUndefined)?;

    let mut boot: Vec<f64> = (0..bootstrap_n)
        .into_par_iter()
        .filter_map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            let resample: Vec<Vec<usize>> = (0..n_items)
                .map(|_| rows[rng.random_range(0..n_items)].clone())
                .collect();
            kappa_from_counts(&resample, m_raters)
        })
        .collect();
    boot.sort_unstable_by(f64::total_cmp);

    let (mut ci_low, mut ci_high) = if boot.is_empty() {
        (kappa, kappa)
    } else {
        (percentile(&boot, 0.025), percentile(&boot, 0.975))
    };
    // The percentile interval does not mathematically guarantee bracketing;
    // widen to include the point estimate so the result invariant holds.
    ci_low = ci_low.min(kappa);
    ci_high = ci_high.max(kappa);

    Ok(KappaResult {
        kappa,
        ci_low,
        ci_high,
        n_items,
        m_raters,
        n_excluded,
        n_raters_per_item,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(labels: &[usize]) -> AnnotationSet {
        AnnotationSet {
            sample_id: "t".into(),
            labels: labels
                .iter()
                .enumerate()
                .map(|(i, &c)| (format!("e{i}"), c))
                .collect(),
            consensus: None,
        }
    }

    /// Builds an annotation item from category counts (categories indexed
    /// by position), e.g. `[2, 1]` = two raters chose 0, one chose 1.
    fn item_from_counts(counts: &[usize]) -> AnnotationSet {
        let mut labels = Vec::new();
        for (cat, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                labels.push(cat);
            }
        }
        ann(&labels)
    }

    fn space(k: usize) -> LabelSpace {
        LabelSpace::new((0..k).map(|i| format!("c{i}")).collect()).unwrap()
    }

    #[test]
    fn vote_strict_majority() {
        assert_eq!(majority_vote(&ann(&[0, 0, 1]), 2), VoteOutcome::Consensus(0));
    }

    #[test]
    fn vote_requires_min_agreement() {
        assert_eq!(majority_vote(&ann(&[0, 1]), 2), VoteOutcome::Excluded);
    }

    #[test]
    fn vote_excludes_plurality_ties() {
        assert_eq!(majority_vote(&ann(&[0, 0, 1, 1]), 2), VoteOutcome::Excluded);
    }

    #[test]
    fn vote_with_higher_threshold() {
        assert_eq!(majority_vote(&ann(&[0, 0, 1]), 3), VoteOutcome::Excluded);
        assert_eq!(majority_vote(&ann(&[0, 0, 0, 1]), 3), VoteOutcome::Consensus(0));
    }

    #[test]
    fn vote_is_permutation_invariant() {
        let orderings = [[0, 0, 1, 2], [2, 0, 1, 0], [0, 1, 0, 2], [1, 2, 0, 0]];
        for labels in orderings {
            assert_eq!(majority_vote(&ann(&labels), 2), VoteOutcome::Consensus(0));
        }
    }

    #[test]
    fn vote_counts_tallies_by_class() {
        assert_eq!(vote_counts(&ann(&[0, 0, 2]), 4), vec![2, 0, 1, 0]);
    }

    #[test]
    fn kappa_perfect_agreement_is_exactly_one() {
        // unanimous items spread over two categories
        let items = vec![
            item_from_counts(&[3, 0]),
            item_from_counts(&[0, 3]),
            item_from_counts(&[3, 0]),
        ];
        let r = fleiss_kappa(&items, &space(2), 100, 7).unwrap();
        assert_eq!(r.kappa, 1.0);
        assert!(r.ci_low <= 1.0 && r.ci_high >= 1.0);
    }

    #[test]
    fn kappa_two_item_two_rater_matches_reference() {
        // Both items split {A, B}: observed agreement 0, expected 0.5,
        // kappa -1. Reference value from statsmodels fleiss_kappa.
        let items = vec![item_from_counts(&[1, 1]), item_from_counts(&[1, 1])];
        let r = fleiss_kappa(&items, &space(2), 0, 0).unwrap();
        assert!((r.kappa - (-1.0)).abs() < 1e-9, "kappa = {}", r.kappa);
    }

    #[test]
    fn kappa_classic_fourteen_rater_table_matches_reference() {
        // 10 items x 5 categories, 14 raters each; reference value
        // 0.20993070442195522 from statsmodels fleiss_kappa.
        let counts = [
            [0, 0, 0, 0, 14],
            [0, 2, 6, 4, 2],
            [0, 0, 3, 5, 6],
            [0, 3, 9, 2, 0],
            [2, 2, 8, 1, 1],
            [7, 7, 0, 0, 0],
            [3, 2, 6, 3, 0],
            [2, 5, 3, 2, 2],
            [6, 5, 2, 1, 0],
            [0, 2, 2, 3, 7],
        ];
        let items: Vec<AnnotationSet> = counts.iter().map(|c| item_from_counts(c)).collect();
        let r = fleiss_kappa(&items, &space(5), 0, 0).unwrap();
        assert!(
            (r.kappa - 0.20993070442195522).abs() < 1e-9,
            "kappa = {}",
            r.kappa
        );
        assert_eq!(r.n_items, 10);
        assert_eq!(r.m_raters, 14);
    }

    #[test]
    fn kappa_four_rater_fixture_matches_reference() {
        // Reference value 0.3435897435897435 from statsmodels fleiss_kappa.
        let items = four_rater_items();
        let r = fleiss_kappa(&items, &space(4), 0, 0).unwrap();
        assert!(
            (r.kappa - 0.3435897435897435).abs() < 1e-9,
            "kappa = {}",
            r.kappa
        );
    }

    fn four_rater_items() -> Vec<AnnotationSet> {
        [
            [4, 0, 0, 0],
            [3, 1, 0, 0],
            [2, 2, 0, 0],
            [0, 3, 1, 0],
            [1, 1, 1, 1],
            [0, 0, 4, 0],
        ]
        .iter()
        .map(|c| item_from_counts(c))
        .collect()
    }

    #[test]
    fn kappa_excludes_items_with_unequal_rater_counts() {
        let mut items = four_rater_items();
        items.push(item_from_counts(&[2, 1, 0, 0])); // 3 raters, excluded
        let r = fleiss_kappa(&items, &space(4), 0, 0).unwrap();
        assert!((r.kappa - 0.3435897435897435).abs() < 1e-9);
        assert_eq!(r.n_items, 6);
        assert_eq!(r.n_excluded, 1);
        assert_eq!(r.m_raters, 4);
        assert_eq!(
            r.n_raters_per_item,
            BTreeMap::from([(3usize, 1usize), (4, 6)])
        );
    }

    #[test]
    fn kappa_invariant_under_category_relabeling() {
        let items = four_rater_items();
        let relabeled: Vec<AnnotationSet> = items
            .iter()
            .map(|a| {
                let perm = [2usize, 3, 1, 0];
                AnnotationSet {
                    sample_id: a.sample_id.clone(),
                    labels: a
                        .labels
                        .iter()
                        .map(|(r, c)| (r.clone(), perm[*c]))
                        .collect(),
                    consensus: None,
                }
            })
            .collect();
        let base = fleiss_kappa(&items, &space(4), 0, 0).unwrap();
        let perm = fleiss_kappa(&relabeled, &space(4), 0, 0).unwrap();
        assert!((base.kappa - perm.kappa).abs() < 1e-12);
    }

    #[test]
    fn kappa_undefined_for_single_category_unanimity() {
        let items = vec![item_from_counts(&[3, 0]), item_from_counts(&[3, 0])];
        assert!(matches!(
            fleiss_kappa(&items, &space(2), 0, 0),
            Err(Error::KappaUndefined)
        ));
    }

    #[test]
    fn kappa_needs_two_usable_items() {
        let items = vec![item_from_counts(&[2, 1])];
        assert!(matches!(
            fleiss_kappa(&items, &space(2), 0, 0),
            Err(Error::TooFewKappaItems { got: 1 })
        ));
        let singles = vec![ann(&[0]), ann(&[1])];
        assert!(matches!(
            fleiss_kappa(&singles, &space(2), 0, 0),
            Err(Error::TooFewKappaItems { got: 0 })
        ));
    }

    #[test]
    fn kappa_bootstrap_brackets_estimate_and_is_deterministic() {
        let items = four_rater_items();
        let ls = space(4);
        let a = fleiss_kappa(&items, &ls, 500, 42).unwrap();
        let b = fleiss_kappa(&items, &ls, 500, 42).unwrap();
        assert!(a.ci_low <= a.kappa && a.kappa <= a.ci_high);
        assert!(a.ci_low < a.ci_high, "bootstrap CI should have width");
        assert_eq!(a.ci_low.to_bits(), b.ci_low.to_bits());
        assert_eq!(a.ci_high.to_bits(), b.ci_high.to_bits());
    }
}
