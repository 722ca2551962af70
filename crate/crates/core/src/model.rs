//! Shared data model: label spaces, softmax records, annotation sets,
//! prediction sets, and dataset-level validation.
//!
//! All types are immutable value objects after construction and are safe to
//! share across threads. Class identity is positional: a [`LabelSpace`]
//! fixes the index ↔ name bijection, and every probability vector, label,
//! and prediction-set member is an index into it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};

/// Row sums further than this from 1 are rejected outright.
pub const PROB_SUM_REJECT_TOL: f64 = 1e-3;

/// Row sums within this of 1 are treated as already normalized and left
/// untouched, which keeps serialization round trips bit-exact.
pub const PROB_SUM_EXACT_TOL: f64 = 1e-9;

/// Ordered list of class names; fixes `K` and the index ↔ name bijection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSpace {
    classes: Vec<String>,
}

impl LabelSpace {
    /// Builds a label space from an ordered class list.
    ///
    /// # Errors
    /// Rejects fewer than two classes, empty names, and duplicates.
    pub fn new<S: Into<String>>(classes: Vec<S>) -> Result<Self> {
        let classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        if classes.len() < 2 {
            return Err(Error::InvalidLabelSpace(format!(
                "need at least 2 classes, got {}",
                classes.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for name in &classes {
            if name.is_empty() {
                return Err(Error::InvalidLabelSpace("empty class name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidLabelSpace(format!(
                    "duplicate class name `{name}`"
                )));
            }
        }
        Ok(LabelSpace { classes })
    }

    /// The four-category cervical-cytology label space used as the default
    /// class list throughout the command-line tool.
    pub fn bethesda() -> Self {
        LabelSpace::new(vec!["NILM", "LSIL", "HSIL", "Artefact"]).expect("static class list")
    }

    /// Number of classes `K`.
    pub fn k(&self) -> usize {
        self.classes.len()
    }

    /// Ordered class names.
    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    /// Name of class `idx`. Panics if out of range.
    pub fn name(&self, idx: usize) -> &str {
        &self.classes[idx]
    }

    /// Index of the class named `name`, if any.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }
}

/// One sample's identifier, length-`K` probability vector, and optional
/// true label.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRecord {
    pub sample_id: String,
    pub probs: Vec<f64>,
    pub true_label: Option<usize>,
}

/// Per-sample multiset of expert labels plus an optional consensus label.
///
/// An annotator who skipped a sample is simply absent from `labels`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub sample_id: String,
    /// `(annotator_id, class index)` pairs, in input order.
    pub labels: Vec<(String, usize)>,
    pub consensus: Option<usize>,
}

impl AnnotationSet {
    /// The set of distinct class indices assigned by the annotators.
    pub fn unique_labels(&self) -> BTreeSet<usize> {
        self.labels.iter().map(|(_, c)| *c).collect()
    }

    /// Number of annotators who labeled this sample.
    pub fn n_raters(&self) -> usize {
        self.labels.len()
    }
}

/// Sorted set of class indices predicted for one sample. May be empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSet {
    pub sample_id: String,
    members: Vec<usize>,
}

impl PredictionSet {
    /// Builds a set from arbitrary member order; sorts and deduplicates.
    pub fn new(sample_id: impl Into<String>, mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        PredictionSet {
            sample_id: sample_id.into(),
            members,
        }
    }

    /// Member class indices in ascending order.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    /// Set cardinality.
    pub fn width(&self) -> usize {
        self.members.len()
    }

    /// Whether `class` is in the set.
    pub fn contains(&self, class: usize) -> bool {
        self.members.binary_search(&class).is_ok()
    }
}

/// A named collection of softmax records with optional annotations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<SoftmaxRecord>,
    pub annotations: Option<BTreeMap<String, AnnotationSet>>,
}

impl Dataset {
    /// Number of records.
    pub fn len(&self) -> usize {
        self.records.len()
    }

    /// Whether the dataset has no records.
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// One invariant violation found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct Violation {
    pub sample_id: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.sample_id, self.rule)
    }
}

fn violation(sample_id: &str, rule: impl Into<String>) -> Violation {
    Violation {
        sample_id: sample_id.to_string(),
        rule: rule.into(),
    }
}

/// Checks every type invariant of `d` against `ls` and returns the list of
/// violations found (empty iff the dataset is valid).
///
/// Violations are data, not failures: callers decide whether to reject.
pub fn validate_dataset(d: &Dataset, ls: &LabelSpace) -> Vec<Violation> {
    let k = ls.k();
    let mut out = Vec::new();
    let mut seen_ids: BTreeSet<&str> = BTreeSet::new();

    for rec in &d.records {
        if !seen_ids.insert(rec.sample_id.as_str()) {
            out.push(violation(
                &rec.sample_id,
                format!("duplicate id {}", rec.sample_id),
            ));
        }
        if rec.probs.len() != k {
            out.push(violation(
                &rec.sample_id,
                format!("expected {k} probabilities, got {}", rec.probs.len()),
            ));
            continue;
        }
        let mut sum = 0.0;
        let mut bad_entry = false;
        for &p in &rec.probs {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                out.push(violation(
                    &rec.sample_id,
                    format!("probability {p} outside [0,1]"),
                ));
                bad_entry = true;
                break;
            }
            sum += p;
        }
        if !bad_entry && (sum - 1.0).abs() > PROB_SUM_REJECT_TOL {
            out.push(violation(
                &rec.sample_id,
                format!("probs sum {sum} > tolerance"),
            ));
        }
        if let Some(t) = rec.true_label {
            if t >= k {
                out.push(violation(
                    &rec.sample_id,
                    format!("true label index {t} outside 0..{k}"),
                ));
            }
        }
    }

    if let Some(ann) = &d.annotations {
        for (id, a) in ann {
            if a.sample_id != *id {
                out.push(violation(id, "annotation keyed under a different sample_id"));
            }
            if !seen_ids.contains(id.as_str()) {
                out.push(violation(id, "annotated sample has no softmax record"));
            }
            if a.labels.is_empty() {
                out.push(violation(id, "annotation set has no labels"));
            }
            for (rater, c) in &a.labels {
                if *c >= k {
                    out.push(violation(
                        id,
                        format!("annotator {rater} label index {c} outside 0..{k}"),
                    ));
                }
            }
            if let Some(c) = a.consensus {
                if c >= k {
                    out.push(violation(
                        id,
                        format!("consensus index {c} outside 0..{k}"),
                    ));
                }
            }
        }
    }

    out
}

/// Raw-label → target-class rewrite table applied before indexing labels.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MergeTable {
    map: BTreeMap<String, String>,
}

impl MergeTable {
    /// An empty table: labels must already be class names.
    pub fn identity() -> Self {
        MergeTable::default()
    }

    /// The cervical-cytology merge convention: `ASC-US` folds into `LSIL`,
    /// and `ASC-H`/`SCC` fold into `HSIL`. Target classes map to themselves.
    pub fn bethesda() -> Self {
        let mut map = BTreeMap::new();
        for (raw, target) in [
            ("NILM", "NILM"),
            ("LSIL", "LSIL"),
            ("ASC-US", "LSIL"),
            ("HSIL", "HSIL"),
            ("ASC-H", "HSIL"),
            ("SCC", "HSIL"),
            ("Artefact", "Artefact"),
        ] {
            map.insert(raw.to_string(), target.to_string());
        }
        MergeTable { map }
    }

    /// Builds a table from explicit `(raw, target)` pairs.
    pub fn from_pairs<S: Into<String>>(pairs: Vec<(S, S)>) -> Self {
        MergeTable {
            map: pairs
                .into_iter()
                .map(|(r, t)| (r.into(), t.into()))
                .collect(),
        }
    }
}

/// Rewrites `raw_label` through `table` and resolves it to a class index in
/// `ls`. Labels absent from the table must already be class names.
///
/// # Errors
/// [`Error::UnknownLabel`] when the label is neither mapped nor a class.
pub fn merge_labels(raw_label: &str, table: &MergeTable, ls: &LabelSpace) -> Result<usize> {
    let target = table
        .map
        .get(raw_label)
        .map(String::as_str)
        .unwrap_or(raw_label);
    ls.index_of(target).ok_or_else(|| Error::UnknownLabel {
        label: raw_label.to_string(),
    })
}
