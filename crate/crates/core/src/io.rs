//! File formats: CSV interchange for datasets, annotations, prediction
//! sets, consensus tables, and reports; JSON for predictors and manifests.
//!
//! CSV is the interchange contract with the upstream model (any framework
//! can emit it); headers are bit-exact and outputs are deterministic given
//! inputs. Class *names* appear in files; indices stay internal. Parse
//! errors carry the path and a 1-indexed line number where known.
//!
//! Softmax rows whose probabilities sum to `1 ± 1e-3` are renormalized;
//! deviations within `1e-9` are left untouched so that write → parse round
//! trips are bit-exact (floats are printed via the shortest representation
//! that parses back to the same value).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::conformal::{CalibratedPredictor, ConformalMethod, RapsParams};
use crate::consensus::{KappaResult, VoteOutcome};
use crate::error::{Error, Result};
use crate::metrics::{AgreementReport, CoverageReport, EvaluationReport};
use crate::model::{
    AnnotationSet, Dataset, LabelSpace, MergeTable, PredictionSet, SoftmaxRecord,
    PROB_SUM_EXACT_TOL, PROB_SUM_REJECT_TOL,
};
use crate::uncertainty::{NoiseSeries, OodComparison, WidthProfile};

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn open_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::file_io(display(path), e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line());
    Error::parse(display(path), line, e.to_string())
}

/// Dataset name derived from a file path (the stem, or the whole path).
pub fn dataset_name_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| display(path))
}

// ---------------------------------------------------------------------
// Softmax CSV: sample_id,p_<class0>,…,p_<classK-1>[,true_label]
// ---------------------------------------------------------------------

/// Parses a softmax CSV; the `p_<name>` columns define the label space.
///
/// True labels are optional (column may be absent, or cells empty). Rows
/// are renormalized when their probability sum deviates from 1 by more
/// than `1e-9` but at most `1e-3`; larger deviations are errors.
pub fn parse_softmax_csv(path: &Path) -> Result<(Dataset, LabelSpace)> {
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let fields: Vec<&str> = headers.iter().collect();
    let bad_header = |msg: String| Error::parse(display(path), Some(1), msg);
    if fields.first() != Some(&"sample_id") {
        return Err(bad_header(format!(
            "first column must be `sample_id`, got `{}`",
            fields.first().unwrap_or(&"")
        )));
    }
    let has_true = fields.last() == Some(&"true_label");
    let class_fields = &fields[1..fields.len() - usize::from(has_true)];
    let mut names = Vec::with_capacity(class_fields.len());
    for f in class_fields {
        match f.strip_prefix("p_") {
            Some(name) if !name.is_empty() => names.push(name.to_string()),
            _ => {
                return Err(bad_header(format!(
                    "expected a probability column `p_<class>`, got `{f}`"
                )))
            }
        }
    }
    let ls = LabelSpace::new(names).map_err(|e| bad_header(e.to_string()))?;
    let k = ls.k();
    let want = 1 + k + usize::from(has_true);

    let mut records = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line());
        let fail = |msg: String| Error::parse(display(path), line, msg);
        if rec.len() != want {
            return Err(fail(format!("expected {want} fields, got {}", rec.len())));
        }
        let sample_id = rec[0].to_string();
        if !seen.insert(sample_id.clone()) {
            return Err(fail(format!("duplicate sample_id `{sample_id}`")));
        }
        let mut probs = Vec::with_capacity(k);
        for j in 0..k {
            let cell = &rec[1 + j];
            let p: f64 = cell
                .parse()
                .map_err(|_| fail(format!("non-numeric probability `{cell}`")))?;
            if !(0.0..=1.0 + PROB_SUM_REJECT_TOL).contains(&p) {
                return Err(fail(format!("probability {p} outside [0, 1]")));
            }
            probs.push(p);
        }
        let sum: f64 = probs.iter().sum();
        let dev = (sum - 1.0).abs();
        if dev > PROB_SUM_REJECT_TOL {
            return Err(fail(format!(
                "probabilities sum to {sum}, beyond the {PROB_SUM_REJECT_TOL} tolerance"
            )));
        }
        if dev > PROB_SUM_EXACT_TOL {
            for p in &mut probs {
                *p /= sum;
            }
        }
        let true_label = if has_true && !rec[1 + k].is_empty() {
            let name = &rec[1 + k];
            Some(
                ls.index_of(name)
                    .ok_or_else(|| fail(format!("unknown class name `{name}`")))?,
            )
        } else {
            None
        };
        records.push(SoftmaxRecord {
            sample_id,
            probs,
            true_label,
        });
    }
    if records.is_empty() {
        return Err(Error::parse(display(path), None, "no data rows"));
    }
    Ok((
        Dataset {
            name: dataset_name_from_path(path),
            records,
            annotations: None,
        },
        ls,
    ))
}

/// Writes a softmax CSV. The `true_label` column is always present; it is
/// empty for unlabeled records.
pub fn write_softmax_csv(path: &Path, dataset: &Dataset, ls: &LabelSpace) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sample_id".to_string()];
    header.extend(ls.classes().iter().map(|c| format!("p_{c}")));
    header.push("true_label".to_string());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for r in &dataset.records {
        if r.probs.len() != ls.k() {
            return Err(Error::LabelSpaceMismatch {
                expected: ls.k(),
                got: r.probs.len(),
            });
        }
        let mut row = vec![r.sample_id.clone()];
        row.extend(r.probs.iter().map(|p| p.to_string()));
        row.push(match r.true_label {
            Some(t) => ls.name(t).to_string(),
            None => String::new(),
        });
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    write_bytes(path, &w.into_inner().expect("vec writer never fails"))
}

// ---------------------------------------------------------------------
// Annotations CSV: sample_id,annotator_id,label
// ---------------------------------------------------------------------

/// Parses an annotations CSV, resolving labels against `ls`; when `merge`
/// is set, Bethesda shorthand labels collapse onto their parent classes
/// first.
pub fn parse_annotations_csv(
    path: &Path,
    ls: &LabelSpace,
    merge: bool,
) -> Result<BTreeMap<String, AnnotationSet>> {
    let table = if merge {
        MergeTable::bethesda()
    } else {
        MergeTable::identity()
    };
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let fields: Vec<&str> = headers.iter().collect();
    if fields != ["sample_id", "annotator_id", "label"] {
        return Err(Error::parse(
            display(path),
            Some(1),
            format!("expected header `sample_id,annotator_id,label`, got `{}`", fields.join(",")),
        ));
    }
    let mut out: BTreeMap<String, AnnotationSet> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line());
        let fail = |msg: String| Error::parse(display(path), line, msg);
        if rec.len() != 3 {
            return Err(fail(format!("expected 3 fields, got {}", rec.len())));
        }
        let (sample_id, annotator_id, raw) = (&rec[0], &rec[1], &rec[2]);
        let class = crate::model::merge_labels(raw, &table, ls).map_err(|e| fail(e.to_string()))?;
        let entry = out
            .entry(sample_id.to_string())
            .or_insert_with(|| AnnotationSet {
                sample_id: sample_id.to_string(),
                labels: Vec::new(),
                consensus: None,
            });
        if entry.labels.iter().any(|(a, _)| a == annotator_id) {
            return Err(fail(format!(
                "annotator `{annotator_id}` labeled sample `{sample_id}` twice"
            )));
        }
        entry.labels.push((annotator_id.to_string(), class));
    }
    if out.is_empty() {
        return Err(Error::parse(display(path), None, "no annotation rows"));
    }
    Ok(out)
}

/// Writes annotations, one row per (sample, annotator), samples in map
/// order and annotators in stored order.
pub fn write_annotations_csv(
    path: &Path,
    annotations: &BTreeMap<String, AnnotationSet>,
    ls: &LabelSpace,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "annotator_id", "label"])
        .map_err(|e| csv_error(path, e))?;
    for ann in annotations.values() {
        for (annotator, class) in &ann.labels {
            w.write_record([ann.sample_id.as_str(), annotator, ls.name(*class)])
                .map_err(|e| csv_error(path, e))?;
        }
    }
    write_bytes(path, &w.into_inner().expect("vec writer never fails"))
}

// ---------------------------------------------------------------------
// Prediction sets CSV: sample_id,width,members (semicolon-joined names)
// ---------------------------------------------------------------------

/// Writes prediction sets; members are class names joined by `;`, empty
/// for empty sets.
pub fn write_sets_csv(path: &Path, sets: &[PredictionSet], ls: &LabelSpace) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["sample_id", "width", "members"])
        .map_err(|e| csv_error(path, e))?;
    for s in sets {
        let members = s
            .members()
            .iter()
            .map(|&c| ls.name(c))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([s.sample_id.as_str(), &s.width().to_string(), &members])
            .map_err(|e| csv_error(path, e))?;
    }
    write_bytes(path, &w.into_inner().expect("vec writer never fails"))
}

/// Parses prediction sets, checking the recorded width against the member
/// count.
pub fn parse_sets_csv(path: &Path, ls: &LabelSpace) -> Result<Vec<PredictionSet>> {
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let fields: Vec<&str> = headers.iter().collect();
    if fields != ["sample_id", "width", "members"] {
        return Err(Error::parse(
            display(path),
            Some(1),
            format!("expected header `sample_id,width,members`, got `{}`", fields.join(",")),
        ));
    }
    let mut sets = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line());
        let fail = |msg: String| Error::parse(display(path), line, msg);
        if rec.len() != 3 {
            return Err(fail(format!("expected 3 fields, got {}", rec.len())));
        }
        let sample_id = rec[0].to_string();
        if !seen.insert(sample_id.clone()) {
            return Err(fail(format!("duplicate sample_id `{sample_id}`")));
        }
        let width: usize = rec[1]
            .parse()
            .map_err(|_| fail(format!("non-integer width `{}`", &rec[1])))?;
        let members: Vec<usize> = if rec[2].is_empty() {
            Vec::new()
        } else {
            rec[2]
                .split(';')
                .map(|name| {
                    ls.index_of(name)
                        .ok_or_else(|| fail(format!("unknown class name `{name}`")))
                })
                .collect::<Result<_>>()?
        };
        let set = PredictionSet::new(sample_id, members);
        if set.width() != width {
            return Err(fail(format!(
                "width column says {width} but members list has {} distinct classes",
                set.width()
            )));
        }
        sets.push(set);
    }
    Ok(sets)
}

// ---------------------------------------------------------------------
// Predictor JSON
// ---------------------------------------------------------------------

/// `q_hat` as stored in predictor JSON: a number, or the string `"inf"`
/// for the +∞ sentinel.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum QHatField {
    Num(f64),
    Sentinel(String),
}

/// JSON document form of a [`CalibratedPredictor`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PredictorDoc {
    pub method: String,
    pub alpha: f64,
    pub q_hat: QHatField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_reg: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive_part: Option<bool>,
    pub n_cal: usize,
    pub classes: Vec<String>,
}

impl PredictorDoc {
    pub fn from_predictor(p: &CalibratedPredictor) -> Self {
        let (lambda, k_reg, positive_part) = match &p.method {
            ConformalMethod::Raps(r) => (
                Some(r.lambda),
                Some(r.k_reg),
                if r.positive_part { Some(true) } else { None },
            ),
            _ => (None, None, None),
        };
        PredictorDoc {
            method: p.method.kind().as_str().to_string(),
            alpha: p.alpha,
            q_hat: if p.q_hat.is_infinite() {
                QHatField::Sentinel("inf".to_string())
            } else {
                QHatField::Num(p.q_hat)
            },
            lambda,
            k_reg,
            positive_part,
            n_cal: p.n_cal,
            classes: p.label_space.classes().to_vec(),
        }
    }

    /// Validates the document and rebuilds the predictor.
    pub fn into_predictor(self) -> std::result::Result<CalibratedPredictor, String> {
        let label_space =
            LabelSpace::new(self.classes).map_err(|e| format!("classes: {e}"))?;
        let q_hat = match self.q_hat {
            QHatField::Num(v) if v.is_finite() && v >= 0.0 => v,
            QHatField::Num(v) => return Err(format!("q_hat {v} must be finite and non-negative")),
            QHatField::Sentinel(s) if s == "inf" => f64::INFINITY,
            QHatField::Sentinel(s) => return Err(format!("q_hat string must be `inf`, got `{s}`")),
        };
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(format!("alpha {} must lie in (0, 1)", self.alpha));
        }
        if self.n_cal == 0 {
            return Err("n_cal must be positive".to_string());
        }
        let method = match self.method.as_str() {
            "raps" => {
                let lambda = self.lambda.ok_or("raps predictor is missing `lambda`")?;
                let k_reg = self.k_reg.ok_or("raps predictor is missing `k_reg`")?;
                if !lambda.is_finite() || lambda < 0.0 {
                    return Err(format!("lambda {lambda} must be finite and non-negative"));
                }
                if k_reg == 0 || k_reg > label_space.k() {
                    return Err(format!(
                        "k_reg {k_reg} must lie in [1, {}]",
                        label_space.k()
                    ));
                }
                ConformalMethod::Raps(RapsParams {
                    lambda,
                    k_reg,
                    positive_part: self.positive_part.unwrap_or(false),
                })
            }
            "lac" | "aps" => {
                if self.lambda.is_some() || self.k_reg.is_some() || self.positive_part.is_some() {
                    return Err(format!(
                        "`{}` predictor must not carry lambda/k_reg/positive_part",
                        self.method
                    ));
                }
                if self.method == "lac" {
                    if q_hat.is_finite() && q_hat > 1.0 {
                        return Err(format!("lac q_hat {q_hat} must lie in [0, 1]"));
                    }
                    ConformalMethod::Lac
                } else {
                    ConformalMethod::Aps
                }
            }
            other => return Err(format!("unknown method `{other}`")),
        };
        Ok(CalibratedPredictor {
            method,
            alpha: self.alpha,
            q_hat,
            n_cal: self.n_cal,
            label_space,
        })
    }
}

/// Serializes a predictor to pretty JSON.
pub fn predictor_to_json(p: &CalibratedPredictor) -> Result<String> {
    Ok(serde_json::to_string_pretty(&PredictorDoc::from_predictor(p))? + "\n")
}

/// Parses predictor JSON and validates its invariants.
pub fn predictor_from_json(json: &str, origin: &str) -> Result<CalibratedPredictor> {
    let doc: PredictorDoc = serde_json::from_str(json)?;
    doc.into_predictor()
        .map_err(|msg| Error::parse(origin, None, msg))
}

pub fn write_predictor(path: &Path, p: &CalibratedPredictor) -> Result<()> {
    write_bytes(path, predictor_to_json(p)?.as_bytes())
}

pub fn read_predictor(path: &Path) -> Result<CalibratedPredictor> {
    let json = read_to_string(path)?;
    predictor_from_json(&json, &display(path))
}

// ---------------------------------------------------------------------
// Consensus CSV: sample_id,consensus,votes_<class0>,…
// ---------------------------------------------------------------------

/// Renders the consensus table: per sample, the majority label (or
/// `EXCLUDED`) and the per-class vote counts.
pub fn consensus_csv(rows: &[(String, VoteOutcome, Vec<usize>)], ls: &LabelSpace) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["sample_id".to_string(), "consensus".to_string()];
    header.extend(ls.classes().iter().map(|c| format!("votes_{c}")));
    w.write_record(&header).expect("vec writer never fails");
    for (sample_id, outcome, votes) in rows {
        let label = match outcome {
            VoteOutcome::Consensus(c) => ls.name(*c).to_string(),
            VoteOutcome::Excluded => "EXCLUDED".to_string(),
        };
        let mut row = vec![sample_id.clone(), label];
        row.extend(votes.iter().map(|v| v.to_string()));
        w.write_record(&row).expect("vec writer never fails");
    }
    String::from_utf8(w.into_inner().expect("vec writer never fails"))
        .expect("csv output is UTF-8")
}

/// Writes the consensus table to a file.
pub fn write_consensus_csv(
    path: &Path,
    rows: &[(String, VoteOutcome, Vec<usize>)],
    ls: &LabelSpace,
) -> Result<()> {
    write_bytes(path, consensus_csv(rows, ls).as_bytes())
}

/// Parses a consensus table; the `votes_<class>` columns define the label
/// space. `EXCLUDED` rows are dropped from the returned map.
pub fn parse_consensus_csv(path: &Path) -> Result<(BTreeMap<String, usize>, LabelSpace)> {
    let mut rdr = open_reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let fields: Vec<&str> = headers.iter().collect();
    let bad_header = |msg: String| Error::parse(display(path), Some(1), msg);
    if fields.len() < 4 || fields[0] != "sample_id" || fields[1] != "consensus" {
        return Err(bad_header(format!(
            "expected header `sample_id,consensus,votes_<class>,…`, got `{}`",
            fields.join(",")
        )));
    }
    let mut names = Vec::new();
    for f in &fields[2..] {
        match f.strip_prefix("votes_") {
            Some(name) if !name.is_empty() => names.push(name.to_string()),
            _ => return Err(bad_header(format!("expected a `votes_<class>` column, got `{f}`"))),
        }
    }
    let ls = LabelSpace::new(names).map_err(|e| bad_header(e.to_string()))?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line());
        let fail = |msg: String| Error::parse(display(path), line, msg);
        if rec.len() != 2 + ls.k() {
            return Err(fail(format!("expected {} fields, got {}", 2 + ls.k(), rec.len())));
        }
        let (sample_id, label) = (&rec[0], &rec[1]);
        if label == "EXCLUDED" {
            continue;
        }
        let class = ls
            .index_of(label)
            .ok_or_else(|| fail(format!("unknown class name `{label}`")))?;
        if out.insert(sample_id.to_string(), class).is_some() {
            return Err(fail(format!("duplicate sample_id `{sample_id}`")));
        }
    }
    Ok((out, ls))
}

// ---------------------------------------------------------------------
// Noise-series manifest (JSON) and loading
// ---------------------------------------------------------------------

/// One noise level: its σ and the softmax CSV holding the level's data.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseManifestEntry {
    pub sigma: f64,
    pub path: String,
}

/// Writes a noise manifest; `path` entries should be relative to the
/// manifest's directory.
pub fn write_noise_manifest(path: &Path, entries: &[NoiseManifestEntry]) -> Result<()> {
    write_bytes(path, (serde_json::to_string_pretty(entries)? + "\n").as_bytes())
}

/// Reads a noise manifest and resolves each level path against the
/// manifest's directory.
pub fn read_noise_manifest(path: &Path) -> Result<Vec<(f64, PathBuf)>> {
    let json = read_to_string(path)?;
    let entries: Vec<NoiseManifestEntry> = serde_json::from_str(&json)?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    Ok(entries
        .into_iter()
        .map(|e| {
            let p = PathBuf::from(&e.path);
            let resolved = if p.is_absolute() { p } else { base.join(p) };
            (e.sigma, resolved)
        })
        .collect())
}

/// Loads every level of a noise manifest into a validated series. All
/// levels must agree on class names.
pub fn load_noise_series(manifest_path: &Path) -> Result<(NoiseSeries, LabelSpace)> {
    let entries = read_noise_manifest(manifest_path)?;
    if entries.is_empty() {
        return Err(Error::InvalidSeries(format!(
            "manifest {} lists no levels",
            manifest_path.display()
        )));
    }
    let mut shared_ls: Option<LabelSpace> = None;
    let mut levels = Vec::with_capacity(entries.len());
    for (sigma, level_path) in entries {
        let (dataset, ls) = parse_softmax_csv(&level_path)?;
        match &shared_ls {
            None => shared_ls = Some(ls),
            Some(existing) if *existing == ls => {}
            Some(existing) => {
                return Err(Error::InvalidSeries(format!(
                    "level sigma={sigma} classes {:?} differ from {:?}",
                    ls.classes(),
                    existing.classes()
                )))
            }
        }
        levels.push((sigma, dataset));
    }
    Ok((NoiseSeries::new(levels)?, shared_ls.expect("at least one level")))
}

// ---------------------------------------------------------------------
// Report emitters
// ---------------------------------------------------------------------

/// Sweep table as CSV with the fixed column order.
pub fn report_to_csv(report: &EvaluationReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "method",
        "model",
        "alpha",
        "cc",
        "ssc",
        "mean_width",
        "mean_precision",
        "mean_recall",
        "mean_f1",
        "mean_jaccard",
        "exact_match",
    ])
    .expect("vec writer never fails");
    for r in &report.rows {
        w.write_record([
            r.method.clone(),
            r.model.clone(),
            r.alpha.to_string(),
            r.cc.to_string(),
            r.ssc.to_string(),
            r.mean_width.to_string(),
            r.mean_precision.to_string(),
            r.mean_recall.to_string(),
            r.mean_f1.to_string(),
            r.mean_jaccard.to_string(),
            r.exact_match.to_string(),
        ])
        .expect("vec writer never fails");
    }
    String::from_utf8(w.into_inner().expect("vec writer never fails"))
        .expect("csv output is UTF-8")
}

/// Sweep table as a pretty JSON array of row objects.
pub fn report_to_json(report: &EvaluationReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(&report.rows)? + "\n")
}

/// Single-evaluation summary (one predictor's sets) as `metric,value`
/// rows: coverage, per-size groups, then agreement.
pub fn evaluation_summary_csv(cov: &CoverageReport, agr: &AgreementReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut push = |metric: String, value: String| {
        w.write_record([metric, value]).expect("vec writer never fails");
    };
    push("metric".into(), "value".into());
    push("cc".into(), cov.cc.to_string());
    push("ssc".into(), cov.ssc.to_string());
    push("mean_width".into(), cov.mean_width.to_string());
    for (size, group) in &cov.per_size_coverage {
        push(format!("size_{size}_coverage"), group.coverage.to_string());
        push(format!("size_{size}_count"), group.count.to_string());
    }
    push("mean_precision".into(), agr.mean_precision.to_string());
    push("mean_recall".into(), agr.mean_recall.to_string());
    push("mean_f1".into(), agr.mean_f1.to_string());
    push("mean_jaccard".into(), agr.mean_jaccard.to_string());
    push("exact_match".into(), agr.exact_match_accuracy.to_string());
    push("n_samples".into(), agr.n.to_string());
    push("n_f1_undefined".into(), agr.n_f1_undefined.to_string());
    String::from_utf8(w.into_inner().expect("vec writer never fails"))
        .expect("csv output is UTF-8")
}

/// Per-level width statistics as CSV:
/// `sigma,mean_width,full_set_fraction,width_0,…,width_K`.
pub fn width_profile_csv(profile: &WidthProfile) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let k_plus_1 = profile
        .per_level
        .first()
        .map(|l| l.width_histogram.len())
        .unwrap_or(0);
    let mut header = vec![
        "sigma".to_string(),
        "mean_width".to_string(),
        "full_set_fraction".to_string(),
    ];
    header.extend((0..k_plus_1).map(|wd| format!("width_{wd}")));
    w.write_record(&header).expect("vec writer never fails");
    for level in &profile.per_level {
        let mut row = vec![
            level.sigma.to_string(),
            level.mean_width.to_string(),
            level.full_set_fraction.to_string(),
        ];
        row.extend(level.width_histogram.iter().map(|c| c.to_string()));
        w.write_record(&row).expect("vec writer never fails");
    }
    String::from_utf8(w.into_inner().expect("vec writer never fails"))
        .expect("csv output is UTF-8")
}

/// Width profile (levels plus trend) as pretty JSON.
pub fn width_profile_json(profile: &WidthProfile) -> Result<String> {
    Ok(serde_json::to_string_pretty(profile)? + "\n")
}

/// OOD comparison as pretty JSON.
pub fn ood_comparison_json(cmp: &OodComparison) -> Result<String> {
    Ok(serde_json::to_string_pretty(cmp)? + "\n")
}

/// Kappa result as a one-row CSV.
pub fn kappa_csv(r: &KappaResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kappa", "ci_low", "ci_high", "n_items", "m_raters", "n_excluded"])
        .expect("vec writer never fails");
    w.write_record([
        r.kappa.to_string(),
        r.ci_low.to_string(),
        r.ci_high.to_string(),
        r.n_items.to_string(),
        r.m_raters.to_string(),
        r.n_excluded.to_string(),
    ])
    .expect("vec writer never fails");
    String::from_utf8(w.into_inner().expect("vec writer never fails"))
        .expect("csv output is UTF-8")
}

/// Kappa result as pretty JSON.
pub fn kappa_json(r: &KappaResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(r)? + "\n")
}

// ---------------------------------------------------------------------
// Filesystem helpers
// ---------------------------------------------------------------------

/// Reads a file into a string, annotating failures with the path.
pub fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::file_io(display(path), e))
}

/// Writes bytes to a file, annotating failures with the path.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::file_io(display(path), e))
}
