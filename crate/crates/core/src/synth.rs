//! Synthetic classifier-output generator with a known posterior.
//!
//! Each sample draws a true label `y` from the class prior and clean
//! logits `z = confidence·e_y + g` with `g` a standard normal vector. The
//! noise level `σ` enters as Gaussian logit noise *marginalized out*: the
//! emitted vector is the expected softmax under `z + σ·u`, `u ~ N(0, I)`,
//! taken in its standard closed form `softmax(z / √(1 + (π/8)σ²))` (the
//! probit approximation of the Gaussian-noise marginal). Marginalizing
//! matters: a single draw of `softmax(z + σu)` *sharpens* onto a random
//! class as `σ` grows, while the marginal flattens monotonically toward
//! uniform — for fixed `z`, `dH/dt = −t·Var_p(z) ≤ 0` along the inverse
//! temperature `t`, so per-sample entropy strictly increases with `σ`.
//!
//! Simulated annotators sample labels from the emitted vector itself,
//! which makes it the exact posterior by construction: empirical coverage
//! of conformal sets built on this data must land in the theoretical band,
//! and annotator disagreement tracks the ambiguity of `probs`.
//!
//! All draws come from a seeded ChaCha8 stream cipher RNG, so output is
//! bit-identical across runs and platforms. Base latents (`y`, `g`) live
//! on their own RNG stream, shared across noise levels of a series;
//! per-level annotator draws use a stream keyed by the level's `σ` bits.
//! Consequently a series level at `σ` equals `generate` with `noise_sigma`
//! set to `σ`, byte for byte.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{AnnotationSet, Dataset, LabelSpace, SoftmaxRecord};
use crate::uncertainty::NoiseSeries;

/// RNG identifier recorded in generation manifests.
pub const RNG_ALGORITHM: &str = "chacha8";

/// Parameters of one synthetic dataset.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeneratorSpec {
    /// Number of classes (≥ 2).
    pub k: usize,
    /// Number of samples (≥ 1).
    pub n: usize,
    /// Class prior; `k` non-negative entries summing to 1 within `1e-9`.
    pub class_prior: Vec<f64>,
    /// Logit scale of the true class (≥ 0; large values approach one-hot).
    pub confidence: f64,
    /// Standard deviation of the logit noise perturbation (≥ 0).
    pub noise_sigma: f64,
    /// Number of simulated annotators per sample (≥ 1).
    pub annotators: usize,
    pub seed: u64,
}

/// Manifest describing how a dataset was generated.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GenerationManifest {
    pub spec: GeneratorSpec,
    pub rng_algorithm: String,
    /// Noise levels, present when the output is a series.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<Vec<f64>>,
}

impl GeneratorSpec {
    /// Checks every field constraint.
    ///
    /// # Errors
    /// [`Error::InvalidGeneratorSpec`] naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidGeneratorSpec(msg));
        if self.k < 2 {
            return fail(format!("k must be at least 2, got {}", self.k));
        }
        if self.n == 0 {
            return fail("n must be at least 1".into());
        }
        if self.class_prior.len() != self.k {
            return fail(format!(
                "class_prior has {} entries but k = {}",
                self.class_prior.len(),
                self.k
            ));
        }
        if self.class_prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return fail("class_prior entries must be finite and non-negative".into());
        }
        let sum: f64 = self.class_prior.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return fail(format!("class_prior sums to {sum}, expected 1"));
        }
        if !self.confidence.is_finite() || self.confidence < 0.0 {
            return fail(format!(
                "confidence must be finite and non-negative, got {}",
                self.confidence
            ));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return fail(format!(
                "noise_sigma must be finite and non-negative, got {}",
                self.noise_sigma
            ));
        }
        if self.annotators == 0 {
            return fail("annotators must be at least 1".into());
        }
        Ok(())
    }

    /// The label space generated datasets use: the Bethesda names when
    /// `k = 4`, otherwise generic `c0..c{k-1}`.
    pub fn label_space(&self) -> LabelSpace {
        if self.k == 4 {
            LabelSpace::bethesda()
        } else {
            LabelSpace::new((0..self.k).map(|i| format!("c{i}")).collect::<Vec<_>>())
                .expect("generic class names are valid")
        }
    }

    /// Manifest for a single generated dataset.
    pub fn manifest(&self) -> GenerationManifest {
        GenerationManifest {
            spec: self.clone(),
            rng_algorithm: RNG_ALGORITHM.to_string(),
            sigmas: None,
        }
    }
}

/// Per-sample base latents, independent of the noise level.
struct Latents {
    /// True label index.
    y: usize,
    /// Standard-normal logit offsets.
    g: Vec<f64>,
}

/// Stream id for base latents; distinct from any `f64::to_bits` of a
/// finite σ (the all-ones pattern is a NaN).
const LATENT_STREAM: u64 = u64::MAX;

fn draw_latents(spec: &GeneratorSpec) -> Vec<Latents> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(LATENT_STREAM);
    (0..spec.n)
        .map(|_| {
            let y = sample_categorical(&mut rng, &spec.class_prior);
            let g: Vec<f64> = (0..spec.k).map(|_| rng.sample(StandardNormal)).collect();
            Latents { y, g }
        })
        .collect()
}

/// Inverse-CDF draw from a categorical distribution.
fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let x: f64 = rng.random();
    let mut cum = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cum += p;
        if x < cum {
            return i;
        }
    }
    probs.len() - 1
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn build_level(spec: &GeneratorSpec, latents: &[Latents], sigma: f64, name: String) -> Dataset {
    let mut ann_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    ann_rng.set_stream(sigma.to_bits());
    // Marginalizing z + σ·N(0, I) over the noise ≈ tempering by √(1 + πσ²/8).
    let temperature = (1.0 + std::f64::consts::PI / 8.0 * sigma * sigma).sqrt();
    let mut records = Vec::with_capacity(spec.n);
    let mut annotations = BTreeMap::new();
    for (i, lat) in latents.iter().enumerate() {
        let z: Vec<f64> = (0..spec.k)
            .map(|j| {
                let signal = if j == lat.y { spec.confidence } else { 0.0 };
                (signal + lat.g[j]) / temperature
            })
            .collect();
        let probs = softmax(&z);
        let sample_id = format!("s{i:06}");
        let labels: Vec<(String, usize)> = (1..=spec.annotators)
            .map(|a| (format!("a{a}"), sample_categorical(&mut ann_rng, &probs)))
            .collect();
        annotations.insert(
            sample_id.clone(),
            AnnotationSet {
                sample_id: sample_id.clone(),
                labels,
                consensus: None,
            },
        );
        records.push(SoftmaxRecord {
            sample_id,
            probs,
            true_label: Some(lat.y),
        });
    }
    Dataset {
        name,
        records,
        annotations: Some(annotations),
    }
}

/// Generates one dataset (records plus simulated annotations).
///
/// # Errors
/// Invalid spec.
pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    spec.validate()?;
    let latents = draw_latents(spec);
    Ok(build_level(
        spec,
        &latents,
        spec.noise_sigma,
        format!("synth-{}", spec.seed),
    ))
}

/// Generates a noise-level series sharing base latents across levels.
///
/// Level `σ` is byte-identical to `generate` with `noise_sigma = σ`; only
/// the logit perturbation magnitude varies between levels.
///
/// # Errors
/// Invalid spec, or `sigmas` not strictly increasing from 0.
pub fn make_noise_series(spec: &GeneratorSpec, sigmas: &[f64]) -> Result<NoiseSeries> {
    spec.validate()?;
    if sigmas.is_empty() {
        return Err(Error::InvalidSeries("sigma list is empty".into()));
    }
    if sigmas[0] != 0.0 {
        return Err(Error::InvalidSeries(format!(
            "sigma list must start at 0, got {}",
            sigmas[0]
        )));
    }
    if sigmas.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::InvalidSeries(
            "sigmas must be finite and non-negative".into(),
        ));
    }
    if sigmas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSeries(format!(
            "sigmas must be strictly increasing, got {sigmas:?}"
        )));
    }
    let latents = draw_latents(spec);
    let levels = sigmas
        .iter()
        .map(|&sigma| {
            let name = format!("synth-{}-sigma{}", spec.seed, sigma);
            (sigma, build_level(spec, &latents, sigma, name))
        })
        .collect();
    NoiseSeries::new(levels)
}

/// A dataset of `n` uniform softmax vectors over `k` classes — maximal
/// aleatoric ambiguity, useful as an out-of-distribution foil.
pub fn uniform_softmax_dataset(k: usize, n: usize, name: &str) -> Dataset {
    let p = 1.0 / k as f64;
    Dataset {
        name: name.to_string(),
        records: (0..n)
            .map(|i| SoftmaxRecord {
                sample_id: format!("u{i:06}"),
                probs: vec![p; k],
                true_label: None,
            })
            .collect(),
        annotations: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_dataset;

    fn base_spec() -> GeneratorSpec {
        GeneratorSpec {
            k: 4,
            n: 50,
            class_prior: vec![0.25; 4],
            confidence: 2.0,
            noise_sigma: 0.0,
            annotators: 3,
            seed: 42,
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = base_spec();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate(&base_spec()).unwrap();
        let b = generate(&GeneratorSpec {
            seed: 43,
            ..base_spec()
        })
        .unwrap();
        assert_ne!(a.records[0].probs, b.records[0].probs);
    }

    #[test]
    fn high_confidence_saturates_softmax_and_annotators() {
        let spec = GeneratorSpec {
            confidence: 50.0,
            n: 200,
            ..base_spec()
        };
        let d = generate(&spec).unwrap();
        let anns = d.annotations.as_ref().unwrap();
        for r in &d.records {
            let y = r.true_label.unwrap();
            assert!(r.probs[y] > 0.999, "probs not saturated: {:?}", r.probs);
            let uniq = anns[&r.sample_id].unique_labels();
            assert_eq!(uniq.len(), 1);
            assert!(uniq.contains(&y));
        }
    }

    #[test]
    fn zero_confidence_frequencies_match_prior() {
        let prior = [0.5, 0.3, 0.2];
        let spec = GeneratorSpec {
            k: 3,
            n: 4000,
            class_prior: prior.to_vec(),
            confidence: 0.0,
            noise_sigma: 0.0,
            annotators: 1,
            seed: 7,
        };
        let d = generate(&spec).unwrap();
        let mut counts = [0usize; 3];
        for r in &d.records {
            counts[r.true_label.unwrap()] += 1;
        }
        for (j, &p) in prior.iter().enumerate() {
            let freq = counts[j] as f64 / spec.n as f64;
            let three_sigma = 3.0 * (p * (1.0 - p) / spec.n as f64).sqrt();
            assert!(
                (freq - p).abs() <= three_sigma,
                "class {j}: freq {freq} vs prior {p} (3σ = {three_sigma})"
            );
        }
    }

    #[test]
    fn generated_dataset_is_violation_free() {
        let spec = base_spec();
        let d = generate(&spec).unwrap();
        let violations = validate_dataset(&d, &spec.label_space());
        assert!(violations.is_empty(), "{violations:?}");
        assert_eq!(d.records.len(), spec.n);
        assert_eq!(d.annotations.as_ref().unwrap().len(), spec.n);
        assert_eq!(d.name, "synth-42");
    }

    #[test]
    fn validate_rejects_bad_fields() {
        let cases = [
            GeneratorSpec { k: 1, class_prior: vec![1.0], ..base_spec() },
            GeneratorSpec { n: 0, ..base_spec() },
            GeneratorSpec { class_prior: vec![0.5, 0.5], ..base_spec() },
            GeneratorSpec { class_prior: vec![0.5, 0.3, 0.1, 0.2], ..base_spec() },
            GeneratorSpec { class_prior: vec![0.5, 0.5, 0.25, -0.25], ..base_spec() },
            GeneratorSpec { confidence: -1.0, ..base_spec() },
            GeneratorSpec { confidence: f64::NAN, ..base_spec() },
            GeneratorSpec { noise_sigma: -0.5, ..base_spec() },
            GeneratorSpec { annotators: 0, ..base_spec() },
        ];
        for spec in cases {
            assert!(
                matches!(spec.validate(), Err(Error::InvalidGeneratorSpec(_))),
                "accepted invalid spec {spec:?}"
            );
        }
        assert!(base_spec().validate().is_ok());
        assert!(GeneratorSpec { confidence: 0.0, ..base_spec() }.validate().is_ok());
    }

    #[test]
    fn label_space_uses_bethesda_names_for_four_classes() {
        assert_eq!(
            base_spec().label_space().classes(),
            ["NILM", "LSIL", "HSIL", "Artefact"]
        );
        let three = GeneratorSpec {
            k: 3,
            class_prior: vec![1.0 / 3.0; 3],
            ..base_spec()
        };
        assert_eq!(three.label_space().classes(), ["c0", "c1", "c2"]);
    }

    #[test]
    fn noise_series_levels_match_generate_at_each_sigma() {
        let spec = base_spec();
        let series = make_noise_series(&spec, &[0.0, 1.0]).unwrap();
        assert_eq!(series.levels().len(), 2);
        let (s0, d0) = &series.levels()[0];
        assert_eq!(*s0, 0.0);
        let mut base = generate(&spec).unwrap();
        base.name = d0.name.clone();
        assert_eq!(d0, &base);
        let (s1, d1) = &series.levels()[1];
        assert_eq!(*s1, 1.0);
        let mut noisy = generate(&GeneratorSpec {
            noise_sigma: 1.0,
            ..spec
        })
        .unwrap();
        noisy.name = d1.name.clone();
        assert_eq!(d1, &noisy);
    }

    fn mean_entropy(d: &Dataset) -> f64 {
        let total: f64 = d
            .records
            .iter()
            .map(|r| -r.probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>())
            .sum();
        total / d.records.len() as f64
    }

    #[test]
    fn noise_series_entropy_strictly_increases() {
        let spec = GeneratorSpec {
            n: 800,
            ..base_spec()
        };
        let series = make_noise_series(&spec, &[0.0, 1.0, 4.0]).unwrap();
        let entropies: Vec<f64> = series.levels().iter().map(|(_, d)| mean_entropy(d)).collect();
        assert!(
            entropies.windows(2).all(|w| w[0] < w[1]),
            "entropies not increasing: {entropies:?}"
        );
    }

    #[test]
    fn noise_series_rejects_bad_sigma_lists() {
        let spec = base_spec();
        for sigmas in [vec![], vec![0.5, 1.0], vec![0.0, 1.0, 1.0], vec![0.0, 2.0, 1.0]] {
            assert!(
                matches!(make_noise_series(&spec, &sigmas), Err(Error::InvalidSeries(_))),
                "accepted {sigmas:?}"
            );
        }
    }

    #[test]
    fn annotator_count_leaves_records_untouched() {
        let few = generate(&base_spec()).unwrap();
        let many = generate(&GeneratorSpec {
            annotators: 8,
            ..base_spec()
        })
        .unwrap();
        assert_eq!(few.records, many.records);
        let ann = &many.annotations.as_ref().unwrap()["s000000"];
        assert_eq!(ann.n_raters(), 8);
        assert_eq!(ann.labels[0].0, "a1");
        assert_eq!(ann.labels[7].0, "a8");
    }

    #[test]
    fn uniform_dataset_is_flat() {
        let d = uniform_softmax_dataset(5, 3, "ood");
        assert_eq!(d.records.len(), 3);
        for r in &d.records {
            assert_eq!(r.probs, vec![0.2; 5]);
            assert!(r.true_label.is_none());
        }
    }

    #[test]
    fn manifest_records_algorithm_and_spec() {
        let spec = base_spec();
        let m = spec.manifest();
        assert_eq!(m.rng_algorithm, "chacha8");
        assert_eq!(m.spec, spec);
        assert!(m.sigmas.is_none());
        let json = serde_json::to_string(&m).unwrap();
        assert!(!json.contains("sigmas"));
        let back: GenerationManifest = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
