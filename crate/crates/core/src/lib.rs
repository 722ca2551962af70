//! Split-conformal prediction sets over classifier softmax outputs, with
//! coverage and multi-annotator agreement evaluation.
//!
//! The library is model-agnostic: it consumes per-sample softmax vectors
//! (CSV) produced by any upstream classifier and provides
//!
//! - **Calibration and prediction** ([`conformal`]): LAC, APS, and RAPS
//!   nonconformity scores, the finite-sample conformal quantile
//!   `q̂ = ⌈(1−α)(n+1)⌉`-th order statistic, and per-sample prediction
//!   sets with the marginal coverage guarantee `P(y ∈ C(x)) ≥ 1 − α`.
//! - **Evaluation** ([`metrics`]): conventional coverage (CC), size-
//!   stratified coverage (SSC), mean width, and agreement of sets against
//!   full expert annotation sets (precision/recall/F1/Jaccard/exact match),
//!   plus a (method, α) sweep driver.
//! - **Consensus and inter-rater agreement** ([`consensus`]): majority
//!   voting with tie exclusion and Fleiss' kappa with a seeded bootstrap
//!   confidence interval.
//! - **Uncertainty harnesses** ([`uncertainty`]): aleatoric capture (set
//!   width vs. unique expert labels) and epistemic width trends across
//!   noise-level series and on out-of-distribution data.
//! - **A synthetic oracle** ([`synth`]): seeded generation of softmax
//!   outputs whose probabilities are the true posterior by construction,
//!   with simulated annotators, for end-to-end verification.
//! - **File formats** ([`io`]): CSV/JSON interchange for all of the above.

pub mod conformal;
pub mod consensus;
pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod uncertainty;

pub use conformal::{
    calibrate, conformal_quantile, predict_set, predict_sets, CalibratedPredictor,
    ConformalMethod, MethodKind, MethodSpec, RapsParams, SortedProbs, RAPS_LAMBDA_GRID,
    RAPS_MIN_CALIBRATION,
};
pub use consensus::{fleiss_kappa, majority_vote, vote_counts, KappaResult, VoteOutcome};
pub use error::{Error, Result};
pub use metrics::{
    agreement_metrics, coverage_metrics, sweep, AgreementReport, CoverageReport,
    EvaluationReport, EvaluationRow, SizeGroup, SweepConfig, DEFAULT_ALPHAS,
};
pub use model::{
    merge_labels, validate_dataset, AnnotationSet, Dataset, LabelSpace, MergeTable,
    PredictionSet, SoftmaxRecord, Violation,
};
pub use synth::{
    generate, make_noise_series, uniform_softmax_dataset, GenerationManifest, GeneratorSpec,
    RNG_ALGORITHM,
};
pub use uncertainty::{
    aleatoric_capture, ood_dataset_compare, ood_width_profile, spearman, LevelStats,
    NoiseSeries, OodComparison, WidthProfile,
};
