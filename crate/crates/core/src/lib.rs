//! Stability-based confounder selection with randomization inference after
//! optimal full matching on the propensity score.
//!
//! Candidate covariates are ordered by forward double selection, a doubly
//! robust marginal effect is estimated for every nested subset, and the
//! subset whose estimates are most stable relative to the full adjustment set
//! is selected. Units are then fully matched on the propensity score of the
//! selected covariates and the sharp null of no effect is tested within the
//! matched strata.

pub mod data;
pub mod effect;
pub mod error;
pub mod glm;
mod linalg;
pub mod matching;
pub mod ordering;
pub mod pipeline;
pub mod randtest;
pub mod rng;
pub mod simulate;
pub mod stability;

pub use data::{ingest_csv, ingest_reader, Dataset, IngestReport, OutcomeKind};
pub use effect::{diff_variance, dr_effect, ipt_weights, ols_effect, DiffVariance, EffectEstimate, EstimatorKind};
pub use error::{Error, Result};
pub use glm::{fit_linear, fit_logistic, wald_test, DesignMatrix, FittedGlm, GlmConfig, Link, WaldTest};
pub use matching::{full_match, ps_for_subset, DistanceKind, FullMatch, MatchConfig};
pub use ordering::{nested_subsets, order_covariates, CovariateOrdering, OrbitSelection, OrderingConfig};
pub use pipeline::{run_pipeline, PipelineConfig, PipelineReport, TrajectoryRow};
pub use randtest::{exact_pvalue, randomization_pvalue, test_statistic, RandTestResult};
pub use simulate::{registry, run_study, scenario, Method, Scenario, StudyConfig, StudyOutput};
pub use stability::{
    assess_stability, cochran_q, select_stable_orbit, std_diff_trajectory, StabilityConfig, StabilityReport,
};
