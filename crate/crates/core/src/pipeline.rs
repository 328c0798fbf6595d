//! End-to-end analysis of one dataset: order, estimate per orbit, select the
//! most stable orbit, match on its propensity score and test the sharp null.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::effect::{estimate, EffectEstimate, EstimatorKind, DEFAULT_WEIGHT_WARN};
use crate::error::{Error, Result};
use crate::matching::{full_match, ps_for_subset, FullMatch, MatchConfig};
use crate::ordering::{order_covariates, CovariateOrdering, OrderingConfig};
use crate::randtest::{randomization_pvalue, RandTestResult};
use crate::stability::{assess_stability, StabilityConfig, StabilityReport, DEFAULT_WINDOW_WIDTH};

pub const PIPELINE_DRAWS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub window_width: usize,
    pub benchmark_orbit: Option<usize>,
    pub band: Option<f64>,
    pub draws: usize,
    pub alpha: f64,
    pub estimator: EstimatorKind,
    pub pinned_high: Vec<usize>,
    pub pinned_low: Vec<usize>,
    pub seed: u64,
    pub weight_warn: f64,
    pub matching: MatchConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window_width: DEFAULT_WINDOW_WIDTH,
            benchmark_orbit: None,
            band: None,
            draws: PIPELINE_DRAWS,
            alpha: 0.05,
            estimator: EstimatorKind::DoublyRobustStandardization,
            pinned_high: Vec::new(),
            pinned_low: Vec::new(),
            seed: 0,
            weight_warn: DEFAULT_WEIGHT_WARN,
            matching: MatchConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_width < 3 || self.window_width.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("window width {} must be odd and at least 3", self.window_width)));
        }
        if self.draws < 1 {
            return Err(Error::InvalidInput("randomization draws must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha {} not in (0, 1)", self.alpha)));
        }
        Ok(())
    }

    pub fn ordering(&self) -> OrderingConfig {
        OrderingConfig {
            pinned_high: self.pinned_high.clone(),
            pinned_low: self.pinned_low.clone(),
            outcome_link: None,
        }
    }

    pub fn stability(&self) -> StabilityConfig {
        StabilityConfig { window_width: self.window_width, benchmark: self.benchmark_orbit, band: self.band }
    }
}

/// Ordering, per-orbit estimates and the stability assessment.
#[derive(Debug, Clone)]
pub struct Selection {
    pub ordering: CovariateOrdering,
    pub estimates: Vec<EffectEstimate>,
    pub stability: StabilityReport,
}

impl Selection {
    pub fn selected_subset(&self) -> Vec<usize> {
        self.ordering.order[..self.stability.selected_orbit].to_vec()
    }

    pub fn selected_estimate(&self) -> &EffectEstimate {
        &self.estimates[self.stability.selected_orbit - 1]
    }

    /// One row per orbit: the covariate added, the estimate, its standardized difference and Q.
    pub fn trajectory(&self, labels: &[String]) -> Vec<TrajectoryRow> {
        let st = &self.stability;
        self.ordering
            .order
            .iter()
            .enumerate()
            .map(|(idx, &k)| TrajectoryRow {
                orbit: idx + 1,
                covariate_added: labels[k].clone(),
                psi_hat: st.psi_hats[idx],
                std_diff: st.std_diffs[idx],
                q: st.q(idx + 1),
            })
            .collect()
    }
}

pub fn select_confounders(data: &Dataset, config: &PipelineConfig) -> Result<Selection> {
    if data.num_covariates() == 0 {
        return Err(Error::InvalidInput("dataset has no covariates".into()));
    }
    let ordering = order_covariates(data, &config.ordering()).map_err(|e| e.in_stage("ordering"))?;
    let estimates = orbit_estimates(data, &ordering, config.estimator, config.weight_warn)?;
    let stability = assess_stability(&estimates, &config.stability()).map_err(|e| e.in_stage("stability"))?;
    Ok(Selection { ordering, estimates, stability })
}

/// Effect estimate for every nested subset of the ordering.
pub fn orbit_estimates(
    data: &Dataset,
    ordering: &CovariateOrdering,
    kind: EstimatorKind,
    weight_warn: f64,
) -> Result<Vec<EffectEstimate>> {
    (1..=ordering.len())
        .into_par_iter()
        .map(|j| estimate(data, &ordering.order[..j], kind, weight_warn).map_err(|e| e.in_stage("effect")))
        .collect()
}

/// Full matching on the propensity score of `subset` and the randomization test.
pub fn match_and_test(
    data: &Dataset,
    subset: &[usize],
    matching: &MatchConfig,
    draws: usize,
    seed: u64,
) -> Result<(FullMatch, RandTestResult)> {
    let ps = ps_for_subset(data, subset).map_err(|e| e.in_stage("propensity"))?;
    let m = full_match(&ps.ps, data.treatment(), matching).map_err(|e| e.in_stage("matching"))?;
    let test = randomization_pvalue(&m, data.treatment(), data.outcome(), draws, seed)
        .map_err(|e| e.in_stage("randomization test"))?;
    Ok((m, test))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub orbit: usize,
    pub covariate_added: String,
    pub psi_hat: f64,
    pub std_diff: Option<f64>,
    pub q: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n: usize,
    pub num_covariates: usize,
    pub ordered_covariates: Vec<String>,
    pub trajectory: Vec<TrajectoryRow>,
    pub orbit_std_errors: Vec<f64>,
    pub window_width: usize,
    pub benchmark_orbit: usize,
    pub selected_orbit: usize,
    pub selected_covariates: Vec<String>,
    pub effect_estimate: f64,
    pub effect_std_error: f64,
    pub all_covariates_estimate: f64,
    pub empty_estimate: f64,
    pub randomization: RandTestResult,
    pub rejected: bool,
    pub num_strata: usize,
    pub matching_distance: f64,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub strata: Option<FullMatch>,
}

pub fn run_pipeline(data: &Dataset, config: &PipelineConfig) -> Result<PipelineReport> {
    config.validate()?;
    let selection = select_confounders(data, config)?;
    let subset = selection.selected_subset();
    let (m, test) = match_and_test(data, &subset, &config.matching, config.draws, config.seed)?;
    let empty = estimate(data, &[], config.estimator, config.weight_warn).map_err(|e| e.in_stage("effect"))?;

    let labels = data.labels();
    let st = &selection.stability;
    let trajectory = selection.trajectory(labels);

    let mut notes = st.notes.clone();
    for o in &selection.ordering.per_orbit {
        if !o.unfittable.is_empty() {
            notes.push(format!("orbit {}: {} candidate(s) unfittable", o.orbit, o.unfittable.len()));
        }
    }
    let chosen = selection.selected_estimate();
    if chosen.max_weight > config.weight_warn {
        let msg = format!("largest inverse probability weight at the selected orbit is {:.1}", chosen.max_weight);
        log::warn!("{msg}");
        notes.push(msg);
    }
    if chosen.ps_separation {
        notes.push("propensity model for the selected orbit shows separation".into());
    }

    Ok(PipelineReport {
        n: data.n(),
        num_covariates: data.num_covariates(),
        ordered_covariates: selection.ordering.order.iter().map(|&k| labels[k].clone()).collect(),
        trajectory,
        orbit_std_errors: selection.estimates.iter().map(|e| e.std_error()).collect(),
        window_width: st.window_width,
        benchmark_orbit: st.benchmark,
        selected_orbit: st.selected_orbit,
        selected_covariates: subset.iter().map(|&k| labels[k].clone()).collect(),
        effect_estimate: chosen.psi_hat,
        effect_std_error: chosen.std_error(),
        all_covariates_estimate: selection.estimates.last().map_or(f64::NAN, |e| e.psi_hat),
        empty_estimate: empty.psi_hat,
        rejected: test.p_value <= config.alpha,
        randomization: test,
        num_strata: m.num_strata(),
        matching_distance: m.total_distance,
        notes,
        strata: Some(m),
    })
}

impl PipelineReport {
    /// The summary rows printed under the covariate table: estimate (s.e.), p-value, selected count.
    pub fn summary_lines(&self) -> Vec<String> {
        vec![
            format!("Effect estimate (s.e.): {:.3} ({:.3})", self.effect_estimate, self.effect_std_error),
            format!("Randomization p-value: {:.3}", self.randomization.p_value),
            format!("Selected covariates: {} of {}", self.selected_orbit, self.num_covariates),
        ]
    }
}

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory_csv<R: Read>(input: R) -> Result<Vec<TrajectoryRow>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
