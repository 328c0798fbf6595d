//! Marginal treatment-effect estimators per covariate subset and their
//! influence functions.
//!
//! The default estimator is doubly robust standardization: a logistic
//! propensity model supplies inverse probability of treatment weights, an
//! outcome regression is fitted with those weights, and the standardized
//! contrast is corrected by the weighted residuals. Differences between two
//! subsets are scaled by the sample variance of the paired influence-value
//! differences.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::glm::{fit_linear, fit_logistic, FittedGlm, Link};

/// Weights above this trigger a warning; nothing is trimmed.
pub const DEFAULT_WEIGHT_WARN: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    DoublyRobustStandardization,
    OlsLinear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffectEstimate {
    /// Orbit (subset size) this estimate belongs to; 0 for the empty subset.
    pub orbit: usize,
    pub psi_hat: f64,
    pub influence: Vec<f64>,
    pub kind: EstimatorKind,
    /// Inverse probability of treatment weights (empty for the OLS estimator).
    pub weights: Vec<f64>,
    pub max_weight: f64,
    /// Propensity model was separated (non-finite MLE).
    pub ps_separation: bool,
}

impl EffectEstimate {
    pub fn n(&self) -> usize {
        self.influence.len()
    }

    /// `sqrt(Vhat / n)` where `Vhat` is the sample variance of the influence values.
    pub fn std_error(&self) -> f64 {
        let n = self.n() as f64;
        let ss: f64 = self.influence.iter().map(|v| v * v).sum();
        (ss / (n - 1.0) / n).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffVariance {
    pub orbit_j: usize,
    pub orbit_k: usize,
    /// Variance of `sqrt(n) (psi_j - psi_k)`.
    pub variance: f64,
    /// `(psi_j - psi_k) / sqrt(variance / n)`; `None` when the variance is zero.
    pub std_diff: Option<f64>,
}

/// `A/ps + (1-A)/(1-ps)` per unit.
pub fn ipt_weights(treatment: &[u8], ps: &[f64]) -> Result<Vec<f64>> {
    if treatment.len() != ps.len() {
        return Err(Error::InvalidInput(format!("{} treatments but {} propensities", treatment.len(), ps.len())));
    }
    treatment
        .iter()
        .zip(ps)
        .enumerate()
        .map(|(unit, (&a, &p))| {
            let w = if a == 1 { 1.0 / p } else { 1.0 / (1.0 - p) };
            if !(p > 0.0 && p < 1.0) || !w.is_finite() {
                Err(Error::NonFiniteWeight { unit, ps: p })
            } else {
                Ok(w)
            }
        })
        .collect()
}

fn outcome_link(data: &Dataset) -> Link {
    match data.outcome_kind() {
        OutcomeKind::Continuous => Link::Identity,
        OutcomeKind::Binary => Link::Logit,
    }
}

/// Logistic propensity model on `subset` (with intercept).
pub fn fit_propensity(data: &Dataset, subset: &[usize]) -> Result<FittedGlm> {
    let x = data.treatment_design(subset)?;
    fit_logistic(data.treatment_f64(), &x, None)
}

/// Doubly robust standardized effect with covariates `subset`.
pub fn dr_effect(data: &Dataset, subset: &[usize]) -> Result<EffectEstimate> {
    dr_effect_with(data, subset, DEFAULT_WEIGHT_WARN)
}

pub fn dr_effect_with(data: &Dataset, subset: &[usize], weight_warn: f64) -> Result<EffectEstimate> {
    let n = data.n();
    let ps_fit = fit_propensity(data, subset)?;
    let x_treat = data.treatment_design(subset)?;
    let ps = ps_fit.predict(x_treat.values());
    let weights = ipt_weights(data.treatment(), &ps)?;
    let max_weight = weights.iter().cloned().fold(0.0, f64::max);
    if max_weight > weight_warn {
        log::debug!(
            "max inverse probability weight {max_weight:.1} exceeds {weight_warn} (subset size {})",
            subset.len()
        );
    }

    let x_out = data.outcome_design(subset)?;
    let y = data.outcome();
    let out_fit = match outcome_link(data) {
        Link::Identity => fit_linear(y, &x_out, Some(&weights)),
        Link::Logit => fit_logistic(y, &x_out, Some(&weights)),
    }?;
    // treatment is design column 1
    let m1 = out_fit.predict(&x_out.with_column_set(1, 1.0));
    let m0 = out_fit.predict(&x_out.with_column_set(1, 0.0));

    let a = data.treatment();
    let terms: Vec<f64> = (0..n)
        .map(|i| {
            let (sign, m_obs) = if a[i] == 1 { (1.0, m1[i]) } else { (-1.0, m0[i]) };
            sign * weights[i] * (y[i] - m_obs) + m1[i] - m0[i]
        })
        .collect();
    let psi_hat = terms.iter().sum::<f64>() / n as f64;
    let influence = terms.iter().map(|t| t - psi_hat).collect();

    Ok(EffectEstimate {
        orbit: subset.len(),
        psi_hat,
        influence,
        kind: EstimatorKind::DoublyRobustStandardization,
        weights,
        max_weight,
        ps_separation: ps_fit.separation,
    })
}

/// OLS coefficient of `A` in the linear outcome regression on `(A, L_subset)`,
/// with the influence function from linear treatment and outcome models.
pub fn ols_effect(data: &Dataset, subset: &[usize]) -> Result<EffectEstimate> {
    let n = data.n();
    let a = data.treatment_f64();
    let y = data.outcome();

    let x_treat = data.treatment_design(subset)?;
    let treat_fit = fit_linear(a, &x_treat, None)?;
    let a_hat = treat_fit.predict(x_treat.values());

    let x_out = data.outcome_design(subset)?;
    let out_fit = fit_linear(y, &x_out, None)?;
    let y_hat = out_fit.predict(x_out.values());
    let psi_hat = out_fit.coefficients[1];

    let denom = (0..n).map(|i| a[i] * (a[i] - a_hat[i])).sum::<f64>() / n as f64;
    if denom.abs() < 1e-12 {
        return Err(Error::DegenerateDesign("treatment is explained exactly by the covariates".into()));
    }
    let influence = (0..n).map(|i| (a[i] - a_hat[i]) * (y[i] - y_hat[i]) / denom).collect();

    Ok(EffectEstimate {
        orbit: subset.len(),
        psi_hat,
        influence,
        kind: EstimatorKind::OlsLinear,
        weights: Vec::new(),
        max_weight: f64::NAN,
        ps_separation: false,
    })
}

pub fn estimate(data: &Dataset, subset: &[usize], kind: EstimatorKind, weight_warn: f64) -> Result<EffectEstimate> {
    match kind {
        EstimatorKind::DoublyRobustStandardization => dr_effect_with(data, subset, weight_warn),
        EstimatorKind::OlsLinear => ols_effect(data, subset),
    }
}

/// Sample variance `(n-1)^{-1} sum (phi_j - phi_k)^2` and the standardized difference.
pub fn diff_variance(e_j: &EffectEstimate, e_k: &EffectEstimate) -> Result<DiffVariance> {
    if e_j.kind != e_k.kind {
        return Err(Error::InvalidInput("cannot contrast estimates of different kinds".into()));
    }
    if e_j.n() != e_k.n() {
        return Err(Error::InvalidInput(format!("estimates on {} and {} units", e_j.n(), e_k.n())));
    }
    let n = e_j.n() as f64;
    let ss: f64 = e_j.influence.iter().zip(&e_k.influence).map(|(a, b)| (a - b) * (a - b)).sum();
    let variance = ss / (n - 1.0);
    let std_diff = if variance > 0.0 { Some((e_j.psi_hat - e_k.psi_hat) / (variance / n).sqrt()) } else { None };
    Ok(DiffVariance { orbit_j: e_j.orbit, orbit_k: e_k.orbit, variance, std_diff })
}
