//! Forward double-selection ordering of candidate covariates.
//!
//! At each orbit every remaining candidate is added in turn to the current
//! subset; a logistic treatment model and an outcome model are fitted and the
//! candidate's Wald p-values in both are recorded. The candidate with the
//! smallest `min(p_treatment, p_outcome)` is admitted next.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::glm::{fit_linear, fit_logistic, wald_test, Link};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct OrderingConfig {
    /// Covariates forced to the front of the ordering.
    pub pinned_high: Vec<usize>,
    /// Covariates forced to the back of the ordering.
    pub pinned_low: Vec<usize>,
    /// Outcome-model link; `None` picks identity for continuous and logit for binary outcomes.
    pub outcome_link: Option<Link>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitSelection {
    /// 1-based orbit index.
    pub orbit: usize,
    pub selected_covariate: usize,
    pub pv_treatment: f64,
    pub pv_outcome: f64,
    /// Treatment coefficient in the outcome model at this orbit (conditional effect).
    pub conditional_effect: f64,
    /// Candidates whose fits failed at this orbit (assigned p-values of 1).
    pub unfittable: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateOrdering {
    pub order: Vec<usize>,
    pub per_orbit: Vec<OrbitSelection>,
    pub pinned_high: Vec<usize>,
    pub pinned_low: Vec<usize>,
}

impl CovariateOrdering {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
struct CandidateScore {
    covariate: usize,
    pv_treatment: f64,
    pv_outcome: f64,
    conditional_effect: f64,
    fitted: bool,
}

impl CandidateScore {
    fn min_p(&self) -> f64 {
        self.pv_treatment.min(self.pv_outcome)
    }

    fn partner_p(&self) -> f64 {
        self.pv_treatment.max(self.pv_outcome)
    }
}

/// Ranks by smallest min-p, then smallest partner p-value, then lowest column index.
fn better(a: &CandidateScore, b: &CandidateScore) -> bool {
    let key = |c: &CandidateScore| (c.min_p(), c.partner_p(), c.covariate);
    let (am, ap, ai) = key(a);
    let (bm, bp, bi) = key(b);
    am.total_cmp(&bm).then(ap.total_cmp(&bp)).then(ai.cmp(&bi)).is_lt()
}

fn score_candidate(data: &Dataset, current: &[usize], k: usize, outcome_link: Link) -> CandidateScore {
    let mut subset = current.to_vec();
    subset.push(k);
    let unfit = CandidateScore {
        covariate: k,
        pv_treatment: 1.0,
        pv_outcome: 1.0,
        conditional_effect: f64::NAN,
        fitted: false,
    };

    let treat = data
        .treatment_design(&subset)
        .and_then(|x| fit_logistic(data.treatment_f64(), &x, None))
        .and_then(|fit| wald_test(&fit, fit.coefficients.len() - 1));
    let outcome = data.outcome_design(&subset).and_then(|x| {
        let fit = match outcome_link {
            Link::Identity => fit_linear(data.outcome(), &x, None),
            Link::Logit => fit_logistic(data.outcome(), &x, None),
        }?;
        let w = wald_test(&fit, fit.coefficients.len() - 1)?;
        Ok((w, fit.coefficients[1]))
    });
    match (treat, outcome) {
        (Ok(t), Ok((o, effect))) => CandidateScore {
            covariate: k,
            pv_treatment: t.p_value,
            pv_outcome: o.p_value,
            conditional_effect: effect,
            fitted: true,
        },
        (t, o) => {
            let reason = t.err().map(|e| e.to_string()).or(o.err().map(|e| e.to_string()));
            log::debug!("candidate {k} unfittable given {current:?}: {}", reason.unwrap_or_default());
            unfit
        }
    }
}

/// Order all covariates by decreasing adjustment priority.
pub fn order_covariates(data: &Dataset, config: &OrderingConfig) -> Result<CovariateOrdering> {
    let j_total = data.num_covariates();
    for &k in config.pinned_high.iter().chain(&config.pinned_low) {
        if k >= j_total {
            return Err(Error::InvalidInput(format!("pinned covariate {k} out of range (J = {j_total})")));
        }
    }
    if config.pinned_high.iter().any(|k| config.pinned_low.contains(k)) {
        return Err(Error::InvalidInput("a covariate cannot be pinned both high and low".into()));
    }
    let outcome_link = config.outcome_link.unwrap_or(match data.outcome_kind() {
        OutcomeKind::Continuous => Link::Identity,
        OutcomeKind::Binary => Link::Logit,
    });

    let mut high: Vec<usize> = config.pinned_high.clone();
    high.sort_unstable();
    high.dedup();
    let mut low: Vec<usize> = config.pinned_low.clone();
    low.sort_unstable();
    low.dedup();
    let mut free: Vec<usize> = (0..j_total).filter(|k| !high.contains(k) && !low.contains(k)).collect();

    let mut order = Vec::with_capacity(j_total);
    let mut per_orbit = Vec::with_capacity(j_total);

    for orbit in 1..=j_total {
        let pool: &mut Vec<usize> = if !high.is_empty() {
            &mut high
        } else if !free.is_empty() {
            &mut free
        } else {
            &mut low
        };

        let scores: Vec<CandidateScore> =
            pool.par_iter().map(|&k| score_candidate(data, &order, k, outcome_link)).collect();
        if scores.iter().all(|s| !s.fitted) && pool.len() > 1 {
            return Err(Error::Ordering { orbit });
        }
        let mut best = scores[0];
        for s in &scores[1..] {
            if better(s, &best) {
                best = *s;
            }
        }
        pool.retain(|&k| k != best.covariate);
        order.push(best.covariate);
        per_orbit.push(OrbitSelection {
            orbit,
            selected_covariate: best.covariate,
            pv_treatment: best.pv_treatment,
            pv_outcome: best.pv_outcome,
            conditional_effect: best.conditional_effect,
            unfittable: scores.iter().filter(|s| !s.fitted).map(|s| s.covariate).collect(),
        });
    }

    Ok(CovariateOrdering {
        order,
        per_orbit,
        pinned_high: config.pinned_high.clone(),
        pinned_low: config.pinned_low.clone(),
    })
}

/// Subset `j` (1-based) is the first `j` covariates of the ordering.
pub fn nested_subsets(ordering: &CovariateOrdering) -> Vec<Vec<usize>> {
    (1..=ordering.order.len()).map(|j| ordering.order[..j].to_vec()).collect()
}
