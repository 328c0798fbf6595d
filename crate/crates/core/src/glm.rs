//! Linear and logistic regression by maximum likelihood, with Wald tests.
//!
//! Logistic fits use iteratively reweighted least squares with step-halving.
//! Separated data does not abort the fit: the last iterate is returned with
//! `converged = false` and the separation flag set, so that callers which only
//! need p-values can carry on.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::{weighted_least_squares, WlsOutcome};

/// Linear predictors are clamped to this magnitude when mapped to probabilities,
/// keeping fitted probabilities (and reciprocal weights) finite under separation.
const ETA_CLAMP: f64 = 30.0;

/// Regression design with a leading intercept column.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    /// Validates that the first column is the intercept and no column is all zeros.
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != values.ncols() {
            return Err(Error::InvalidInput(format!("{} labels for {} columns", labels.len(), values.ncols())));
        }
        if values.ncols() == 0 || values.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidInput("first design column must be the intercept".into()));
        }
        for (j, label) in labels.iter().enumerate() {
            if values.column(j).iter().all(|&v| v == 0.0) {
                return Err(Error::InvalidInput(format!("design column `{label}` is identically zero")));
            }
        }
        Ok(DesignMatrix { values, labels })
    }

    /// Intercept followed by the given named columns.
    pub fn with_intercept<'a, I>(n: usize, columns: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a [f64])>,
    {
        let mut data = vec![1.0; n];
        let mut labels = vec!["(Intercept)".to_string()];
        for (label, col) in columns {
            if col.len() != n {
                return Err(Error::InvalidInput(format!("column `{label}` has length {} but n = {n}", col.len())));
            }
            data.extend_from_slice(col);
            labels.push(label.to_string());
        }
        let q = labels.len();
        DesignMatrix::new(DMatrix::from_vec(n, q, data), labels)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Copy of this design with column `j` replaced by a constant.
    pub fn with_column_set(&self, j: usize, value: f64) -> DMatrix<f64> {
        let mut m = self.values.clone();
        m.column_mut(j).fill(value);
        m
    }

    fn labels_of(&self, idx: &[usize]) -> Vec<String> {
        idx.iter().map(|&j| self.labels[j].clone()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Logit,
}

impl Link {
    /// Inverse link applied to a linear predictor.
    pub fn mean(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Logit => expit(eta.clamp(-ETA_CLAMP, ETA_CLAMP)),
        }
    }
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// IRLS controls for logistic fits.
#[derive(Debug, Clone, Copy)]
pub struct GlmConfig {
    pub max_iterations: usize,
    /// Converged once the largest absolute coefficient change falls below this.
    pub tolerance: f64,
    /// A non-converged fit whose largest coefficient exceeds this is flagged as separated.
    pub separation_coef_cap: f64,
    pub max_step_halvings: usize,
}

impl Default for GlmConfig {
    fn default() -> Self {
        GlmConfig { max_iterations: 50, tolerance: 1e-8, separation_coef_cap: 10.0, max_step_halvings: 20 }
    }
}

#[derive(Debug, Clone)]
pub struct FittedGlm {
    pub link: Link,
    pub coefficients: Vec<f64>,
    pub covariance: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    /// Set when the logistic likelihood appears monotone (no finite MLE).
    pub separation: bool,
    pub labels: Vec<String>,
}

impl FittedGlm {
    pub fn std_error(&self, j: usize) -> f64 {
        self.covariance[(j, j)].max(0.0).sqrt()
    }

    pub fn linear_predictor(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows()).map(|i| (0..x.ncols()).map(|j| x[(i, j)] * self.coefficients[j]).sum()).collect()
    }

    /// Fitted means on the rows of `x`.
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        self.linear_predictor(x).into_iter().map(|e| self.link.mean(e)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldTest {
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    /// Zero standard error: the p-value is 0 or 1 by convention.
    pub degenerate: bool,
}

fn check_weights(n: usize, weights: Option<&[f64]>) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::InvalidInput(format!("{} weights for {n} rows", w.len())));
        }
        if let Some(i) = w.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(format!("weight {i} is negative or non-finite: {}", w[i])));
        }
    }
    Ok(())
}

/// Ordinary (or weighted) least squares with model-based covariance `(X'WX)^{-1} s^2`.
pub fn fit_linear(y: &[f64], x: &DesignMatrix, weights: Option<&[f64]>) -> Result<FittedGlm> {
    let n = x.nrows();
    let q = x.ncols();
    if y.len() != n {
        return Err(Error::InvalidInput(format!("response length {} != {n} rows", y.len())));
    }
    if n < q {
        return Err(Error::InvalidInput(format!("n = {n} < q = {q}")));
    }
    check_weights(n, weights)?;

    let sol = match weighted_least_squares(x.values(), y, weights) {
        WlsOutcome::Solved(s) => s,
        WlsOutcome::RankDeficient(cols) => return Err(Error::SingularDesign { columns: x.labels_of(&cols) }),
    };
    let fitted = x.values() * nalgebra::DVector::from_column_slice(&sol.coefficients);
    let rss: f64 = (0..n)
        .map(|i| {
            let r = y[i] - fitted[i];
            weights.map_or(1.0, |w| w[i]) * r * r
        })
        .sum();
    let sigma2 = if n > q { rss / (n - q) as f64 } else { f64::NAN };

    Ok(FittedGlm {
        link: Link::Identity,
        coefficients: sol.coefficients,
        covariance: sol.xtwx_inv * sigma2,
        converged: true,
        iterations: 1,
        deviance: rss,
        separation: false,
        labels: x.labels().to_vec(),
    })
}

pub fn fit_logistic(y: &[f64], x: &DesignMatrix, weights: Option<&[f64]>) -> Result<FittedGlm> {
    fit_logistic_with(y, x, weights, &GlmConfig::default())
}

fn binomial_deviance(y: &[f64], mu: &[f64], w: Option<&[f64]>) -> f64 {
    let mut d = 0.0;
    for i in 0..y.len() {
        let wi = w.map_or(1.0, |w| w[i]);
        if wi == 0.0 {
            continue;
        }
        let yi = y[i];
        let mut term = 0.0;
        if yi > 0.0 {
            term += yi * (yi / mu[i]).ln();
        }
        if yi < 1.0 {
            term += (1.0 - yi) * ((1.0 - yi) / (1.0 - mu[i])).ln();
        }
        d += 2.0 * wi * term;
    }
    d
}

/// Logistic regression by IRLS.
pub fn fit_logistic_with(
    y: &[f64],
    x: &DesignMatrix,
    weights: Option<&[f64]>,
    config: &GlmConfig,
) -> Result<FittedGlm> {
    let n = x.nrows();
    let q = x.ncols();
    if y.len() != n {
        return Err(Error::InvalidInput(format!("response length {} != {n} rows", y.len())));
    }
    if n < q {
        return Err(Error::InvalidInput(format!("n = {n} < q = {q}")));
    }
    check_weights(n, weights)?;
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput("logistic response must be 0/1".into()));
    }
    let active = |i: usize| weights.is_none_or(|w| w[i] > 0.0);
    let ones = (0..n).filter(|&i| active(i) && y[i] == 1.0).count();
    let zeros = (0..n).filter(|&i| active(i) && y[i] == 0.0).count();
    if ones == 0 || zeros == 0 {
        return Err(Error::DegenerateResponse("logistic response has a single class".into()));
    }

    let xm = x.values();
    let mut mu: Vec<f64> = y.iter().map(|&v| (v + 0.5) / 2.0).collect();
    let mut eta: Vec<f64> = mu.iter().map(|&m| logit(m)).collect();
    let mut beta: Option<Vec<f64>> = None;
    let mut deviance = binomial_deviance(y, &mu, weights);
    let mut converged = false;
    let mut iterations = 0;
    let mut last_inv: Option<DMatrix<f64>> = None;

    let eval = |b: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let e: Vec<f64> = (0..n).map(|i| (0..q).map(|j| xm[(i, j)] * b[j]).sum()).collect();
        let m: Vec<f64> = e.iter().map(|&v| Link::Logit.mean(v)).collect();
        (e, m)
    };

    for iter in 1..=config.max_iterations {
        iterations = iter;
        let mut ww = vec![0.0; n];
        let mut z = vec![0.0; n];
        for i in 0..n {
            let v = mu[i] * (1.0 - mu[i]);
            ww[i] = weights.map_or(1.0, |w| w[i]) * v;
            z[i] = eta[i] + (y[i] - mu[i]) / v;
        }
        let sol = match weighted_least_squares(xm, &z, Some(&ww)) {
            WlsOutcome::Solved(s) => s,
            WlsOutcome::RankDeficient(cols) => return Err(Error::SingularDesign { columns: x.labels_of(&cols) }),
        };
        let mut candidate = sol.coefficients;
        let (mut e_new, mut m_new) = eval(&candidate);
        let mut dev_new = binomial_deviance(y, &m_new, weights);

        if let Some(old) = &beta {
            let mut halvings = 0;
            while !(dev_new <= deviance * (1.0 + 1e-12) + 1e-12) && halvings < config.max_step_halvings {
                for j in 0..q {
                    candidate[j] = 0.5 * (candidate[j] + old[j]);
                }
                let r = eval(&candidate);
                e_new = r.0;
                m_new = r.1;
                dev_new = binomial_deviance(y, &m_new, weights);
                halvings += 1;
            }
        }

        let change =
            beta.as_ref().map(|old| old.iter().zip(&candidate).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        beta = Some(candidate);
        eta = e_new;
        mu = m_new;
        deviance = dev_new;
        last_inv = Some(sol.xtwx_inv);
        if matches!(change, Some(c) if c < config.tolerance) {
            converged = true;
            break;
        }
    }

    let coefficients = beta.expect("at least one IRLS iteration");
    // information at the final iterate
    let mut ww = vec![0.0; n];
    for i in 0..n {
        ww[i] = weights.map_or(1.0, |w| w[i]) * mu[i] * (1.0 - mu[i]);
    }
    let covariance = match weighted_least_squares(xm, &vec![0.0; n], Some(&ww)) {
        WlsOutcome::Solved(s) => s.xtwx_inv,
        // information numerically singular (typically separation): keep the last usable inverse
        WlsOutcome::RankDeficient(_) => last_inv.unwrap_or_else(|| DMatrix::from_element(q, q, f64::INFINITY)),
    };
    let max_coef = coefficients.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let separation = !converged && max_coef > config.separation_coef_cap;
    if separation {
        log::debug!("logistic fit did not converge; separation suspected (max |coef| = {max_coef:.3})");
    }

    Ok(FittedGlm {
        link: Link::Logit,
        coefficients,
        covariance,
        converged,
        iterations,
        deviance,
        separation,
        labels: x.labels().to_vec(),
    })
}

/// Two-sided Wald test of a single coefficient against zero.
pub fn wald_test(fit: &FittedGlm, coef_index: usize) -> Result<WaldTest> {
    if coef_index >= fit.coefficients.len() {
        return Err(Error::InvalidInput(format!(
            "coefficient index {coef_index} out of range ({} coefficients)",
            fit.coefficients.len()
        )));
    }
    let estimate = fit.coefficients[coef_index];
    let std_error = fit.std_error(coef_index);
    Ok(wald_from_parts(estimate, std_error))
}

pub fn wald_from_parts(estimate: f64, std_error: f64) -> WaldTest {
    if !(std_error > 0.0) || !std_error.is_finite() {
        if std_error.is_infinite() {
            return WaldTest { estimate, std_error, z: 0.0, p_value: 1.0, degenerate: true };
        }
        let p_value = if estimate != 0.0 { 0.0 } else { 1.0 };
        return WaldTest { estimate, std_error, z: f64::NAN, p_value, degenerate: true };
    }
    let z = estimate / std_error;
    WaldTest { estimate, std_error, z, p_value: two_sided_normal_p(z), degenerate: false }
}

pub fn two_sided_normal_p(z: f64) -> f64 {
    let normal = Normal::standard();
    (2.0 * normal.sf(z.abs())).clamp(0.0, 1.0)
}
