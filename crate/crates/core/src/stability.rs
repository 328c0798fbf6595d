//! Stability of the effect-estimate trajectory across orbits.
//!
//! Each orbit's estimate is compared with a benchmark orbit (by default the
//! largest). A windowed, inverse-variance weighted Cochran's Q measures how
//! much the approximate biases fluctuate around each orbit, and the orbit
//! with the smallest Q is selected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::effect::{diff_variance, DiffVariance, EffectEstimate};
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_WIDTH: usize = 5;
pub const WINDOW_PRESETS: [usize; 3] = [3, 5, 7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub window_width: usize,
    /// 1-based benchmark orbit; `None` is the last orbit.
    pub benchmark: Option<usize>,
    /// Only orbits with `|std_diff| < band` are eligible for selection.
    pub band: Option<f64>,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig { window_width: DEFAULT_WINDOW_WIDTH, benchmark: None, band: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub j_total: usize,
    pub window_width: usize,
    pub requested_window_width: usize,
    pub benchmark: usize,
    /// Indexed by orbit − 1.
    pub psi_hats: Vec<f64>,
    /// Variance of `sqrt(n)(psi_j - psi_benchmark)`, indexed by orbit − 1 (0 at the benchmark).
    pub diff_variances: Vec<f64>,
    /// Indexed by orbit − 1; `None` at the benchmark and where the variance is zero.
    pub std_diffs: Vec<Option<f64>>,
    /// Q per orbit where the window fits; `None` where every weight in the window is zero.
    pub q_values: BTreeMap<usize, Option<f64>>,
    pub selected_orbit: usize,
    pub notes: Vec<String>,
}

impl StabilityReport {
    pub fn q(&self, orbit: usize) -> Option<f64> {
        self.q_values.get(&orbit).copied().flatten()
    }
}

fn check_estimates(estimates: &[EffectEstimate]) -> Result<()> {
    let Some(first) = estimates.first() else {
        return Err(Error::InvalidInput("no estimates".into()));
    };
    if estimates.iter().any(|e| e.n() != first.n() || e.kind != first.kind) {
        return Err(Error::InvalidInput("estimates differ in sample size or estimator kind".into()));
    }
    Ok(())
}

/// Standardized differences of every orbit against `benchmark` (1-based).
///
/// Returns `J − 1` entries in orbit order, skipping the benchmark.
pub fn std_diff_trajectory(estimates: &[EffectEstimate], benchmark: usize) -> Result<Vec<DiffVariance>> {
    check_estimates(estimates)?;
    let j_total = estimates.len();
    if benchmark == 0 || benchmark > j_total {
        return Err(Error::InvalidInput(format!("benchmark orbit {benchmark} outside 1..={j_total}")));
    }
    let bench = &estimates[benchmark - 1];
    let mut out = Vec::with_capacity(j_total - 1);
    for (idx, e) in estimates.iter().enumerate() {
        let orbit = idx + 1;
        if orbit == benchmark {
            continue;
        }
        let mut d = diff_variance(e, bench)?;
        d.orbit_j = orbit;
        d.orbit_k = benchmark;
        out.push(d);
    }
    Ok(out)
}

/// Windowed Cochran's Q from approximate biases and their weights (both indexed by orbit − 1).
///
/// Returns one entry per centre orbit whose window lies inside `1..=J`.
pub fn cochran_q_raw(diffs: &[f64], weights: &[f64], window_width: usize) -> Result<BTreeMap<usize, Option<f64>>> {
    if diffs.len() != weights.len() {
        return Err(Error::InvalidInput("diffs and weights differ in length".into()));
    }
    if window_width < 1 || window_width.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("window width {window_width} must be odd")));
    }
    let j_total = diffs.len();
    let h = (window_width - 1) / 2;
    let mut q = BTreeMap::new();
    if j_total < window_width {
        return Ok(q);
    }
    for centre in (h + 1)..=(j_total - h) {
        let range = (centre - 1 - h)..=(centre - 1 + h);
        let wsum: f64 = weights[range.clone()].iter().sum();
        if wsum <= 0.0 {
            q.insert(centre, None);
            continue;
        }
        let mean = range.clone().map(|k| weights[k] * diffs[k]).sum::<f64>() / wsum;
        let value = range.map(|k| weights[k] * (diffs[k] - mean).powi(2)).sum();
        q.insert(centre, Some(value));
    }
    Ok(q)
}

/// Cochran's Q per orbit with weights `1 / V(psi_k - psi_benchmark)`.
pub fn cochran_q(
    estimates: &[EffectEstimate],
    window_width: usize,
    benchmark: usize,
) -> Result<BTreeMap<usize, Option<f64>>> {
    let (diffs, weights) = diffs_and_weights(estimates, benchmark)?;
    if window_width < 3 || window_width > estimates.len() {
        return Err(Error::InvalidInput(format!("window width {window_width} not in 3..={}", estimates.len())));
    }
    cochran_q_raw(&diffs, &weights, window_width)
}

fn diffs_and_weights(estimates: &[EffectEstimate], benchmark: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let traj = std_diff_trajectory(estimates, benchmark)?;
    let n = estimates[0].n() as f64;
    let bench_psi = estimates[benchmark - 1].psi_hat;
    let diffs = estimates.iter().map(|e| e.psi_hat - bench_psi).collect();
    let mut weights = vec![0.0; estimates.len()];
    for d in &traj {
        if d.variance > 0.0 {
            weights[d.orbit_j - 1] = n / d.variance;
        }
    }
    Ok((diffs, weights))
}

/// Smallest orbit attaining the minimal defined Q.
pub fn select_stable_orbit(q_values: &BTreeMap<usize, Option<f64>>) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (&orbit, q) in q_values {
        if let Some(q) = *q {
            if best.is_none_or(|(_, b)| q < b) {
                best = Some((orbit, q));
            }
        }
    }
    best.map(|(o, _)| o).ok_or_else(|| Error::Selection("no orbit has a defined Q".into()))
}

/// Full stability assessment: trajectory, Q values and the selected orbit.
///
/// When there are fewer orbits than the window width, the width shrinks to
/// the largest odd value not exceeding `J`; with fewer than three orbits the
/// benchmark orbit is selected.
pub fn assess_stability(estimates: &[EffectEstimate], config: &StabilityConfig) -> Result<StabilityReport> {
    check_estimates(estimates)?;
    let requested = config.window_width;
    if requested < 3 || requested.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("window width {requested} must be odd and at least 3")));
    }
    let j_total = estimates.len();
    let benchmark = config.benchmark.unwrap_or(j_total);
    if benchmark == 0 || benchmark > j_total {
        return Err(Error::InvalidInput(format!("benchmark orbit {benchmark} outside 1..={j_total}")));
    }

    let mut notes = Vec::new();
    let psi_hats: Vec<f64> = estimates.iter().map(|e| e.psi_hat).collect();
    let mut diff_variances = vec![0.0; j_total];
    let mut std_diffs = vec![None; j_total];
    for d in std_diff_trajectory(estimates, benchmark)? {
        diff_variances[d.orbit_j - 1] = d.variance;
        std_diffs[d.orbit_j - 1] = d.std_diff;
        if d.std_diff.is_none() {
            notes.push(format!("orbit {} has zero difference variance; standardized difference undefined", d.orbit_j));
        }
    }

    let mut window_width = requested;
    if j_total < requested {
        window_width = if j_total % 2 == 1 { j_total } else { j_total - 1 };
        if window_width >= 3 {
            notes.push(format!("window width reduced from {requested} to {window_width} for {j_total} orbits"));
        }
    }
    if window_width < 3 {
        notes.push(format!("only {j_total} orbit(s); no window fits, selecting benchmark orbit {benchmark}"));
        return Ok(StabilityReport {
            j_total,
            window_width,
            requested_window_width: requested,
            benchmark,
            psi_hats,
            diff_variances,
            std_diffs,
            q_values: BTreeMap::new(),
            selected_orbit: benchmark,
            notes,
        });
    }

    let q_values = cochran_q(estimates, window_width, benchmark)?;
    for (orbit, q) in &q_values {
        if q.is_none() {
            notes.push(format!("orbit {orbit}: all window weights zero; Q undefined"));
        }
    }

    let selected_orbit = match config.band {
        None => select_stable_orbit(&q_values)?,
        Some(band) => {
            let eligible: BTreeMap<usize, Option<f64>> = q_values
                .iter()
                .map(|(&o, &q)| {
                    let inside = o == benchmark || std_diffs[o - 1].is_some_and(|s| s.abs() < band);
                    (o, if inside { q } else { None })
                })
                .collect();
            match select_stable_orbit(&eligible) {
                Ok(o) => o,
                Err(_) => {
                    notes.push(format!("no orbit inside the |std diff| < {band} band; band ignored"));
                    select_stable_orbit(&q_values)?
                }
            }
        }
    };

    Ok(StabilityReport {
        j_total,
        window_width,
        requested_window_width: requested,
        benchmark,
        psi_hats,
        diff_variances,
        std_diffs,
        q_values,
        selected_orbit,
        notes,
    })
}
