//! Randomization inference for the sharp null of no effect within matched strata.
//!
//! The statistic is `n^{-1} sum_r n_r sum_{i in r} A_i Y_i`. Reference
//! assignments keep every stratum's treated count fixed and choose which
//! units are treated uniformly at random.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matching::FullMatch;
use crate::rng::stream_rng;

pub const DEFAULT_DRAWS: usize = 1000;
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;
/// Relative tolerance under which `|tau(a)|` counts as equal to the observed value.
pub const TIE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandTestResult {
    pub observed_stat: f64,
    pub p_value: f64,
    /// Monte Carlo draws, or the size of the reference set when exact.
    pub draws: u64,
    pub seed: Option<u64>,
    pub exact: bool,
    pub per_stratum_treated_counts: Vec<usize>,
}

struct Strata<'a> {
    members: &'a [Vec<usize>],
    treated_counts: Vec<usize>,
    n: f64,
}

fn prepare<'a>(m: &'a FullMatch, treatment: &[u8], y: &[f64]) -> Result<Strata<'a>> {
    if treatment.len() != m.n() || y.len() != m.n() {
        return Err(Error::InvalidInput(format!(
            "{} matched units, {} treatments, {} outcomes",
            m.n(),
            treatment.len(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("outcomes must be finite".into()));
    }
    Ok(Strata { members: &m.strata, treated_counts: m.treated_counts(treatment), n: m.n() as f64 })
}

fn is_extreme(candidate: f64, observed_abs: f64) -> bool {
    candidate.abs() >= observed_abs - TIE_TOLERANCE * observed_abs
}

/// Observed `tau(A)`.
pub fn test_statistic(m: &FullMatch, treatment: &[u8], y: &[f64]) -> Result<f64> {
    let s = prepare(m, treatment, y)?;
    Ok(statistic(&s, |i| treatment[i] == 1, y))
}

fn statistic(s: &Strata, treated: impl Fn(usize) -> bool, y: &[f64]) -> f64 {
    let mut total = 0.0;
    for members in s.members {
        let sum: f64 = members.iter().filter(|&&i| treated(i)).map(|&i| y[i]).sum();
        total += members.len() as f64 * sum;
    }
    total / s.n
}

/// Monte Carlo p-value over `draws` reference assignments, counting the observed one.
pub fn randomization_pvalue(
    m: &FullMatch,
    treatment: &[u8],
    y: &[f64],
    draws: usize,
    seed: u64,
) -> Result<RandTestResult> {
    if draws < 1 {
        return Err(Error::InvalidInput("at least one randomization draw is required".into()));
    }
    let s = prepare(m, treatment, y)?;
    let observed = statistic(&s, |i| treatment[i] == 1, y);
    let observed_abs = observed.abs();

    let mut rng = stream_rng(seed, 0);
    let mut scratch: Vec<Vec<usize>> = s.members.to_vec();
    let mut extreme = 0u64;
    for _ in 0..draws {
        let mut total = 0.0;
        for (members, &t) in scratch.iter_mut().zip(&s.treated_counts) {
            let (chosen, _) = members.partial_shuffle(&mut rng, t);
            let sum: f64 = chosen.iter().map(|&i| y[i]).sum();
            total += members.len() as f64 * sum;
        }
        if is_extreme(total / s.n, observed_abs) {
            extreme += 1;
        }
    }

    Ok(RandTestResult {
        observed_stat: observed,
        p_value: (1 + extreme) as f64 / (draws as f64 + 1.0),
        draws: draws as u64,
        seed: Some(seed),
        exact: false,
        per_stratum_treated_counts: s.treated_counts,
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Size of the reference set `prod_r C(n_r, t_r)`.
pub fn reference_set_size(m: &FullMatch, treatment: &[u8]) -> f64 {
    m.strata.iter().zip(m.treated_counts(treatment)).map(|(s, t)| binomial(s.len(), t)).product()
}

/// Weighted treated sums for every way of choosing `t` units from `members`.
fn combination_sums(members: &[usize], t: usize, y: &[f64], weight: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..t).collect();
    let k = members.len();
    loop {
        out.push(weight * idx.iter().map(|&p| y[members[p]]).sum::<f64>());
        // next combination in lexicographic order
        let Some(i) = (0..t).rev().find(|&i| idx[i] < i + k - t) else {
            return out;
        };
        idx[i] += 1;
        for j in (i + 1)..t {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Exact p-value by enumerating every assignment in the reference set.
pub fn exact_pvalue(m: &FullMatch, treatment: &[u8], y: &[f64], cap: u64) -> Result<RandTestResult> {
    let s = prepare(m, treatment, y)?;
    let size = reference_set_size(m, treatment);
    if size > cap as f64 {
        return Err(Error::EnumerationTooLarge { size, cap });
    }
    let observed = statistic(&s, |i| treatment[i] == 1, y);
    let observed_abs = observed.abs();

    let per_stratum: Vec<Vec<f64>> = s
        .members
        .iter()
        .zip(&s.treated_counts)
        .map(|(members, &t)| combination_sums(members, t, y, members.len() as f64))
        .collect();

    // odometer over strata
    let mut pos = vec![0usize; per_stratum.len()];
    let mut extreme = 0u64;
    let mut total = 0u64;
    loop {
        let value: f64 = per_stratum.iter().zip(&pos).map(|(v, &p)| v[p]).sum::<f64>() / s.n;
        total += 1;
        if is_extreme(value, observed_abs) {
            extreme += 1;
        }
        let mut r = 0;
        loop {
            if r == pos.len() {
                return Ok(RandTestResult {
                    observed_stat: observed,
                    p_value: extreme as f64 / total as f64,
                    draws: total,
                    seed: None,
                    exact: true,
                    per_stratum_treated_counts: s.treated_counts,
                });
            }
            pos[r] += 1;
            if pos[r] < per_stratum[r].len() {
                break;
            }
            pos[r] = 0;
            r += 1;
        }
    }
}
