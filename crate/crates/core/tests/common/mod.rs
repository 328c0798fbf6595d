//! Independent reference computations shared by the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal};

use confsel_core::{Dataset, OutcomeKind};

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let k = b.len();
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..k {
            let f = a[row][col] / a[col][col];
            for c in col..k {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let s: f64 = (row + 1..k).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

pub fn weighted_normal_equations(x: &[Vec<f64>], z: &[f64], w: &[f64]) -> Vec<f64> {
    let k = x[0].len();
    let mut xtx = vec![vec![0.0; k]; k];
    let mut xtz = vec![0.0; k];
    for ((row, &zi), &wi) in x.iter().zip(z).zip(w) {
        for r in 0..k {
            xtz[r] += wi * row[r] * zi;
            for c in 0..k {
                xtx[r][c] += wi * row[r] * row[c];
            }
        }
    }
    solve(xtx, xtz)
}

pub fn expit(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Newton iterations for a (prior-weighted) logistic regression.
pub fn newton_logistic(x: &[Vec<f64>], y: &[f64], prior: &[f64]) -> Vec<f64> {
    let mut beta = vec![0.0; x[0].len()];
    for _ in 0..100 {
        let mu: Vec<f64> = x.iter().map(|r| expit(dot(r, &beta))).collect();
        let w: Vec<f64> = mu.iter().zip(prior).map(|(m, p)| p * m * (1.0 - m)).collect();
        let z: Vec<f64> =
            x.iter().enumerate().map(|(i, r)| dot(r, &beta) + (y[i] - mu[i]) / (mu[i] * (1.0 - mu[i]))).collect();
        let next = weighted_normal_equations(x, &z, &w);
        let step = next.iter().zip(&beta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        beta = next;
        if step < 1e-13 {
            break;
        }
    }
    beta
}

pub fn draw_dataset(
    rng: &mut ChaCha8Rng,
    n: usize,
    p: usize,
    ps_index: impl Fn(&[f64]) -> f64,
    outcome: impl Fn(&[f64], f64, f64) -> f64,
    kind: OutcomeKind,
) -> Dataset {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| StandardNormal.sample(rng)).collect()).collect();
    let a: Vec<u8> = rows.iter().map(|r| u8::from(rng.random::<f64>() < expit(ps_index(r)))).collect();
    let y: Vec<f64> = rows
        .iter()
        .zip(&a)
        .map(|(r, &ai)| {
            let e: f64 = StandardNormal.sample(rng);
            outcome(r, ai as f64, e)
        })
        .collect();
    let covariates = (0..p).map(|k| rows.iter().map(|r| r[k]).collect()).collect();
    let labels = (0..p).map(|k| format!("L{}", k + 1)).collect();
    Dataset::new(covariates, labels, a, y, kind).unwrap()
}

/// One-sample Kolmogorov–Smirnov test against N(0, 1), asymptotic p-value.
pub fn ks_normal_pvalue(sample: &[f64]) -> f64 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal.cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}

/// Inverse of a small dense matrix by solving against unit vectors.
pub fn inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = a.len();
    let cols: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let mut e = vec![0.0; k];
            e[c] = 1.0;
            solve(a.to_vec(), e)
        })
        .collect();
    (0..k).map(|r| (0..k).map(|c| cols[c][r]).collect()).collect()
}

pub fn cross(x: &[Vec<f64>], w: &[f64]) -> Vec<Vec<f64>> {
    let k = x[0].len();
    let mut m = vec![vec![0.0; k]; k];
    for (row, &wi) in x.iter().zip(w) {
        for r in 0..k {
            for c in 0..k {
                m[r][c] += wi * row[r] * row[c];
            }
        }
    }
    m
}

pub fn two_sided_p(z: f64) -> f64 {
    2.0 * Normal::new(0.0, 1.0).unwrap().sf(z.abs())
}

/// Coefficients and Wald p-values of an unweighted OLS fit (`s^2` on `n - q`).
pub fn ols_wald(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let ones = vec![1.0; n];
    let beta = weighted_normal_equations(x, y, &ones);
    let rss: f64 = x.iter().zip(y).map(|(r, yi)| (yi - dot(r, &beta)).powi(2)).sum();
    let s2 = rss / (n - beta.len()) as f64;
    let cov = inverse(&cross(x, &ones));
    let p = (0..beta.len()).map(|j| two_sided_p(beta[j] / (s2 * cov[j][j]).sqrt())).collect();
    (beta, p)
}

/// Coefficients and Wald p-values of an unweighted logistic fit.
pub fn logistic_wald(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let beta = newton_logistic(x, y, &vec![1.0; x.len()]);
    let w: Vec<f64> = x
        .iter()
        .map(|r| {
            let m = expit(dot(r, &beta));
            m * (1.0 - m)
        })
        .collect();
    let cov = inverse(&cross(x, &w));
    let p = (0..beta.len()).map(|j| two_sided_p(beta[j] / cov[j][j].sqrt())).collect();
    (beta, p)
}

pub fn normal_columns(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..p).map(|_| (0..n).map(|_| StandardNormal.sample(rng)).collect()).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn labels(p: usize) -> Vec<String> {
    (1..=p).map(|k| format!("L{k}")).collect()
}

/// Bernoulli treatment from a linear logistic index; redrawn until both classes appear.
pub fn logistic_treatment(rng: &mut ChaCha8Rng, index: &[f64]) -> Vec<u8> {
    loop {
        let a: Vec<u8> = index.iter().map(|&e| u8::from(rng.random::<f64>() < expit(e))).collect();
        if a.contains(&0) && a.contains(&1) {
            return a;
        }
    }
}

pub fn continuous(covariates: Vec<Vec<f64>>, a: Vec<u8>, y: Vec<f64>) -> Dataset {
    let p = covariates.len();
    Dataset::new(covariates, labels(p), a, y, OutcomeKind::Continuous).unwrap()
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
