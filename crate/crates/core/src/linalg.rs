//! Weighted least squares via Householder QR with column pivoting.
//!
//! Column selection uses the largest remaining column norm, so the diagonal
//! of `R` is non-increasing in magnitude and a relative threshold on it gives
//! a reliable numerical rank.

use nalgebra::DMatrix;

/// Relative tolerance on `|R_kk| / |R_00|` below which a column is declared dependent.
pub(crate) const RANK_TOL: f64 = 1e-10;

pub(crate) struct WlsSolution {
    pub coefficients: Vec<f64>,
    /// `(X' W X)^{-1}`.
    pub xtwx_inv: DMatrix<f64>,
}

/// Outcome of a rank-revealing solve.
pub(crate) enum WlsOutcome {
    Solved(WlsSolution),
    /// Original column indices found to be dependent on the preceding ones.
    RankDeficient(Vec<usize>),
}

/// Minimise `sum_i w_i (y_i - x_i' b)^2`.
///
/// `x` is an `n x q` matrix; `w` (if given) must be nonnegative.
pub(crate) fn weighted_least_squares(x: &DMatrix<f64>, y: &[f64], w: Option<&[f64]>) -> WlsOutcome {
    let n = x.nrows();
    let q = x.ncols();
    debug_assert_eq!(y.len(), n);

    let mut a: Vec<f64> = x.as_slice().to_vec();
    let mut b: Vec<f64> = y.to_vec();
    if let Some(w) = w {
        for i in 0..n {
            let s = w[i].sqrt();
            b[i] *= s;
            for j in 0..q {
                a[j * n + i] *= s;
            }
        }
    }

    let mut perm: Vec<usize> = (0..q).collect();
    let steps = n.min(q);
    let mut rank = 0;
    let mut first_norm = 0.0;
    let mut rdiag = vec![0.0; q];

    for k in 0..steps {
        // pivot: largest remaining column norm
        let mut best = k;
        let mut best_norm = -1.0;
        for j in k..q {
            let col = &a[j * n + k..j * n + n];
            let s: f64 = col.iter().map(|v| v * v).sum();
            if s > best_norm {
                best_norm = s;
                best = j;
            }
        }
        let norm = best_norm.sqrt();
        if k == 0 {
            first_norm = norm;
        }
        if norm <= RANK_TOL * first_norm || norm == 0.0 {
            break;
        }
        if best != k {
            for i in 0..n {
                a.swap(k * n + i, best * n + i);
            }
            perm.swap(k, best);
        }

        // Householder vector stored in place below the diagonal
        let alpha = if a[k * n + k] > 0.0 { -norm } else { norm };
        let v0 = a[k * n + k] - alpha;
        a[k * n + k] = v0;
        let vnorm2: f64 = a[k * n + k..k * n + n].iter().map(|v| v * v).sum();
        if vnorm2 > 0.0 {
            for j in (k + 1)..q {
                let dot: f64 = (k..n).map(|i| a[k * n + i] * a[j * n + i]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..n {
                    a[j * n + i] -= f * a[k * n + i];
                }
            }
            let dot: f64 = (k..n).map(|i| a[k * n + i] * b[i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..n {
                b[i] -= f * a[k * n + i];
            }
        }
        rdiag[k] = alpha;
        rank = k + 1;
    }

    if rank < q {
        let mut dependent: Vec<usize> = perm[rank..].to_vec();
        dependent.sort_unstable();
        return WlsOutcome::RankDeficient(dependent);
    }

    // R: diagonal in rdiag, strict upper triangle in a[j*n + i] for i < j
    let r = |i: usize, j: usize| if i == j { rdiag[i] } else { a[j * n + i] };

    let mut z = vec![0.0; q];
    for i in (0..q).rev() {
        let mut s = b[i];
        for j in (i + 1)..q {
            s -= r(i, j) * z[j];
        }
        z[i] = s / r(i, i);
    }
    let mut coefficients = vec![0.0; q];
    for (pos, &orig) in perm.iter().enumerate() {
        coefficients[orig] = z[pos];
    }

    // R^{-1}, upper triangular
    let mut rinv = DMatrix::<f64>::zeros(q, q);
    for col in 0..q {
        rinv[(col, col)] = 1.0 / r(col, col);
        for i in (0..col).rev() {
            let mut s = 0.0;
            for j in (i + 1)..=col {
                s += r(i, j) * rinv[(j, col)];
            }
            rinv[(i, col)] = -s / r(i, i);
        }
    }
    let inv_perm = &rinv * rinv.transpose();
    let mut xtwx_inv = DMatrix::<f64>::zeros(q, q);
    for (pi, &oi) in perm.iter().enumerate() {
        for (pj, &oj) in perm.iter().enumerate() {
            xtwx_inv[(oi, oj)] = inv_perm[(pi, pj)];
        }
    }
    // exact symmetry
    for i in 0..q {
        for j in (i + 1)..q {
            let m = 0.5 * (xtwx_inv[(i, j)] + xtwx_inv[(j, i)]);
            xtwx_inv[(i, j)] = m;
            xtwx_inv[(j, i)] = m;
        }
    }

    WlsOutcome::Solved(WlsSolution { coefficients, xtwx_inv })
}
