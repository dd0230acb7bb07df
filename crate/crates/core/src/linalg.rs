//! Small dense solvers used by the linear models and both explainers.

use crate::matrix::Matrix;

/// Relative threshold below which a diagonal of R (or a Cholesky pivot) is
/// treated as zero.
const RANK_TOL: f64 = 1e-10;

/// Least-squares solution of `x * beta ~= y` via Householder QR.
///
/// Returns `None` when `x` is numerically rank deficient.
pub fn lstsq(x: &Matrix, y: &[f64]) -> Option<Vec<f64>> {
    let (m, n) = (x.nrows(), x.ncols());
    assert_eq!(m, y.len());
    if n == 0 {
        return Some(Vec::new());
    }
    if m < n {
        return None;
    }
    // Column-major working copy.
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| x.column(j)).collect();
    let mut b = y.to_vec();
    let mut diag = vec![0.0; n];

    for k in 0..n {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            diag[k] = 0.0;
            continue;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        // v = a_k[k..] - alpha e_1, stored in place.
        a[k][k] -= alpha;
        let vnorm2 = a[k][k..].iter().map(|v| v * v).sum::<f64>();
        diag[k] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        let (head, tail) = a.split_at_mut(k + 1);
        let v = &head[k][k..];
        for col in tail.iter_mut() {
            let dot: f64 = v.iter().zip(&col[k..]).map(|(p, q)| p * q).sum();
            let s = 2.0 * dot / vnorm2;
            for (c, vi) in col[k..].iter_mut().zip(v) {
                *c -= s * vi;
            }
        }
        let dot: f64 = v.iter().zip(&b[k..]).map(|(p, q)| p * q).sum();
        let s = 2.0 * dot / vnorm2;
        for (c, vi) in b[k..].iter_mut().zip(v) {
            *c -= s * vi;
        }
    }

    let scale = diag.iter().fold(0.0_f64, |acc, d| acc.max(d.abs()));
    if scale == 0.0 || diag.iter().any(|d| d.abs() <= RANK_TOL * scale) {
        return None;
    }
    // Back substitution on R (upper triangle lives in a[j][i], i < j).
    let mut beta = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc -= a[j][i] * beta[j];
        }
        beta[i] = acc / diag[i];
    }
    Some(beta)
}

/// Solves the symmetric positive definite system `a * x = b` (row-major `a`).
///
/// Returns `None` if a pivot is not positive.
pub fn cholesky_solve(a: &[f64], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    let mut l = vec![0.0; n * n];
    let max_diag = (0..n).fold(0.0_f64, |acc, i| acc.max(a[i * n + i].abs()));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= RANK_TOL * RANK_TOL * max_diag || !s.is_finite() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * z[k];
        }
        z[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = z[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// Weighted ridge regression with an unpenalized intercept.
///
/// Minimizes `sum_k w_k (y_k - b - x_k . beta)^2 + penalty * |beta|^2` and
/// returns `(b, beta)`. With `penalty == 0` this is weighted least squares.
pub fn weighted_ridge(
    x: &Matrix,
    y: &[f64],
    weights: &[f64],
    penalty: f64,
) -> Option<(f64, Vec<f64>)> {
    let (m, n) = (x.nrows(), x.ncols());
    assert_eq!(m, y.len());
    assert_eq!(m, weights.len());
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return None;
    }
    let mut xmean = vec![0.0; n];
    let mut ymean = 0.0;
    for ((row, &yk), &w) in x.rows().zip(y).zip(weights) {
        for (acc, v) in xmean.iter_mut().zip(row) {
            *acc += w * v;
        }
        ymean += w * yk;
    }
    xmean.iter_mut().for_each(|v| *v /= wsum);
    ymean /= wsum;

    let mut gram = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    let mut centered = vec![0.0; n];
    for ((row, &yk), &w) in x.rows().zip(y).zip(weights) {
        for (c, (v, mu)) in centered.iter_mut().zip(row.iter().zip(&xmean)) {
            *c = v - mu;
        }
        let yc = yk - ymean;
        for i in 0..n {
            let wi = w * centered[i];
            rhs[i] += wi * yc;
            for j in 0..=i {
                gram[i * n + j] += wi * centered[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            gram[j * n + i] = gram[i * n + j];
        }
        gram[i * n + i] += penalty;
    }
    let beta = if n == 0 {
        Vec::new()
    } else {
        cholesky_solve(&gram, &rhs)?
    };
    let intercept = ymean - beta.iter().zip(&xmean).map(|(b, m)| b * m).sum::<f64>();
    Some((intercept, beta))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}
