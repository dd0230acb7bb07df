//! Ordinary least squares, ridge and elastic net.

use crate::linalg;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearFit {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + linalg::dot(&self.coef, row)
    }
}

fn column_means(x: &Matrix) -> Vec<f64> {
    let n = x.nrows() as f64;
    let mut m = vec![0.0; x.ncols()];
    for r in x.rows() {
        for (a, v) in m.iter_mut().zip(r) {
            *a += v;
        }
    }
    m.iter_mut().for_each(|v| *v /= n);
    m
}

fn centered(x: &Matrix, means: &[f64]) -> Matrix {
    let mut c = x.clone();
    c.map_inplace(|j, v| v - means[j]);
    c
}

/// Least squares with intercept. The flag reports a rank-deficient design,
/// in which case a ridge fit with penalty 1e-10 is returned instead.
pub fn ols(x: &Matrix, y: &[f64]) -> (LinearFit, bool) {
    let xm = column_means(x);
    let ym = y.iter().sum::<f64>() / y.len() as f64;
    let xc = centered(x, &xm);
    let yc: Vec<f64> = y.iter().map(|v| v - ym).collect();
    match linalg::lstsq(&xc, &yc) {
        Some(coef) => {
            let intercept = ym - linalg::dot(&coef, &xm);
            (LinearFit { intercept, coef }, false)
        }
        None => (ridge(x, y, 1e-10), true),
    }
}

/// Minimizes `|y - b - X beta|^2 + alpha |beta|^2`.
pub fn ridge(x: &Matrix, y: &[f64], alpha: f64) -> LinearFit {
    let w = vec![1.0; y.len()];
    match linalg::weighted_ridge(x, y, &w, alpha) {
        Some((intercept, coef)) => LinearFit { intercept, coef },
        // Only reachable with alpha == 0 on a singular design.
        None => ridge(x, y, 1e-10_f64.max(alpha)),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ElasticNetParams {
    pub alpha: f64,
    pub l1_ratio: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for ElasticNetParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            l1_ratio: 0.5,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ElasticNetFit {
    pub fit: LinearFit,
    /// Objective value after each completed sweep.
    pub objective_trace: Vec<f64>,
    /// Largest subgradient optimality violation at the returned coefficients.
    pub kkt_residual: f64,
}

/// Cyclic coordinate descent on
/// `1/(2n) |y - b - X beta|^2 + alpha * l1_ratio * |beta|_1
///  + alpha * (1 - l1_ratio) / 2 * |beta|^2`.
///
/// Stops once the optimality residual drops to `tol` or after `max_iter`
/// sweeps.
pub fn elastic_net(x: &Matrix, y: &[f64], p: &ElasticNetParams) -> ElasticNetFit {
    let n = x.nrows() as f64;
    let m = x.ncols();
    let xm = column_means(x);
    let ym = y.iter().sum::<f64>() / y.len() as f64;
    let xc = centered(x, &xm);
    let cols: Vec<Vec<f64>> = (0..m).map(|j| xc.column(j)).collect();
    let sq: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>() / n).collect();
    let l1 = p.alpha * p.l1_ratio;
    let l2 = p.alpha * (1.0 - p.l1_ratio);

    let mut beta = vec![0.0; m];
    let mut resid: Vec<f64> = y.iter().map(|v| v - ym).collect();
    let mut trace = Vec::new();
    let mut kkt = kkt_residual(&cols, &resid, &beta, n, l1, l2);

    for _ in 0..p.max_iter {
        if kkt <= p.tol {
            break;
        }
        for j in 0..m {
            let denom = sq[j] + l2;
            if denom == 0.0 {
                continue;
            }
            let old = beta[j];
            let rho = linalg::dot(&cols[j], &resid) / n + sq[j] * old;
            let new = soft_threshold(rho, l1) / denom;
            if new != old {
                let d = new - old;
                for (r, v) in resid.iter_mut().zip(&cols[j]) {
                    *r -= d * v;
                }
                beta[j] = new;
            }
        }
        trace.push(objective(&resid, &beta, n, l1, l2));
        kkt = kkt_residual(&cols, &resid, &beta, n, l1, l2);
    }

    let intercept = ym - linalg::dot(&beta, &xm);
    ElasticNetFit {
        fit: LinearFit {
            intercept,
            coef: beta,
        },
        objective_trace: trace,
        kkt_residual: kkt,
    }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn objective(resid: &[f64], beta: &[f64], n: f64, l1: f64, l2: f64) -> f64 {
    let rss: f64 = resid.iter().map(|r| r * r).sum();
    let a1: f64 = beta.iter().map(|b| b.abs()).sum();
    let a2: f64 = beta.iter().map(|b| b * b).sum();
    rss / (2.0 * n) + l1 * a1 + 0.5 * l2 * a2
}

fn kkt_residual(cols: &[Vec<f64>], resid: &[f64], beta: &[f64], n: f64, l1: f64, l2: f64) -> f64 {
    cols.iter()
        .zip(beta)
        .map(|(c, &b)| {
            let g = -linalg::dot(c, resid) / n + l2 * b;
            if b != 0.0 {
                (g + l1 * b.signum()).abs()
            } else {
                (g.abs() - l1).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}
