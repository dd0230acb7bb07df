use crate::matrix::Matrix;

use super::softmax;

#[derive(Debug, Clone)]
pub struct GaussianNb {
    log_prior: Vec<f64>,
    mean: Matrix,
    var: Matrix,
}

impl GaussianNb {
    /// `var_smoothing` is scaled by the largest per-feature variance.
    pub fn fit(x: &Matrix, labels: &[usize], n_classes: usize, var_smoothing: f64) -> Self {
        let (n, m) = (x.nrows(), x.ncols());
        let mut max_var = 0.0_f64;
        for j in 0..m {
            let col = x.column(j);
            let mu = col.iter().sum::<f64>() / n as f64;
            let v = col.iter().map(|c| (c - mu).powi(2)).sum::<f64>() / n as f64;
            max_var = max_var.max(v);
        }
        let eps = if max_var > 0.0 {
            var_smoothing * max_var
        } else {
            var_smoothing
        }
        .max(f64::MIN_POSITIVE);

        let mut count = vec![0usize; n_classes];
        let mut mean = Matrix::zeros(n_classes, m);
        for (row, &c) in x.rows().zip(labels) {
            count[c] += 1;
            for (a, v) in mean.row_mut(c).iter_mut().zip(row) {
                *a += v;
            }
        }
        for c in 0..n_classes {
            let k = count[c].max(1) as f64;
            mean.row_mut(c).iter_mut().for_each(|v| *v /= k);
        }
        let mut var = Matrix::zeros(n_classes, m);
        for (row, &c) in x.rows().zip(labels) {
            for j in 0..m {
                let d = row[j] - mean.get(c, j);
                var.set(c, j, var.get(c, j) + d * d);
            }
        }
        for c in 0..n_classes {
            let k = count[c].max(1) as f64;
            var.row_mut(c).iter_mut().for_each(|v| *v = *v / k + eps);
        }
        let log_prior = count
            .iter()
            .map(|&c| (c as f64 / n as f64).max(1e-300).ln())
            .collect();
        Self {
            log_prior,
            mean,
            var,
        }
    }

    pub fn proba_row(&self, row: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let mut ll = self.log_prior[c];
            for (j, &xj) in row.iter().enumerate() {
                let v = self.var.get(c, j);
                let d = xj - self.mean.get(c, j);
                ll -= 0.5 * ((2.0 * std::f64::consts::PI * v).ln() + d * d / v);
            }
            *o = ll;
        }
        softmax(out);
    }
}

#[derive(Debug, Clone)]
pub struct MultinomialNb {
    log_prior: Vec<f64>,
    log_theta: Matrix,
}

impl MultinomialNb {
    /// Additive (Laplace) smoothing `alpha`. Features must be non-negative.
    pub fn fit(x: &Matrix, labels: &[usize], n_classes: usize, alpha: f64) -> Self {
        let (n, m) = (x.nrows(), x.ncols());
        let mut count = vec![0usize; n_classes];
        let mut totals = Matrix::zeros(n_classes, m);
        for (row, &c) in x.rows().zip(labels) {
            count[c] += 1;
            for (a, v) in totals.row_mut(c).iter_mut().zip(row) {
                *a += v;
            }
        }
        let mut log_theta = Matrix::zeros(n_classes, m);
        for c in 0..n_classes {
            let denom: f64 = totals.row(c).iter().sum::<f64>() + alpha * m as f64;
            for j in 0..m {
                log_theta.set(c, j, ((totals.get(c, j) + alpha) / denom).ln());
            }
        }
        let log_prior = count
            .iter()
            .map(|&c| (c as f64 / n as f64).max(1e-300).ln())
            .collect();
        Self {
            log_prior,
            log_theta,
        }
    }

    pub fn proba_row(&self, row: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.log_prior[c] + crate::linalg::dot(self.log_theta.row(c), row);
        }
        softmax(out);
    }
}
