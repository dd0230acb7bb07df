use crate::matrix::Matrix;

use super::softmax;

/// Multinomial logistic regression fitted by full-batch gradient descent on
/// the L2-penalized mean cross-entropy. The intercepts are not penalized.
#[derive(Debug, Clone)]
pub struct Logistic {
    /// `n_classes x (n_features + 1)`, intercept in the last column.
    weights: Matrix,
}

impl Logistic {
    pub fn fit(x: &Matrix, labels: &[usize], n_classes: usize, l2: f64, max_iter: usize) -> Self {
        let (n, m) = (x.nrows(), x.ncols());
        let d = m + 1;
        let step = 1.0 / (0.5 * max_gram_eigenvalue(x) + l2);
        let mut w = Matrix::zeros(n_classes, d);
        let mut grad = Matrix::zeros(n_classes, d);
        let mut p = vec![0.0; n_classes];
        for _ in 0..max_iter {
            grad.map_inplace(|_, _| 0.0);
            for (row, &y) in x.rows().zip(labels) {
                logits(&w, row, &mut p);
                softmax(&mut p);
                for c in 0..n_classes {
                    let e = p[c] - if c == y { 1.0 } else { 0.0 };
                    let g = grad.row_mut(c);
                    for (gj, xj) in g.iter_mut().zip(row) {
                        *gj += e * xj;
                    }
                    g[m] += e;
                }
            }
            for c in 0..n_classes {
                for j in 0..d {
                    let mut g = grad.get(c, j) / n as f64;
                    if j < m {
                        g += l2 * w.get(c, j);
                    }
                    w.set(c, j, w.get(c, j) - step * g);
                }
            }
        }
        Self { weights: w }
    }

    pub fn proba_row(&self, row: &[f64], out: &mut [f64]) {
        logits(&self.weights, row, out);
        softmax(out);
    }
}

fn logits(w: &Matrix, row: &[f64], out: &mut [f64]) {
    let m = row.len();
    for (c, o) in out.iter_mut().enumerate() {
        let wc = w.row(c);
        *o = wc[m] + crate::linalg::dot(&wc[..m], row);
    }
}

/// Upper estimate of the largest eigenvalue of `[X 1]^T [X 1] / n`, by power
/// iteration with a safety margin.
fn max_gram_eigenvalue(x: &Matrix) -> f64 {
    let (n, m) = (x.nrows(), x.ncols());
    let d = m + 1;
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 1.0;
    for _ in 0..100 {
        let mut next = vec![0.0; d];
        for row in x.rows() {
            let s = crate::linalg::dot(&v[..m], row) + v[m];
            for (nj, xj) in next.iter_mut().zip(row) {
                *nj += s * xj;
            }
            next[m] += s;
        }
        next.iter_mut().for_each(|v| *v /= n as f64);
        let norm = next.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        lambda = norm;
        v = next.into_iter().map(|x| x / norm).collect();
    }
    lambda * 1.1
}
