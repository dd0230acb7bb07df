use crate::matrix::Matrix;

#[derive(Debug, Clone)]
pub struct Knn {
    x: Matrix,
    labels: Vec<usize>,
    n_classes: usize,
    k: usize,
}

impl Knn {
    pub fn fit(x: &Matrix, labels: &[usize], n_classes: usize, k: usize) -> Self {
        Self {
            x: x.clone(),
            labels: labels.to_vec(),
            n_classes,
            k: k.min(x.nrows()).max(1),
        }
    }

    /// Vote fractions of the `k` nearest training rows (Euclidean). Equal
    /// distances keep the lower training index.
    pub fn proba_row(&self, row: &[f64], out: &mut [f64]) {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .rows()
            .enumerate()
            .map(|(i, r)| {
                let d: f64 = r.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum();
                (d, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        debug_assert_eq!(out.len(), self.n_classes);
        for &(_, i) in &dist[..self.k] {
            out[self.labels[i]] += 1.0;
        }
        out.iter_mut().for_each(|v| *v /= self.k as f64);
    }
}
