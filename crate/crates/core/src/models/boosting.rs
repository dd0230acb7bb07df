//! Gradient-boosted regression trees: squared error for regression, softmax
//! deviance for classification.

use crate::matrix::Matrix;

use super::tree::{Targets, Tree, TreeParams};
use super::{softmax, Hyperparams, ModelKind};

#[derive(Debug, Clone, Copy)]
pub struct BoostParams {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
}

impl BoostParams {
    pub fn from_hyper(p: &Hyperparams, kind: ModelKind) -> Self {
        Self {
            n_trees: p.get_usize(kind, "n_trees"),
            learning_rate: p.get(kind, "learning_rate"),
            tree: TreeParams {
                max_depth: p.get_usize(kind, "max_depth"),
                min_samples_leaf: p.get_usize(kind, "min_samples_leaf"),
                max_features: None,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoostedRegressor {
    init: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
}

impl BoostedRegressor {
    pub fn fit(x: &Matrix, y: &[f64], p: &BoostParams) -> Self {
        let n = x.nrows();
        let init = y.iter().sum::<f64>() / n as f64;
        let rows: Vec<usize> = (0..n).collect();
        let mut pred = vec![init; n];
        let mut trees = Vec::with_capacity(p.n_trees);
        for _ in 0..p.n_trees {
            let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
            let tree = Tree::fit(x, &Targets::Values(&resid), &rows, &p.tree, None);
            for (i, row) in x.rows().enumerate() {
                pred[i] += p.learning_rate * tree.leaf_value(row)[0];
            }
            trees.push(tree);
        }
        Self {
            init,
            learning_rate: p.learning_rate,
            trees,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.init
            + self.learning_rate * self.trees.iter().map(|t| t.leaf_value(row)[0]).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct BoostedClassifier {
    init: Vec<f64>,
    learning_rate: f64,
    /// One tree per class per round.
    rounds: Vec<Vec<Tree>>,
}

impl BoostedClassifier {
    pub fn fit(x: &Matrix, labels: &[usize], n_classes: usize, p: &BoostParams) -> Self {
        let n = x.nrows();
        let k = n_classes;
        let mut counts = vec![0.0; k];
        for &c in labels {
            counts[c] += 1.0;
        }
        let init: Vec<f64> = counts.iter().map(|c| (c / n as f64).max(1e-300).ln()).collect();
        let rows: Vec<usize> = (0..n).collect();
        let mut raw = Matrix::zeros(n, k);
        for i in 0..n {
            raw.row_mut(i).copy_from_slice(&init);
        }
        let mut rounds = Vec::with_capacity(p.n_trees);
        let mut prob = vec![0.0; k];
        let scale = (k as f64 - 1.0) / k as f64;
        for _ in 0..p.n_trees {
            // Residuals y_ik - p_ik for every class, from the current scores.
            let mut resid = Matrix::zeros(n, k);
            for i in 0..n {
                prob.copy_from_slice(raw.row(i));
                softmax(&mut prob);
                for c in 0..k {
                    let y = if labels[i] == c { 1.0 } else { 0.0 };
                    resid.set(i, c, y - prob[c]);
                }
            }
            let mut round = Vec::with_capacity(k);
            for c in 0..k {
                let r = resid.column(c);
                let mut tree = Tree::fit(x, &Targets::Values(&r), &rows, &p.tree, None);
                tree.relabel_leaves(x, &rows, |members| {
                    let num: f64 = members.iter().map(|&i| r[i]).sum();
                    let den: f64 = members.iter().map(|&i| r[i].abs() * (1.0 - r[i].abs())).sum();
                    if den.abs() < 1e-150 {
                        0.0
                    } else {
                        scale * num / den
                    }
                });
                for (i, row) in x.rows().enumerate() {
                    let v = raw.get(i, c) + p.learning_rate * tree.leaf_value(row)[0];
                    raw.set(i, c, v);
                }
                round.push(tree);
            }
            rounds.push(round);
        }
        Self {
            init,
            learning_rate: p.learning_rate,
            rounds,
        }
    }

    pub fn proba_row(&self, row: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.init);
        for round in &self.rounds {
            for (o, t) in out.iter_mut().zip(round) {
                *o += self.learning_rate * t.leaf_value(row)[0];
            }
        }
        softmax(out);
    }
}
