//! CART trees (Gini for classes, squared error for values) and bagged forests.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` considers all of them.
    pub max_features: Option<usize>,
}

pub enum Targets<'a> {
    Classes { labels: &'a [usize], n_classes: usize },
    Values(&'a [f64]),
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(Vec<f64>),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A fitted tree. Leaves hold class probabilities or a single mean value.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: Vec<Node>,
}

struct Builder<'a> {
    x: &'a Matrix,
    targets: &'a Targets<'a>,
    params: &'a TreeParams,
    rng: Option<&'a mut ChaCha8Rng>,
    nodes: Vec<Node>,
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    cost: f64,
}

impl Tree {
    /// Grows a tree on the given rows (duplicates allowed, as in a bootstrap
    /// sample). Split ties resolve to the lower feature index, then the lower
    /// threshold.
    pub fn fit(
        x: &Matrix,
        targets: &Targets<'_>,
        rows: &[usize],
        params: &TreeParams,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Self {
        let mut b = Builder {
            x,
            targets,
            params,
            rng,
            nodes: Vec::new(),
        };
        let mut rows = rows.to_vec();
        b.grow(&mut rows, 0);
        Tree { nodes: b.nodes }
    }

    fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(_) => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaf_value(&self, row: &[f64]) -> &[f64] {
        match &self.nodes[self.leaf_index(row)] {
            Node::Leaf(v) => v,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    /// Root split as `(feature, threshold)`, if the tree is not a single leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self.nodes.first()? {
            Node::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
            Node::Leaf(_) => None,
        }
    }

    /// Replaces every leaf value with `f(leaf_id, training rows in leaf)`.
    pub(crate) fn relabel_leaves(&mut self, x: &Matrix, rows: &[usize], mut f: impl FnMut(&[usize]) -> f64) {
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];
        for &r in rows {
            members[self.leaf_index(x.row(r))].push(r);
        }
        for (node, rows) in self.nodes.iter_mut().zip(&members) {
            if let Node::Leaf(v) = node {
                *v = vec![f(rows)];
            }
        }
    }
}

impl Builder<'_> {
    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_value(rows)));
        if depth >= self.params.max_depth || rows.len() < 2 * self.params.min_samples_leaf {
            return id;
        }
        let parent = self.cost(rows);
        if parent <= 0.0 {
            return id;
        }
        let Some(best) = self.best_split(rows) else {
            return id;
        };
        if !(best.cost < parent - 1e-12 * parent.abs()) {
            return id;
        }
        // Partition in place, left = value <= threshold, preserving order.
        let (mut left, mut right): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.x.get(r, best.feature) <= best.threshold);
        let l = self.grow(&mut left, depth + 1);
        let r = self.grow(&mut right, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: l,
            right: r,
        };
        id
    }

    fn leaf_value(&self, rows: &[usize]) -> Vec<f64> {
        match self.targets {
            Targets::Classes { labels, n_classes } => {
                let mut v = vec![0.0; *n_classes];
                for &r in rows {
                    v[labels[r]] += 1.0;
                }
                let n = rows.len().max(1) as f64;
                v.iter_mut().for_each(|c| *c /= n);
                v
            }
            Targets::Values(y) => {
                let s: f64 = rows.iter().map(|&r| y[r]).sum();
                vec![s / rows.len().max(1) as f64]
            }
        }
    }

    /// Node cost: `n * gini` for classes, sum of squared errors for values.
    fn cost(&self, rows: &[usize]) -> f64 {
        match self.targets {
            Targets::Classes { labels, n_classes } => {
                let mut counts = vec![0.0; *n_classes];
                for &r in rows {
                    counts[labels[r]] += 1.0;
                }
                gini_cost(&counts, rows.len() as f64)
            }
            Targets::Values(y) => {
                let n = rows.len() as f64;
                let s: f64 = rows.iter().map(|&r| y[r]).sum();
                let s2: f64 = rows.iter().map(|&r| y[r] * y[r]).sum();
                (s2 - s * s / n).max(0.0)
            }
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let m = self.x.ncols();
        match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(k), Some(rng)) if k < m => {
                let mut f = sample(rng, m, k).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..m).collect(),
        }
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<Candidate> {
        let min_leaf = self.params.min_samples_leaf;
        let n = rows.len();
        let mut best: Option<Candidate> = None;
        let mut order = rows.to_vec();
        for feature in self.candidate_features() {
            order.sort_by(|&a, &b| self.x.get(a, feature).total_cmp(&self.x.get(b, feature)).then(a.cmp(&b)));
            let mut sweep = Sweep::new(self.targets, rows);
            for i in 0..n - 1 {
                sweep.move_left(order[i]);
                let (lo, hi) = (self.x.get(order[i], feature), self.x.get(order[i + 1], feature));
                if !(lo < hi) || i + 1 < min_leaf || n - i - 1 < min_leaf {
                    continue;
                }
                let cost = sweep.cost();
                if best.is_none_or(|b| cost < b.cost) {
                    let mid = 0.5 * (lo + hi);
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(Candidate {
                        feature,
                        threshold,
                        cost,
                    });
                }
            }
        }
        best
    }
}

fn gini_cost(counts: &[f64], n: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    n - counts.iter().map(|c| c * c).sum::<f64>() / n
}

/// Running left/right statistics while scanning sorted rows.
enum Sweep {
    Classes {
        labels: Vec<usize>,
        left: Vec<f64>,
        right: Vec<f64>,
        nl: f64,
        nr: f64,
    },
    Values {
        y: Vec<f64>,
        sl: f64,
        sl2: f64,
        sr: f64,
        sr2: f64,
        nl: f64,
        nr: f64,
    },
}

impl Sweep {
    fn new(targets: &Targets<'_>, rows: &[usize]) -> Self {
        match targets {
            Targets::Classes { labels, n_classes } => {
                let mut right = vec![0.0; *n_classes];
                for &r in rows {
                    right[labels[r]] += 1.0;
                }
                Sweep::Classes {
                    labels: labels.to_vec(),
                    left: vec![0.0; *n_classes],
                    right,
                    nl: 0.0,
                    nr: rows.len() as f64,
                }
            }
            Targets::Values(y) => {
                let sr: f64 = rows.iter().map(|&r| y[r]).sum();
                let sr2: f64 = rows.iter().map(|&r| y[r] * y[r]).sum();
                Sweep::Values {
                    y: y.to_vec(),
                    sl: 0.0,
                    sl2: 0.0,
                    sr,
                    sr2,
                    nl: 0.0,
                    nr: rows.len() as f64,
                }
            }
        }
    }

    fn move_left(&mut self, r: usize) {
        match self {
            Sweep::Classes {
                labels,
                left,
                right,
                nl,
                nr,
            } => {
                left[labels[r]] += 1.0;
                right[labels[r]] -= 1.0;
                *nl += 1.0;
                *nr -= 1.0;
            }
            Sweep::Values {
                y,
                sl,
                sl2,
                sr,
                sr2,
                nl,
                nr,
            } => {
                let v = y[r];
                *sl += v;
                *sl2 += v * v;
                *sr -= v;
                *sr2 -= v * v;
                *nl += 1.0;
                *nr -= 1.0;
            }
        }
    }

    fn cost(&self) -> f64 {
        match self {
            Sweep::Classes {
                left,
                right,
                nl,
                nr,
                ..
            } => gini_cost(left, *nl) + gini_cost(right, *nr),
            Sweep::Values {
                sl,
                sl2,
                sr,
                sr2,
                nl,
                nr,
                ..
            } => (sl2 - sl * sl / nl).max(0.0) + (sr2 - sr * sr / nr).max(0.0),
        }
    }
}

/// Bagged classification trees; tree `t` draws from its own seed stream.
pub fn fit_forest(
    x: &Matrix,
    labels: &[usize],
    n_classes: usize,
    n_trees: usize,
    bootstrap: bool,
    params: &TreeParams,
    seed: u64,
) -> Vec<Tree> {
    let n = x.nrows();
    let targets = Targets::Classes { labels, n_classes };
    (0..n_trees)
        .map(|t| {
            let mut rng = seed::rng(seed::derive(seed, t as u64));
            let rows: Vec<usize> = if bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            Tree::fit(x, &targets, &rows, params, Some(&mut rng))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_classes_one_split() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let labels = [0, 0, 1, 1];
        let t = Tree::fit(
            &x,
            &Targets::Classes {
                labels: &labels,
                n_classes: 2,
            },
            &[0, 1, 2, 3],
            &TreeParams {
                max_depth: 10,
                min_samples_leaf: 1,
                max_features: None,
            },
            None,
        );
        assert_eq!(t.root_split(), Some((0, 1.5)));
        assert_eq!(t.n_leaves(), 2);
        assert_eq!(t.leaf_value(&[0.2]), &[1.0, 0.0]);
    }

    #[test]
    fn ties_prefer_lower_feature() {
        // Both columns separate the classes identically.
        let x = Matrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]).unwrap();
        let labels = [0, 0, 1, 1];
        let t = Tree::fit(
            &x,
            &Targets::Classes {
                labels: &labels,
                n_classes: 2,
            },
            &[0, 1, 2, 3],
            &TreeParams {
                max_depth: 1,
                min_samples_leaf: 1,
                max_features: None,
            },
            None,
        );
        assert_eq!(t.root_split().unwrap().0, 0);
    }

    #[test]
    fn min_leaf_respected() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let y = [0.0, 10.0, 10.0];
        let t = Tree::fit(
            &x,
            &Targets::Values(&y),
            &[0, 1, 2],
            &TreeParams {
                max_depth: 5,
                min_samples_leaf: 2,
                max_features: None,
            },
            None,
        );
        assert_eq!(t.n_leaves(), 1);
    }
}
