//! First-level models behind one train / predict / score contract.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{TabularDataset, TaskKind};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

mod bayes;
mod boosting;
mod knn;
pub mod linear;
mod logistic;
pub mod tree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    OlsLinear,
    Ridge,
    ElasticNet,
    GradientBoostingReg,
    LogisticRegression,
    GaussianNb,
    MultinomialNb,
    KnnClassifier,
    DecisionTree,
    RandomForest,
    GradientBoostingClf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 11] = [
        ModelKind::OlsLinear,
        ModelKind::Ridge,
        ModelKind::ElasticNet,
        ModelKind::GradientBoostingReg,
        ModelKind::LogisticRegression,
        ModelKind::GaussianNb,
        ModelKind::MultinomialNb,
        ModelKind::KnnClassifier,
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::GradientBoostingClf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::OlsLinear => "ols_linear",
            ModelKind::Ridge => "ridge",
            ModelKind::ElasticNet => "elastic_net",
            ModelKind::GradientBoostingReg => "gradient_boosting_reg",
            ModelKind::LogisticRegression => "logistic_regression",
            ModelKind::GaussianNb => "gaussian_nb",
            ModelKind::MultinomialNb => "multinomial_nb",
            ModelKind::KnnClassifier => "knn_classifier",
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::GradientBoostingClf => "gradient_boosting_clf",
        }
    }

    pub fn task_kind(self) -> TaskKind {
        match self {
            ModelKind::OlsLinear
            | ModelKind::Ridge
            | ModelKind::ElasticNet
            | ModelKind::GradientBoostingReg => TaskKind::Regression,
            _ => TaskKind::Classification,
        }
    }

    pub fn regression_kinds() -> impl Iterator<Item = ModelKind> {
        Self::ALL
            .into_iter()
            .filter(|k| k.task_kind() == TaskKind::Regression)
    }

    pub fn classification_kinds() -> impl Iterator<Item = ModelKind> {
        Self::ALL
            .into_iter()
            .filter(|k| k.task_kind() == TaskKind::Classification)
    }

    /// Accepted hyperparameters with their defaults.
    fn param_specs(self) -> &'static [ParamSpec] {
        use Range::*;
        const TREE: [ParamSpec; 2] = [
            ParamSpec::new("max_depth", 10.0, IntAtLeast(0)),
            ParamSpec::new("min_samples_leaf", 1.0, IntAtLeast(1)),
        ];
        const BOOST: [ParamSpec; 4] = [
            ParamSpec::new("n_trees", 100.0, IntAtLeast(1)),
            ParamSpec::new("max_depth", 3.0, IntAtLeast(0)),
            ParamSpec::new("learning_rate", 0.1, Positive),
            ParamSpec::new("min_samples_leaf", 1.0, IntAtLeast(1)),
        ];
        const RIDGE: [ParamSpec; 1] = [ParamSpec::new("alpha", 1.0, NonNegative)];
        const ELASTIC: [ParamSpec; 4] = [
            ParamSpec::new("alpha", 1.0, NonNegative),
            ParamSpec::new("l1_ratio", 0.5, Unit),
            ParamSpec::new("max_iter", 1000.0, IntAtLeast(1)),
            ParamSpec::new("tol", 1e-6, Positive),
        ];
        const LOGISTIC: [ParamSpec; 2] = [
            ParamSpec::new("l2", 1e-4, NonNegative),
            ParamSpec::new("max_iter", 500.0, IntAtLeast(1)),
        ];
        const GNB: [ParamSpec; 1] = [ParamSpec::new("var_smoothing", 1e-9, NonNegative)];
        const MNB: [ParamSpec; 1] = [ParamSpec::new("alpha", 1.0, Positive)];
        const KNN: [ParamSpec; 1] = [ParamSpec::new("k", 5.0, IntAtLeast(1))];
        const FOREST: [ParamSpec; 5] = [
            ParamSpec::new("n_trees", 100.0, IntAtLeast(1)),
            ParamSpec::new("max_depth", 10.0, IntAtLeast(0)),
            ParamSpec::new("min_samples_leaf", 1.0, IntAtLeast(1)),
            // 0 selects floor(sqrt(M)).
            ParamSpec::new("max_features", 0.0, IntAtLeast(0)),
            ParamSpec::new("bootstrap", 1.0, Flag),
        ];
        match self {
            ModelKind::OlsLinear => &[],
            ModelKind::Ridge => &RIDGE,
            ModelKind::ElasticNet => &ELASTIC,
            ModelKind::LogisticRegression => &LOGISTIC,
            ModelKind::GaussianNb => &GNB,
            ModelKind::MultinomialNb => &MNB,
            ModelKind::KnnClassifier => &KNN,
            ModelKind::DecisionTree => &TREE,
            ModelKind::RandomForest => &FOREST,
            ModelKind::GradientBoostingReg | ModelKind::GradientBoostingClf => &BOOST,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownModel(s.to_owned()))
    }
}

#[derive(Debug, Clone, Copy)]
enum Range {
    NonNegative,
    Positive,
    Unit,
    IntAtLeast(u32),
    Flag,
}

#[derive(Debug, Clone, Copy)]
struct ParamSpec {
    key: &'static str,
    default: f64,
    range: Range,
}

impl ParamSpec {
    const fn new(key: &'static str, default: f64, range: Range) -> Self {
        Self {
            key,
            default,
            range,
        }
    }

    fn check(&self, v: f64) -> std::result::Result<(), &'static str> {
        let ok = v.is_finite()
            && match self.range {
                Range::NonNegative => v >= 0.0,
                Range::Positive => v > 0.0,
                Range::Unit => (0.0..=1.0).contains(&v),
                Range::IntAtLeast(lo) => v.fract() == 0.0 && v >= f64::from(lo),
                Range::Flag => v == 0.0 || v == 1.0,
            };
        if ok {
            return Ok(());
        }
        Err(match self.range {
            Range::NonNegative => "must be >= 0",
            Range::Positive => "must be > 0",
            Range::Unit => "must lie in [0, 1]",
            Range::IntAtLeast(0) => "must be a non-negative integer",
            Range::IntAtLeast(_) => "must be a positive integer",
            Range::Flag => "must be 0 or 1",
        })
    }
}

/// Hyperparameter overrides; anything not set takes the per-kind default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Hyperparams(BTreeMap<String, f64>);

impl Hyperparams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.0.insert(key.to_owned(), value);
        self
    }

    pub fn validate(&self, kind: ModelKind) -> Result<()> {
        let specs = kind.param_specs();
        for (key, &value) in &self.0 {
            let spec = specs.iter().find(|s| s.key == key).ok_or_else(|| {
                Error::UnknownHyperparam {
                    model: kind.name().into(),
                    key: key.clone(),
                }
            })?;
            spec.check(value).map_err(|reason| Error::InvalidHyperparam {
                model: kind.name().into(),
                key: key.clone(),
                value,
                reason: reason.into(),
            })?;
        }
        Ok(())
    }

    /// Value for `key`, falling back to the kind's default.
    ///
    /// Panics if `key` is not a parameter of `kind`.
    fn get(&self, kind: ModelKind, key: &str) -> f64 {
        let spec = kind
            .param_specs()
            .iter()
            .find(|s| s.key == key)
            .unwrap_or_else(|| panic!("{key} is not a parameter of {kind}"));
        self.0.get(key).copied().unwrap_or(spec.default)
    }

    fn get_usize(&self, kind: ModelKind, key: &str) -> usize {
        self.get(kind, key) as usize
    }
}

#[derive(Debug, Clone)]
enum Fitted {
    Linear(linear::LinearFit),
    Logistic(logistic::Logistic),
    GaussianNb(bayes::GaussianNb),
    MultinomialNb(bayes::MultinomialNb),
    Knn(knn::Knn),
    Tree(tree::Tree),
    Forest(Vec<tree::Tree>),
    BoostReg(boosting::BoostedRegressor),
    BoostClf(boosting::BoostedClassifier),
}

/// A fitted predictor. Immutable after training.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    kind: ModelKind,
    feature_names: Vec<String>,
    n_classes: usize,
    fitted: Fitted,
    warnings: Vec<String>,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn task_kind(&self) -> TaskKind {
        self.kind.task_kind()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Non-fatal notes from training, e.g. the singular-OLS ridge fallback.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Intercept and coefficients of the linear kinds.
    pub fn linear_coefficients(&self) -> Option<(f64, &[f64])> {
        match &self.fitted {
            Fitted::Linear(fit) => Some((fit.intercept, &fit.coef)),
            _ => None,
        }
    }

    fn check_shape(&self, x: &Matrix) -> Result<()> {
        if x.ncols() != self.n_features() {
            return Err(Error::ShapeMismatch {
                expected: self.n_features(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Regression outputs, or predicted class indices (as `f64`) for
    /// classifiers. Class ties resolve to the lower index.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.check_shape(x)?;
        Ok(match &self.fitted {
            Fitted::Linear(fit) => x.rows().map(|r| fit.predict_row(r)).collect(),
            Fitted::BoostReg(b) => x.rows().map(|r| b.predict_row(r)).collect(),
            _ => {
                let proba = self.predict_proba(x)?;
                proba.rows().map(|p| argmax(p) as f64).collect()
            }
        })
    }

    /// Per-class probabilities, one row per instance. Classifiers only.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        self.check_shape(x)?;
        let k = self.n_classes;
        let mut out = Matrix::zeros(x.nrows(), k);
        for (i, row) in x.rows().enumerate() {
            let dst = out.row_mut(i);
            match &self.fitted {
                Fitted::Logistic(m) => m.proba_row(row, dst),
                Fitted::GaussianNb(m) => m.proba_row(row, dst),
                Fitted::MultinomialNb(m) => m.proba_row(row, dst),
                Fitted::Knn(m) => m.proba_row(row, dst),
                Fitted::Tree(t) => dst.copy_from_slice(t.leaf_value(row)),
                Fitted::Forest(trees) => {
                    for t in trees {
                        for (d, v) in dst.iter_mut().zip(t.leaf_value(row)) {
                            *d += v;
                        }
                    }
                    let n = trees.len() as f64;
                    dst.iter_mut().for_each(|d| *d /= n);
                }
                Fitted::BoostClf(m) => m.proba_row(row, dst),
                Fitted::Linear(_) | Fitted::BoostReg(_) => {
                    return Err(Error::InvalidArgument(format!(
                        "{} does not produce class probabilities",
                        self.kind
                    )))
                }
            }
            normalize(dst);
        }
        Ok(out)
    }

    /// The scalar output an explainer attributes: the regression value, or
    /// the probability of `class` for classifiers.
    pub fn explained_output(&self, x: &Matrix, class: Option<usize>) -> Result<Vec<f64>> {
        match (self.task_kind(), class) {
            (TaskKind::Regression, _) => self.predict(x),
            (TaskKind::Classification, Some(c)) if c < self.n_classes => {
                Ok(self.predict_proba(x)?.column(c))
            }
            (TaskKind::Classification, _) => Err(Error::InvalidArgument(
                "classifier output needs a valid class index".into(),
            )),
        }
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn normalize(p: &mut [f64]) {
    let s: f64 = p.iter().sum();
    if s > 0.0 && s.is_finite() {
        p.iter_mut().for_each(|v| *v /= s);
    } else {
        let u = 1.0 / p.len() as f64;
        p.iter_mut().for_each(|v| *v = u);
    }
}

/// Numerically stable softmax, in place.
pub(crate) fn softmax(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

/// Fits `kind` on `train`. Deterministic given all arguments.
pub fn train(
    kind: ModelKind,
    params: &Hyperparams,
    train: &TabularDataset,
    seed: u64,
) -> Result<TrainedModel> {
    params.validate(kind)?;
    if kind.task_kind() != train.task_kind() {
        return Err(Error::TaskMismatch {
            model: kind.name().into(),
            expected: kind.task_kind().to_string(),
            got: train.task_kind().to_string(),
        });
    }
    if train.n_rows() == 0 {
        return Err(Error::EmptyData(train.source_id().into()));
    }
    let x = train.features();
    let y = train.target();
    let k = train.n_classes();
    let labels: Vec<usize> = y.iter().map(|&v| v as usize).collect();
    let mut warnings = Vec::new();
    let p = params;

    let fitted = match kind {
        ModelKind::OlsLinear => {
            let (fit, singular) = linear::ols(x, y);
            if singular {
                let msg = "singular normal equations; fell back to ridge (penalty 1e-10)";
                log::warn!("{}: {msg}", train.source_id());
                warnings.push(msg.to_owned());
            }
            Fitted::Linear(fit)
        }
        ModelKind::Ridge => Fitted::Linear(linear::ridge(x, y, p.get(kind, "alpha"))),
        ModelKind::ElasticNet => Fitted::Linear(
            linear::elastic_net(
                x,
                y,
                &linear::ElasticNetParams {
                    alpha: p.get(kind, "alpha"),
                    l1_ratio: p.get(kind, "l1_ratio"),
                    max_iter: p.get_usize(kind, "max_iter"),
                    tol: p.get(kind, "tol"),
                },
            )
            .fit,
        ),
        ModelKind::LogisticRegression => Fitted::Logistic(logistic::Logistic::fit(
            x,
            &labels,
            k,
            p.get(kind, "l2"),
            p.get_usize(kind, "max_iter"),
        )),
        ModelKind::GaussianNb => Fitted::GaussianNb(bayes::GaussianNb::fit(
            x,
            &labels,
            k,
            p.get(kind, "var_smoothing"),
        )),
        ModelKind::MultinomialNb => {
            if x.as_slice().iter().any(|&v| v < 0.0) {
                return Err(Error::NegativeFeatures(kind.name().into()));
            }
            Fitted::MultinomialNb(bayes::MultinomialNb::fit(x, &labels, k, p.get(kind, "alpha")))
        }
        ModelKind::KnnClassifier => Fitted::Knn(knn::Knn::fit(x, &labels, k, p.get_usize(kind, "k"))),
        ModelKind::DecisionTree => {
            let params = tree::TreeParams {
                max_depth: p.get_usize(kind, "max_depth"),
                min_samples_leaf: p.get_usize(kind, "min_samples_leaf"),
                max_features: None,
            };
            let rows: Vec<usize> = (0..x.nrows()).collect();
            Fitted::Tree(tree::Tree::fit(
                x,
                &tree::Targets::Classes {
                    labels: &labels,
                    n_classes: k,
                },
                &rows,
                &params,
                None,
            ))
        }
        ModelKind::RandomForest => {
            let m = x.ncols();
            let mf = match p.get_usize(kind, "max_features") {
                0 => ((m as f64).sqrt().floor() as usize).max(1),
                n => n.min(m),
            };
            let params = tree::TreeParams {
                max_depth: p.get_usize(kind, "max_depth"),
                min_samples_leaf: p.get_usize(kind, "min_samples_leaf"),
                max_features: (mf < m).then_some(mf),
            };
            Fitted::Forest(tree::fit_forest(
                x,
                &labels,
                k,
                p.get_usize(kind, "n_trees"),
                p.get(kind, "bootstrap") == 1.0,
                &params,
                seed,
            ))
        }
        ModelKind::GradientBoostingReg => Fitted::BoostReg(boosting::BoostedRegressor::fit(
            x,
            y,
            &boosting::BoostParams::from_hyper(p, kind),
        )),
        ModelKind::GradientBoostingClf => Fitted::BoostClf(boosting::BoostedClassifier::fit(
            x,
            &labels,
            k,
            &boosting::BoostParams::from_hyper(p, kind),
        )),
    };

    Ok(TrainedModel {
        kind,
        feature_names: train.feature_names().to_vec(),
        n_classes: k,
        fitted,
        warnings,
    })
}

pub fn predict(model: &TrainedModel, instances: &Matrix) -> Result<Vec<f64>> {
    model.predict(instances)
}

/// R^2 for regression, fraction correct for classification.
pub fn score(model: &TrainedModel, test: &TabularDataset) -> Result<f64> {
    if model.task_kind() != test.task_kind() {
        return Err(Error::TaskMismatch {
            model: model.kind.name().into(),
            expected: model.task_kind().to_string(),
            got: test.task_kind().to_string(),
        });
    }
    if test.n_rows() == 0 {
        return Err(Error::EmptyData(test.source_id().into()));
    }
    let pred = model.predict(test.features())?;
    match model.task_kind() {
        TaskKind::Regression => r2_score(test.target(), &pred),
        TaskKind::Classification => Ok(accuracy(test.target(), &pred)),
    }
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2_score(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch(truth.len(), pred.len()));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(Error::UndefinedScore);
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn accuracy(truth: &[f64], pred: &[f64]) -> f64 {
    let hits = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    hits as f64 / truth.len() as f64
}
