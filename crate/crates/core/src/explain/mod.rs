//! Per-instance feature attributions and their CSV interchange format.

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

mod lime;
mod shap;

pub use lime::explain_lime;
pub use shap::{background_sample, explain_kernel_shap, shapley_exact};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainerId {
    Shap,
    Lime,
}

impl ExplainerId {
    pub fn name(self) -> &'static str {
        match self {
            ExplainerId::Shap => "shap",
            ExplainerId::Lime => "lime",
        }
    }
}

impl fmt::Display for ExplainerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExplainerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shap" => Ok(ExplainerId::Shap),
            "lime" => Ok(ExplainerId::Lime),
            other => Err(Error::MalformedTable(format!("unknown explainer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainerConfig {
    pub explainer: ExplainerId,
    /// Coalitions (SHAP) or perturbations (LIME). `None` picks the default:
    /// `2M + 2048` for SHAP, 1000 for LIME.
    pub n_samples: Option<usize>,
    /// LIME kernel width in standardized units; `None` means `0.75 * sqrt(M)`.
    pub kernel_width: Option<f64>,
    pub background_size: usize,
    pub ridge_penalty: f64,
    pub seed: u64,
}

impl ExplainerConfig {
    pub fn shap(seed: u64) -> Self {
        Self {
            explainer: ExplainerId::Shap,
            n_samples: None,
            kernel_width: None,
            background_size: 100,
            ridge_penalty: 1.0,
            seed,
        }
    }

    pub fn lime(seed: u64) -> Self {
        Self {
            explainer: ExplainerId::Lime,
            ..Self::shap(seed)
        }
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.n_samples = Some(n);
        self
    }

    pub fn samples_for(&self, n_features: usize) -> usize {
        self.n_samples.unwrap_or(match self.explainer {
            ExplainerId::Shap => 2 * n_features + 2048,
            ExplainerId::Lime => 1000,
        })
    }

    pub fn kernel_width_for(&self, n_features: usize) -> f64 {
        self.kernel_width
            .unwrap_or(0.75 * (n_features as f64).sqrt())
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        let n = self.samples_for(n_features);
        match self.explainer {
            ExplainerId::Shap if n < n_features + 2 => {
                return Err(Error::InvalidArgument(format!(
                    "shap needs at least {} samples for {n_features} features, got {n}",
                    n_features + 2
                )))
            }
            ExplainerId::Lime if n < 2 => {
                return Err(Error::InvalidArgument("lime needs at least 2 samples".into()))
            }
            _ => {}
        }
        if !(self.kernel_width_for(n_features) > 0.0) {
            return Err(Error::InvalidArgument("kernel width must be > 0".into()));
        }
        if !(self.ridge_penalty >= 0.0) {
            return Err(Error::InvalidArgument("ridge penalty must be >= 0".into()));
        }
        if self.background_size == 0 {
            return Err(Error::InvalidArgument("background size must be >= 1".into()));
        }
        Ok(())
    }
}

/// One line of the explanation file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationRow {
    pub instance: usize,
    pub rank: usize,
    pub feature: String,
    pub value: f64,
    pub score: f64,
}

/// Scores from one explainer for a block of instances, plus the rank order
/// of features within each instance (rank 0 = largest |score|).
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationTable {
    explainer: ExplainerId,
    source_id: String,
    model: String,
    feature_names: Vec<String>,
    values: Matrix,
    scores: Matrix,
    /// `n_instances x M` feature indices, by rank.
    order: Vec<usize>,
    base_values: Vec<f64>,
    instance_outputs: Vec<f64>,
    surrogate_r2: Vec<Option<f64>>,
}

impl ExplanationTable {
    /// Builds a table from dense score and value matrices. Equal magnitudes
    /// rank the lower feature index first.
    pub fn new(
        explainer: ExplainerId,
        feature_names: Vec<String>,
        values: Matrix,
        scores: Matrix,
    ) -> Result<Self> {
        let m = feature_names.len();
        if values.ncols() != m || scores.ncols() != m {
            return Err(Error::ShapeMismatch {
                expected: m,
                got: if values.ncols() != m { values.ncols() } else { scores.ncols() },
            });
        }
        if values.nrows() != scores.nrows() {
            return Err(Error::LengthMismatch(values.nrows(), scores.nrows()));
        }
        let mut order = Vec::with_capacity(scores.nrows() * m);
        for row in scores.rows() {
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&a, &b| row[b].abs().total_cmp(&row[a].abs()).then(a.cmp(&b)));
            order.extend(idx);
        }
        Ok(Self {
            explainer,
            source_id: String::new(),
            model: String::new(),
            feature_names,
            values,
            scores,
            order,
            base_values: Vec::new(),
            instance_outputs: Vec::new(),
            surrogate_r2: Vec::new(),
        })
    }

    pub fn with_context(mut self, source_id: impl Into<String>, model: impl Into<String>) -> Self {
        self.source_id = source_id.into();
        self.model = model.into();
        self
    }

    pub(crate) fn with_diagnostics(
        mut self,
        base_values: Vec<f64>,
        instance_outputs: Vec<f64>,
        surrogate_r2: Vec<Option<f64>>,
    ) -> Self {
        self.base_values = base_values;
        self.instance_outputs = instance_outputs;
        self.surrogate_r2 = surrogate_r2;
        self
    }

    pub fn explainer(&self) -> ExplainerId {
        self.explainer
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_instances(&self) -> usize {
        self.scores.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn scores(&self) -> &Matrix {
        &self.scores
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    /// Scores of one feature across instances, in instance order.
    pub fn feature_scores(&self, name: &str) -> Result<Vec<f64>> {
        let j = self
            .feature_index(name)
            .ok_or_else(|| Error::FeatureNotFound(name.to_owned()))?;
        Ok(self.scores.column(j))
    }

    /// Feature indices of instance `i`, most important first.
    pub fn rank_order(&self, i: usize) -> &[usize] {
        let m = self.n_features();
        &self.order[i * m..(i + 1) * m]
    }

    /// `|score|` of the rank-0 feature of instance `i`, or 0 with no features.
    pub fn top_magnitude(&self, i: usize) -> f64 {
        self.rank_order(i)
            .first()
            .map_or(0.0, |&j| self.scores.get(i, j).abs())
    }

    /// SHAP: expected model output over the background. LIME: surrogate
    /// intercept. Empty for tables loaded from disk.
    pub fn base_values(&self) -> &[f64] {
        &self.base_values
    }

    /// Model output being explained, per instance. Empty for loaded tables.
    pub fn instance_outputs(&self) -> &[f64] {
        &self.instance_outputs
    }

    /// LIME surrogate weighted R^2 per instance (`None` for a flat target).
    /// Empty for SHAP and loaded tables.
    pub fn surrogate_r2(&self) -> &[Option<f64>] {
        &self.surrogate_r2
    }

    pub fn rows(&self) -> impl Iterator<Item = ExplanationRow> + '_ {
        (0..self.n_instances()).flat_map(move |i| {
            self.rank_order(i)
                .iter()
                .enumerate()
                .map(move |(rank, &j)| ExplanationRow {
                    instance: i,
                    rank,
                    feature: self.feature_names[j].clone(),
                    value: self.values.get(i, j),
                    score: self.scores.get(i, j),
                })
        })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Csv(e.to_string());
        w.write_record(HEADER).map_err(csv_err)?;
        for row in self.rows() {
            w.write_record([
                self.explainer.name(),
                &row.instance.to_string(),
                &row.rank.to_string(),
                &row.feature,
                &format_real(row.value),
                &format_real(row.score),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("CSV output is UTF-8")
    }
}

const HEADER: [&str; 6] = ["explainer", "instance", "rank", "feature", "value", "score"];

/// 17 significant digits: enough for an exact f64 round trip.
pub(crate) fn format_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn export_explanations(table: &ExplanationTable, path: &Path) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::write(path, e))?;
    file.write_all(table.to_csv_string().as_bytes())
        .map_err(|e| Error::write(path, e))
}

pub fn load_explanations(path: &Path) -> Result<ExplanationTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_explanations(file)
}

/// Reads the explanation CSV written by [`export_explanations`].
///
/// Feature order is taken from the first instance's rows; the rank order of
/// every instance is kept exactly as written.
pub fn parse_explanations<R: Read>(reader: R) -> Result<ExplanationTable> {
    let bad = |msg: String| Error::MalformedTable(msg);
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(bad(format!("expected header {}", HEADER.join(","))));
    }

    let mut explainer = None;
    let mut names: Vec<String> = Vec::new();
    // Per instance: (feature name, value, score) in rank order.
    let mut blocks: Vec<Vec<(String, f64, f64)>> = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let id: ExplainerId = field(0).parse()?;
        match explainer {
            None => explainer = Some(id),
            Some(prev) if prev != id => {
                return Err(bad(format!("row {line}: mixed explainers")));
            }
            _ => {}
        }
        let int = |k: usize| {
            field(k)
                .parse::<usize>()
                .map_err(|_| bad(format!("row {line}: bad {} {:?}", HEADER[k], field(k))))
        };
        let real = |k: usize| {
            field(k)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("row {line}: bad {} {:?}", HEADER[k], field(k))))
        };
        let (instance, rank) = (int(1)?, int(2)?);
        if instance == blocks.len() && rank == 0 {
            blocks.push(Vec::new());
        }
        let n_blocks = blocks.len();
        let block = match blocks.last_mut() {
            Some(b) if instance + 1 == n_blocks && rank == b.len() => b,
            _ => {
                return Err(bad(format!(
                    "row {line}: expected rows ordered by instance then rank"
                )))
            }
        };
        block.push((field(3).to_owned(), real(4)?, real(5)?));
        if instance == 0 {
            if names.contains(&block[rank].0) {
                return Err(bad(format!("row {line}: duplicate feature {:?}", block[rank].0)));
            }
            names.push(block[rank].0.clone());
        }
    }

    let m = names.len();
    let n = blocks.len();
    let mut values = Matrix::zeros(n, m);
    let mut scores = Matrix::zeros(n, m);
    let mut order = Vec::with_capacity(n * m);
    for (i, block) in blocks.iter().enumerate() {
        if block.len() != m {
            return Err(bad(format!("instance {i} has {} features, expected {m}", block.len())));
        }
        let mut seen = vec![false; m];
        let mut prev = f64::INFINITY;
        for (name, value, score) in block {
            let j = names
                .iter()
                .position(|f| f == name)
                .filter(|&j| !seen[j])
                .ok_or_else(|| bad(format!("instance {i}: unexpected feature {name:?}")))?;
            if score.abs() > prev {
                return Err(bad(format!("instance {i}: ranks not ordered by |score|")));
            }
            prev = score.abs();
            seen[j] = true;
            values.set(i, j, *value);
            scores.set(i, j, *score);
            order.push(j);
        }
    }

    Ok(ExplanationTable {
        explainer: explainer.unwrap_or(ExplainerId::Shap),
        source_id: String::new(),
        model: String::new(),
        feature_names: names,
        values,
        scores,
        order,
        base_values: Vec::new(),
        instance_outputs: Vec::new(),
        surrogate_r2: Vec::new(),
    })
}

#[cfg(test)]
mod tests;
