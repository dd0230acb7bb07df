//! Tabular data: CSV ingestion, seeded train/test splitting and scaling.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Regression => "regression",
            TaskKind::Classification => "classification",
        })
    }
}

/// Numeric feature matrix plus target vector.
///
/// For classification the target holds class indices `0..K` as `f64`; the
/// original label text of class `k` is `class_labels()[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    source_id: String,
    feature_names: Vec<String>,
    features: Matrix,
    target: Vec<f64>,
    target_name: String,
    /// Column position of the target among the emitted CSV columns.
    target_position: usize,
    task_kind: TaskKind,
    class_labels: Vec<String>,
}

impl TabularDataset {
    pub fn new(
        source_id: impl Into<String>,
        feature_names: Vec<String>,
        features: Matrix,
        target: Vec<f64>,
        task_kind: TaskKind,
    ) -> Result<Self> {
        let class_labels = match task_kind {
            TaskKind::Regression => Vec::new(),
            TaskKind::Classification => {
                let k = target.iter().fold(0.0_f64, |acc, &t| acc.max(t + 1.0)) as usize;
                (0..k).map(|c| c.to_string()).collect()
            }
        };
        let n = feature_names.len();
        Self::with_labels(
            source_id.into(),
            feature_names,
            features,
            target,
            task_kind,
            class_labels,
            "target".into(),
            n,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn with_labels(
        source_id: String,
        feature_names: Vec<String>,
        features: Matrix,
        target: Vec<f64>,
        task_kind: TaskKind,
        class_labels: Vec<String>,
        target_name: String,
        target_position: usize,
    ) -> Result<Self> {
        if features.ncols() != feature_names.len() {
            return Err(Error::ShapeMismatch {
                expected: feature_names.len(),
                got: features.ncols(),
            });
        }
        if features.nrows() != target.len() {
            return Err(Error::LengthMismatch(features.nrows(), target.len()));
        }
        if feature_names.contains(&target_name) {
            return Err(Error::InvalidArgument(format!(
                "target {target_name:?} also listed as a feature"
            )));
        }
        if features.as_slice().iter().chain(&target).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite value in dataset".into()));
        }
        if task_kind == TaskKind::Classification {
            let k = class_labels.len() as f64;
            if target.iter().any(|&t| t < 0.0 || t >= k || t.fract() != 0.0) {
                return Err(Error::InvalidArgument(
                    "classification targets must be class indices".into(),
                ));
            }
        }
        Ok(Self {
            source_id,
            feature_names,
            features,
            target,
            target_name,
            target_position,
            task_kind,
            class_labels,
        })
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn with_source_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = id.into();
        self
    }

    /// Same metadata, different rows.
    fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            ..self.clone_meta()
        }
    }

    fn with_features(&self, features: Matrix) -> Self {
        Self {
            features,
            target: self.target.clone(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            source_id: self.source_id.clone(),
            feature_names: self.feature_names.clone(),
            features: Matrix::default(),
            target: Vec::new(),
            target_name: self.target_name.clone(),
            target_position: self.target_position,
            task_kind: self.task_kind,
            class_labels: self.class_labels.clone(),
        }
    }

    /// Serializes to CSV with the original column order (features with the
    /// target re-inserted at its original position).
    pub fn to_csv_string(&self) -> String {
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        let pos = self.target_position.min(header.len());
        header.insert(pos, &self.target_name);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&header).expect("in-memory write");
        for (row, &t) in self.features.rows().zip(&self.target) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let label = match self.task_kind {
                TaskKind::Regression => t.to_string(),
                TaskKind::Classification => self.class_labels[t as usize].clone(),
            };
            rec.insert(pos, label);
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::write(path, e))
    }
}

/// Reads a dataset from a CSV file. See [`parse_csv`].
pub fn load_csv(
    path: &Path,
    target_column: &str,
    drop_columns: &[String],
    task_kind: TaskKind,
) -> Result<TabularDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_csv(file, &source_id, target_column, drop_columns, task_kind)
}

/// Parses comma-separated data with a header row.
///
/// Every column other than the target and `drop_columns` becomes a feature
/// and must hold finite numbers. Classification labels become class indices:
/// ascending numeric order when every label is an integer, first-appearance
/// order otherwise.
pub fn parse_csv<R: Read>(
    reader: R,
    source_id: &str,
    target_column: &str,
    drop_columns: &[String],
    task_kind: TaskKind,
) -> Result<TabularDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    {
        let mut seen = HashMap::new();
        for (i, h) in header.iter().enumerate() {
            if let Some(j) = seen.insert(h.as_str(), i) {
                return Err(Error::Csv(format!(
                    "duplicate column {h:?} at positions {j} and {i}"
                )));
            }
        }
    }
    let target_idx = header
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::TargetNotFound(target_column.to_owned()))?;
    for d in drop_columns {
        if d == target_column {
            return Err(Error::InvalidArgument(format!(
                "target {d:?} cannot also be dropped"
            )));
        }
        if !header.contains(d) {
            return Err(Error::DropColumnNotFound(d.clone()));
        }
    }
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|&i| i != target_idx && !drop_columns.contains(&header[i]))
        .collect();
    let feature_names: Vec<String> = feature_idx.iter().map(|&i| header[i].clone()).collect();
    let target_position = feature_idx.iter().filter(|&&i| i < target_idx).count();

    let mut features = Matrix::with_cols(feature_idx.len());
    let mut raw_target = Vec::new();
    let mut row_buf = vec![0.0; feature_idx.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
        for (slot, &i) in row_buf.iter_mut().zip(&feature_idx) {
            *slot = parse_number(&rec[i]).ok_or_else(|| Error::NonNumeric {
                row: row + 1,
                column: header[i].clone(),
                value: rec[i].to_owned(),
            })?;
        }
        features.push_row(&row_buf);
        raw_target.push(rec[target_idx].to_owned());
    }
    if raw_target.is_empty() {
        return Err(Error::EmptyData(source_id.to_owned()));
    }

    let (target, class_labels) = match task_kind {
        TaskKind::Regression => {
            let t = raw_target
                .iter()
                .enumerate()
                .map(|(row, v)| {
                    parse_number(v).ok_or_else(|| Error::NonNumeric {
                        row: row + 1,
                        column: target_column.to_owned(),
                        value: v.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (t, Vec::new())
        }
        TaskKind::Classification => encode_labels(&raw_target),
    };

    TabularDataset::with_labels(
        source_id.to_owned(),
        feature_names,
        features,
        target,
        task_kind,
        class_labels,
        target_column.to_owned(),
        target_position,
    )
}

fn parse_number(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn encode_labels(raw: &[String]) -> (Vec<f64>, Vec<String>) {
    let mut labels: Vec<String> = Vec::new();
    for v in raw {
        if !labels.contains(v) {
            labels.push(v.clone());
        }
    }
    let ints: Option<Vec<i64>> = labels.iter().map(|l| l.parse::<i64>().ok()).collect();
    if let Some(ints) = ints {
        let mut order: Vec<usize> = (0..labels.len()).collect();
        order.sort_by_key(|&i| ints[i]);
        labels = order.into_iter().map(|i| labels[i].clone()).collect();
    }
    let index: HashMap<&str, usize> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    let target = raw.iter().map(|v| index[v.as_str()] as f64).collect();
    (target, labels)
}

/// Row indices of a seeded train/test partition, each sorted ascending.
///
/// The test partition holds `round(test_fraction * N)` rows, clamped to
/// `1..=N-1`. For classification every class keeps at least one training
/// row; the shuffle is re-drawn (up to 64 times) until that holds.
pub fn split_indices(
    dataset: &TabularDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let n = dataset.n_rows();
    if n < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: n });
    }
    let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let n_train = n - n_test;
    let k = dataset.n_classes();
    if dataset.task_kind() == TaskKind::Classification && k > n_train {
        return Err(Error::InvalidArgument(format!(
            "{} classes cannot all appear in {n_train} training rows",
            k
        )));
    }
    for attempt in 0..64 {
        let mut rng = seed::rng(if attempt == 0 {
            seed
        } else {
            seed::derive(seed, attempt)
        });
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let (test, train) = order.split_at(n_test);
        let mut train = train.to_vec();
        let mut test = test.to_vec();
        train.sort_unstable();
        test.sort_unstable();
        if dataset.task_kind() == TaskKind::Classification {
            let mut seen = vec![false; k];
            for &i in &train {
                seen[dataset.target[i] as usize] = true;
            }
            let present: Vec<bool> = {
                let mut p = vec![false; k];
                dataset.target.iter().for_each(|&t| p[t as usize] = true);
                p
            };
            if seen.iter().zip(&present).any(|(s, p)| *p && !*s) {
                continue;
            }
        }
        return Ok((train, test));
    }
    Err(Error::InvalidArgument(
        "could not draw a split that keeps every class in training".into(),
    ))
}

pub fn train_test_split(
    dataset: &TabularDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(TabularDataset, TabularDataset)> {
    let (train, test) = split_indices(dataset, test_fraction, seed)?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScaleKind {
    #[default]
    Standard,
    MinMax,
}

/// Per-feature affine transform fitted on a training partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    kind: ScaleKind,
    offset: Vec<f64>,
    /// Divisor per feature; `None` marks a constant column.
    spread: Vec<Option<f64>>,
}

impl Scaler {
    pub fn fit(features: &Matrix, kind: ScaleKind) -> Self {
        let n = features.nrows() as f64;
        let mut offset = Vec::with_capacity(features.ncols());
        let mut spread = Vec::with_capacity(features.ncols());
        for j in 0..features.ncols() {
            let col = features.column(j);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let constant = !(hi > lo);
            match kind {
                ScaleKind::Standard => {
                    let mean = col.iter().sum::<f64>() / n;
                    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                    offset.push(mean);
                    spread.push((!constant).then(|| var.sqrt()));
                }
                ScaleKind::MinMax => {
                    offset.push(lo);
                    spread.push((!constant).then_some(hi - lo));
                }
            }
        }
        Self {
            kind,
            offset,
            spread,
        }
    }

    pub fn kind(&self) -> ScaleKind {
        self.kind
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offset
    }

    pub fn transform(&self, features: &Matrix) -> Result<Matrix> {
        if features.ncols() != self.offset.len() {
            return Err(Error::ShapeMismatch {
                expected: self.offset.len(),
                got: features.ncols(),
            });
        }
        let mut out = features.clone();
        out.map_inplace(|j, v| match (self.kind, self.spread[j]) {
            (_, Some(s)) => (v - self.offset[j]) / s,
            (ScaleKind::Standard, None) => v - self.offset[j],
            (ScaleKind::MinMax, None) => 0.0,
        });
        Ok(out)
    }
}

/// Fits a scaler on `train` and applies it to both partitions.
pub fn scale(
    train: &TabularDataset,
    test: &TabularDataset,
    kind: ScaleKind,
) -> Result<(TabularDataset, TabularDataset, Scaler)> {
    if train.feature_names != test.feature_names {
        return Err(Error::FeatureMismatch);
    }
    let scaler = Scaler::fit(&train.features, kind);
    let tr = train.with_features(scaler.transform(&train.features)?);
    let te = test.with_features(scaler.transform(&test.features)?);
    Ok((tr, te, scaler))
}

const IRIS: &str = include_str!("../data/iris.csv");
const DIABETES: &str = include_str!("../data/diabetes.csv");
const DIGITS_SMALL: &str = include_str!("../data/digits_small.csv");

pub const BUILTIN_NAMES: [&str; 3] = ["iris", "diabetes", "digits-small"];

/// Bundled datasets: `iris` (150x4, 3 classes), `diabetes` (442x10,
/// regression) and `digits-small` (500 rows, 8 pixel columns, 10 classes).
pub fn builtin(name: &str) -> Result<TabularDataset> {
    let (text, task) = match name {
        "iris" => (IRIS, TaskKind::Classification),
        "diabetes" => (DIABETES, TaskKind::Regression),
        "digits-small" => (DIGITS_SMALL, TaskKind::Classification),
        other => return Err(Error::UnknownDataset(other.to_owned())),
    };
    parse_csv(text.as_bytes(), name, "target", &[], task)
}

pub fn builtin_task(name: &str) -> Option<TaskKind> {
    match name {
        "iris" | "digits-small" => Some(TaskKind::Classification),
        "diabetes" => Some(TaskKind::Regression),
        _ => None,
    }
}
