use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{self, ScaleKind, TabularDataset, TaskKind};
use crate::error::{Error, Result};
use crate::explain::ExplainerConfig;
use crate::models::{Hyperparams, ModelKind};

/// One dataset entry. `source` is a bundled name (`iris`, `diabetes`,
/// `digits-small`) or a CSV path, relative paths being resolved against the
/// config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub source: String,
    /// Label used in reports and file names. Defaults to the bundled name
    /// or the file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Required for CSV files; bundled datasets use `target`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default)]
    pub drop: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskKind>,
    /// First-level models for this dataset, used as given. When absent, the
    /// global list filtered to the dataset's task is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<ModelKind>>,
}

impl DatasetSpec {
    pub fn builtin(name: &str) -> Self {
        Self {
            source: name.to_owned(),
            name: None,
            target: None,
            drop: Vec::new(),
            task: None,
            models: None,
        }
    }

    fn is_builtin(&self) -> bool {
        dataset::BUILTIN_NAMES.contains(&self.source.as_str())
    }

    pub fn label(&self) -> String {
        if let Some(n) = &self.name {
            return n.clone();
        }
        if self.is_builtin() {
            return self.source.clone();
        }
        Path::new(&self.source)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| self.source.clone())
    }

    pub fn task(&self) -> Option<TaskKind> {
        self.task.or_else(|| dataset::builtin_task(&self.source))
    }

    pub fn load(&self, base_dir: Option<&Path>) -> Result<TabularDataset> {
        let ds = if self.is_builtin() {
            let mut ds = dataset::builtin(&self.source)?;
            if !self.drop.is_empty() || self.target.as_deref().is_some_and(|t| t != "target") {
                let task = self.task().expect("bundled datasets have a task");
                let target = self.target.as_deref().unwrap_or("target");
                ds = dataset::parse_csv(ds.to_csv_string().as_bytes(), &self.source, target, &self.drop, task)?;
            }
            ds
        } else {
            let path = match base_dir {
                Some(dir) if Path::new(&self.source).is_relative() => dir.join(&self.source),
                _ => PathBuf::from(&self.source),
            };
            let target = self.target.as_deref().ok_or_else(|| {
                Error::Config(format!("dataset {}: target is required for CSV files", self.source))
            })?;
            let task = self.task.ok_or_else(|| {
                Error::Config(format!("dataset {}: task is required for CSV files", self.source))
            })?;
            dataset::load_csv(&path, target, &self.drop, task)?
        };
        Ok(ds.with_source_id(self.label()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShapSettings {
    /// Coalitions per instance; absent means `2M + 2048`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    pub background_size: usize,
}

impl Default for ShapSettings {
    fn default() -> Self {
        Self {
            n_samples: None,
            background_size: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimeSettings {
    pub n_samples: usize,
    /// Absent means `0.75 * sqrt(M)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel_width: Option<f64>,
    pub ridge_penalty: f64,
}

impl Default for LimeSettings {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            kernel_width: None,
            ridge_penalty: 1.0,
        }
    }
}

fn default_first_level() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_second_level() -> Vec<ModelKind> {
    ModelKind::regression_kinds().collect()
}

/// Protocol constants and inputs for a full experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSpec>,
    #[serde(default = "default_first_level")]
    pub first_level_models: Vec<ModelKind>,
    #[serde(default = "default_second_level")]
    pub second_level_models: Vec<ModelKind>,
    /// Per-kind overrides of first-level model defaults.
    #[serde(default)]
    pub hyperparams: BTreeMap<ModelKind, Hyperparams>,
    #[serde(default)]
    pub shap: ShapSettings,
    #[serde(default)]
    pub lime: LimeSettings,
    /// Repeats per (dataset, model) in the preliminary step.
    #[serde(default = "ExperimentConfig::default_n")]
    pub n: usize,
    /// Second-level score threshold for supporting the hypothesis.
    #[serde(default = "ExperimentConfig::default_p")]
    pub p: f64,
    /// Outer repetitions of the whole protocol.
    #[serde(default = "ExperimentConfig::default_m")]
    pub m: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "ExperimentConfig::default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub scale: ScaleKind,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    fn default_n() -> usize {
        10
    }
    fn default_p() -> f64 {
        0.5
    }
    fn default_m() -> usize {
        5
    }
    fn default_test_fraction() -> f64 {
        0.2
    }

    pub fn new(datasets: Vec<DatasetSpec>) -> Self {
        Self {
            datasets,
            first_level_models: default_first_level(),
            second_level_models: default_second_level(),
            hyperparams: BTreeMap::new(),
            shap: ShapSettings::default(),
            lime: LimeSettings::default(),
            n: Self::default_n(),
            p: Self::default_p(),
            m: Self::default_m(),
            master_seed: 0,
            test_fraction: Self::default_test_fraction(),
            scale: ScaleKind::Standard,
            base_dir: None,
        }
    }

    /// Parses and validates a JSON config.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.datasets.is_empty() {
            return bad("at least one dataset is required".into());
        }
        if self.n == 0 || self.m == 0 {
            return bad("n and m must be at least 1".into());
        }
        if !(self.p > 0.0 && self.p < 1.0) {
            return bad(format!("p must lie in (0, 1), got {}", self.p));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.lime.n_samples < 2 {
            return bad("lime.n_samples must be at least 2".into());
        }
        if self.shap.background_size == 0 {
            return bad("shap.background_size must be at least 1".into());
        }
        if self.lime.kernel_width.is_some_and(|w| !(w > 0.0)) {
            return bad("lime.kernel_width must be > 0".into());
        }
        if !(self.lime.ridge_penalty >= 0.0) {
            return bad("lime.ridge_penalty must be >= 0".into());
        }
        if let Some(k) = self
            .second_level_models
            .iter()
            .find(|k| k.task_kind() != TaskKind::Regression)
        {
            return bad(format!("second-level model {k} is not a regression model"));
        }
        for (kind, params) in &self.hyperparams {
            params.validate(*kind)?;
        }
        let mut labels = BTreeSet::new();
        for d in &self.datasets {
            if !labels.insert(d.label()) {
                return bad(format!("duplicate dataset label {:?}", d.label()));
            }
            if !d.is_builtin() && (d.target.is_none() || d.task.is_none()) {
                return bad(format!("dataset {}: CSV sources need target and task", d.source));
            }
        }
        Ok(())
    }

    /// First-level models run on a dataset.
    pub fn models_for(&self, spec: &DatasetSpec, task: Option<TaskKind>) -> Vec<ModelKind> {
        match &spec.models {
            Some(list) => list.clone(),
            None => self
                .first_level_models
                .iter()
                .copied()
                .filter(|k| task.is_none_or(|t| k.task_kind() == t))
                .collect(),
        }
    }

    pub fn hyperparams_for(&self, kind: ModelKind) -> Hyperparams {
        self.hyperparams.get(&kind).cloned().unwrap_or_default()
    }

    pub fn shap_config(&self, seed: u64) -> ExplainerConfig {
        ExplainerConfig {
            n_samples: self.shap.n_samples,
            background_size: self.shap.background_size,
            ..ExplainerConfig::shap(seed)
        }
    }

    pub fn lime_config(&self, seed: u64) -> ExplainerConfig {
        ExplainerConfig {
            n_samples: Some(self.lime.n_samples),
            kernel_width: self.lime.kernel_width,
            ridge_penalty: self.lime.ridge_penalty,
            ..ExplainerConfig::lime(seed)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_json_str(r#"{"datasets": [{"source": "iris"}]}"#).unwrap();
        assert_eq!((cfg.n, cfg.m, cfg.p), (10, 5, 0.5));
        assert_eq!(cfg.test_fraction, 0.2);
        assert_eq!(cfg.lime.n_samples, 1000);
        assert_eq!(cfg.second_level_models.len(), 4);
        let iris = &cfg.datasets[0];
        assert_eq!(cfg.models_for(iris, iris.task()).len(), 7);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            r#"{"datasets": []}"#,
            r#"{"datasets": [{"source": "iris"}], "p": 1.5}"#,
            r#"{"datasets": [{"source": "iris"}], "n": 0}"#,
            r#"{"datasets": [{"source": "iris"}], "bogus": 1}"#,
            r#"{"datasets": [{"source": "iris", "colour": "red"}]}"#,
            r#"{"datasets": [{"source": "iris"}], "second_level_models": ["knn_classifier"]}"#,
            r#"{"datasets": [{"source": "iris"}], "hyperparams": {"ridge": {"alpha": -1}}}"#,
            r#"{"datasets": [{"source": "iris"}, {"source": "iris"}]}"#,
            r#"{"datasets": [{"source": "data.csv"}]}"#,
            r#"{"datasets": [{"source": "iris"}], "first_level_models": ["svm"]}"#,
            "not json",
        ] {
            assert!(ExperimentConfig::from_json_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn json_round_trip() {
        let mut cfg = ExperimentConfig::new(vec![DatasetSpec::builtin("diabetes")]);
        cfg.hyperparams.insert(ModelKind::Ridge, Hyperparams::new().with("alpha", 0.5));
        cfg.lime.kernel_width = Some(2.0);
        let back = ExperimentConfig::from_json_str(&cfg.to_json_pretty()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn csv_sources_resolve_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("toy.csv"), "a,b,y\n1,2,0.5\n2,1,1.5\n3,3,2.0\n").unwrap();
        let text = r#"{"datasets": [{"source": "toy.csv", "target": "y", "drop": ["b"], "task": "regression"}]}"#;
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, text).unwrap();
        let cfg = ExperimentConfig::load(&path).unwrap();
        let ds = cfg.datasets[0].load(cfg.base_dir.as_deref()).unwrap();
        assert_eq!(ds.source_id(), "toy");
        assert_eq!(ds.feature_names(), ["a"]);
    }
}
