use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::dataset::{self, ScaleKind, TabularDataset};
use crate::dissonance::{CorrelationReport, CorrelationValue};
use crate::error::{Error, Result};
use crate::explain::{explain_kernel_shap, explain_lime, export_explanations, ExplanationTable};
use crate::models::{self, ModelKind};
use crate::seed;

/// Everything measured for one (dataset, model, repeat) cell.
#[derive(Debug, Clone)]
pub struct CellValues {
    pub accuracy: f64,
    pub avg_correlation: f64,
    pub correlation_max: CorrelationValue,
    pub report: CorrelationReport,
    pub shap: ExplanationTable,
    pub lime: ExplanationTable,
    /// Scaling actually applied; min-max when the model rejected negatives.
    pub scaling: ScaleKind,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct CellRecord {
    pub dataset: String,
    pub model: ModelKind,
    pub repeat: usize,
    pub outcome: std::result::Result<CellValues, CellFailure>,
}

/// Per (dataset, model) means over the successful repeats.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub dataset: String,
    pub model: ModelKind,
    pub accuracy: f64,
    pub avg_correlation: f64,
    /// Mean of the effective (undefined = 0) per-repeat values.
    pub correlation_max: f64,
    pub raw_accuracy: Vec<f64>,
    pub raw_avg_correlation: Vec<f64>,
    pub raw_correlation_max: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PreliminaryResults {
    /// In canonical (dataset, model, repeat) order.
    pub cells: Vec<CellRecord>,
    /// One row per (dataset, model) with at least one successful repeat.
    pub summaries: Vec<ModelSummary>,
}

struct Job<'a> {
    dataset: &'a std::result::Result<TabularDataset, CellFailure>,
    label: String,
    model: ModelKind,
    repeat: usize,
}

fn fail(stage: &str) -> impl Fn(Error) -> CellFailure + '_ {
    move |e| CellFailure {
        stage: stage.to_owned(),
        message: e.to_string(),
    }
}

/// Runs every (dataset, model, repeat) cell: split, scale, train, score,
/// explain the test partition with both explainers and compare. Failed
/// cells are kept with the failing stage and left out of the means.
pub fn run_preliminary(config: &ExperimentConfig) -> Result<PreliminaryResults> {
    config.validate()?;
    let loaded: Vec<_> = config
        .datasets
        .iter()
        .map(|d| d.load(config.base_dir.as_deref()).map_err(fail("load")))
        .collect();

    let mut jobs = Vec::new();
    for (spec, ds) in config.datasets.iter().zip(&loaded) {
        let task = ds.as_ref().map(|d| d.task_kind()).ok().or(spec.task());
        for model in config.models_for(spec, task) {
            for repeat in 0..config.n {
                jobs.push(Job {
                    dataset: ds,
                    label: spec.label(),
                    model,
                    repeat,
                });
            }
        }
    }

    let cells: Vec<CellRecord> = jobs
        .par_iter()
        .map(|job| {
            let outcome = match job.dataset {
                Ok(ds) => run_cell(config, ds, job.model, job.repeat),
                Err(e) => Err(e.clone()),
            };
            if let Err(f) = &outcome {
                log::warn!("{} / {} / repeat {}: {} failed: {}", job.label, job.model, job.repeat, f.stage, f.message);
            }
            CellRecord {
                dataset: job.label.clone(),
                model: job.model,
                repeat: job.repeat,
                outcome,
            }
        })
        .collect();

    let summaries = summarize(&cells);
    Ok(PreliminaryResults { cells, summaries })
}

fn run_cell(
    config: &ExperimentConfig,
    ds: &TabularDataset,
    kind: ModelKind,
    repeat: usize,
) -> std::result::Result<CellValues, CellFailure> {
    let split_seed = seed::derive(config.master_seed, repeat as u64);
    let (train, test) = dataset::train_test_split(ds, config.test_fraction, split_seed).map_err(fail("split"))?;
    let cell_seed = seed::derive(split_seed, seed::label(kind.name()));
    let params = config.hyperparams_for(kind);

    let mut scaling = config.scale;
    let (mut train_s, mut test_s, _) = dataset::scale(&train, &test, scaling).map_err(fail("scale"))?;
    let model = match models::train(kind, &params, &train_s, cell_seed) {
        Err(Error::NegativeFeatures(_)) if scaling != ScaleKind::MinMax => {
            log::info!("{}: {kind} needs non-negative inputs; rescaling to [0, 1]", ds.source_id());
            scaling = ScaleKind::MinMax;
            (train_s, test_s, _) = dataset::scale(&train, &test, scaling).map_err(fail("scale"))?;
            models::train(kind, &params, &train_s, cell_seed)
        }
        other => other,
    }
    .map_err(fail("train"))?;

    let accuracy = models::score(&model, &test_s).map_err(fail("score"))?;
    let context = |t: ExplanationTable| t.with_context(ds.source_id(), kind.name());
    let shap = explain_kernel_shap(
        &model,
        &train_s,
        test_s.features(),
        &config.shap_config(seed::derive(cell_seed, seed::label("shap"))),
    )
    .map(context)
    .map_err(fail("explain_shap"))?;
    let lime = explain_lime(
        &model,
        &train_s,
        test_s.features(),
        &config.lime_config(seed::derive(cell_seed, seed::label("lime"))),
    )
    .map(context)
    .map_err(fail("explain_lime"))?;
    let report = CorrelationReport::compare(&shap, &lime).map_err(fail("compare"))?;

    Ok(CellValues {
        accuracy,
        avg_correlation: report.average,
        correlation_max: report.correlation_max,
        report,
        shap,
        lime,
        scaling,
        warnings: model.warnings().to_vec(),
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn summarize(cells: &[CellRecord]) -> Vec<ModelSummary> {
    let mut out: Vec<ModelSummary> = Vec::new();
    for cell in cells {
        let Ok(values) = &cell.outcome else { continue };
        let row = match out.last_mut() {
            Some(s) if s.dataset == cell.dataset && s.model == cell.model => s,
            _ => {
                out.push(ModelSummary {
                    dataset: cell.dataset.clone(),
                    model: cell.model,
                    accuracy: 0.0,
                    avg_correlation: 0.0,
                    correlation_max: 0.0,
                    raw_accuracy: Vec::new(),
                    raw_avg_correlation: Vec::new(),
                    raw_correlation_max: Vec::new(),
                });
                out.last_mut().expect("just pushed")
            }
        };
        row.raw_accuracy.push(values.accuracy);
        row.raw_avg_correlation.push(values.avg_correlation);
        row.raw_correlation_max.push(values.correlation_max.effective());
    }
    for s in &mut out {
        s.accuracy = mean(&s.raw_accuracy);
        s.avg_correlation = mean(&s.raw_avg_correlation);
        s.correlation_max = mean(&s.raw_correlation_max);
    }
    out
}

impl PreliminaryResults {
    /// Dataset labels in first-seen order.
    pub fn datasets(&self) -> Vec<String> {
        let mut seen: Vec<String> = Vec::new();
        for s in &self.summaries {
            if !seen.contains(&s.dataset) {
                seen.push(s.dataset.clone());
            }
        }
        seen
    }

    pub fn summaries_for<'a>(&'a self, dataset: &'a str) -> impl Iterator<Item = &'a ModelSummary> + 'a {
        self.summaries.iter().filter(move |s| s.dataset == dataset)
    }

    /// `dataset,model,accuracy,avg_correlation,correlation_max,repeats`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("dataset,model,accuracy,avg_correlation,correlation_max,repeats\n");
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.dataset,
                s.model,
                s.accuracy,
                s.avg_correlation,
                s.correlation_max,
                s.raw_accuracy.len()
            ));
        }
        out
    }

    /// One line per cell, failures included with their stage.
    pub fn cells_csv(&self) -> String {
        let mut out = String::from(
            "dataset,model,repeat,status,accuracy,avg_correlation,correlation_max,correlation_max_defined,undefined_count,scaling,stage,error\n",
        );
        for c in &self.cells {
            let line = match &c.outcome {
                Ok(v) => format!(
                    "{},{},{},ok,{},{},{},{},{},{},,",
                    c.dataset,
                    c.model,
                    c.repeat,
                    v.accuracy,
                    v.avg_correlation,
                    v.correlation_max.effective(),
                    v.correlation_max.is_defined(),
                    v.report.undefined_count,
                    match v.scaling {
                        ScaleKind::Standard => "standard",
                        ScaleKind::MinMax => "min_max",
                    },
                ),
                Err(f) => format!(
                    "{},{},{},failed,,,,,,,{},{}",
                    c.dataset,
                    c.model,
                    c.repeat,
                    f.stage,
                    crate::dissonance::csv_field(&f.message)
                ),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    /// Writes both explanation tables and the correlation report of every
    /// successful cell into `dir`; returns the paths written.
    pub fn export(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::write(dir, e))?;
        let mut written = Vec::new();
        for c in &self.cells {
            let Ok(v) = &c.outcome else { continue };
            let stem = format!("{}_{}_r{}", c.dataset, c.model, c.repeat);
            for t in [&v.shap, &v.lime] {
                let path = dir.join(format!("{stem}_{}.csv", t.explainer()));
                export_explanations(t, &path)?;
                written.push(path);
            }
            let path = dir.join(format!("{stem}_correlation.csv"));
            fs::write(&path, v.report.to_csv_string()).map_err(|e| Error::write(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}
