//! Command-line front end. Every subcommand writes under `--out` and ends
//! with a `manifest.json` listing the files it produced and the resolved
//! config.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dissonance::dissonance::CorrelationReport;
use dissonance::experiment::{
    run_accuracy_prediction_study, run_max_variance_study, run_preliminary, run_replicated, DatasetSpec,
    ExperimentConfig, PreliminaryResults,
};
use dissonance::explain::load_explanations;
use dissonance::models::ModelKind;
use dissonance::report::emit_experiment_plots;

#[derive(Debug, Parser)]
#[command(name = "dissonance", version, about = "Train, explain with SHAP and LIME, and measure their disagreement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON). Without it, iris and diabetes run with defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repeats per (dataset, model).
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Second-level score threshold.
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Outer repetitions of the protocol.
    #[arg(long, global = true)]
    m: Option<usize>,
    #[arg(long, global = true)]
    test_fraction: Option<f64>,
    /// Comma-separated first-level models; replaces per-dataset lists too.
    #[arg(long, global = true, value_delimiter = ',')]
    models: Option<Vec<ModelKind>>,
    /// Sample budget for both SHAP coalitions and LIME perturbations.
    #[arg(long, global = true)]
    explainer_samples: Option<usize>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train every model, explain its test split with SHAP and LIME, export the tables.
    TrainExplain,
    /// Correlate two exported explanation tables.
    Compare {
        #[arg(long)]
        shap: PathBuf,
        #[arg(long)]
        lime: PathBuf,
    },
    /// Can average SHAP-LIME correlation predict model accuracy?
    Study1,
    /// Is correlation-max less variable across models than average correlation?
    Study2,
    /// Heatmaps, scatter fits and line charts of a preliminary run.
    Report,
    /// All of the above on one config.
    RunAll,
}

/// A failure with the pipeline stage it happened in.
#[derive(Debug)]
struct StageError {
    stage: &'static str,
    message: String,
}

fn at<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> StageError {
    move |e| StageError {
        stage,
        message: e.to_string(),
    }
}

#[derive(Serialize)]
struct ManifestEntry {
    path: String,
    kind: String,
    stage: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    files: Vec<ManifestEntry>,
    config: &'a ExperimentConfig,
}

struct Outputs {
    root: PathBuf,
    files: Vec<ManifestEntry>,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self, StageError> {
        fs::create_dir_all(root).map_err(|e| StageError {
            stage: "output",
            message: format!("cannot create {}: {e}", root.display()),
        })?;
        Ok(Outputs {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, contents: &str, stage: &'static str) -> Result<(), StageError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(at("output"))?;
        }
        fs::write(&path, contents).map_err(|e| StageError {
            stage: "output",
            message: format!("cannot write {}: {e}", path.display()),
        })?;
        self.record(&path, stage);
        Ok(())
    }

    fn record(&mut self, path: &Path, stage: &'static str) {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        self.files.push(ManifestEntry {
            path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
            kind: path.extension().map_or("file".into(), |e| e.to_string_lossy().into_owned()),
            stage: stage.into(),
        });
    }

    fn finish(mut self, command: &str, config: &ExperimentConfig) -> Result<(), StageError> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.files.dedup_by(|a, b| a.path == b.path);
        let manifest = Manifest {
            command,
            files: self.files,
            config,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(at("output"))? + "\n";
        let path = self.root.join("manifest.json");
        fs::write(&path, text).map_err(|e| StageError {
            stage: "output",
            message: format!("cannot write {}: {e}", path.display()),
        })
    }
}

fn resolve_config(c: &Common) -> Result<ExperimentConfig, StageError> {
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path).map_err(at("config"))?,
        None => ExperimentConfig::new(vec![DatasetSpec::builtin("iris"), DatasetSpec::builtin("diabetes")]),
    };
    if let Some(s) = c.seed {
        cfg.master_seed = s;
    }
    if let Some(n) = c.n {
        cfg.n = n;
    }
    if let Some(p) = c.p {
        cfg.p = p;
    }
    if let Some(m) = c.m {
        cfg.m = m;
    }
    if let Some(t) = c.test_fraction {
        cfg.test_fraction = t;
    }
    if let Some(models) = &c.models {
        cfg.first_level_models = models.clone();
        for d in &mut cfg.datasets {
            d.models = None;
        }
    }
    if let Some(k) = c.explainer_samples {
        cfg.shap.n_samples = Some(k);
        cfg.lime.n_samples = k;
    }
    cfg.validate().map_err(at("config"))?;
    Ok(cfg)
}

fn write_preliminary(out: &mut Outputs, prelim: &PreliminaryResults) -> Result<(), StageError> {
    out.write("preliminary/cells.csv", &prelim.cells_csv(), "preliminary")?;
    out.write("preliminary/summary.csv", &prelim.summary_csv(), "preliminary")
}

fn write_explanations(out: &mut Outputs, prelim: &PreliminaryResults) -> Result<(), StageError> {
    let dir = out.root.join("explanations");
    for path in prelim.export(&dir).map_err(at("export"))? {
        out.record(&path, "train-explain");
    }
    Ok(())
}

fn write_study1(out: &mut Outputs, prelim: &PreliminaryResults, cfg: &ExperimentConfig) -> Result<(), StageError> {
    let s1 = run_accuracy_prediction_study(prelim, &cfg.second_level_models, cfg.p).map_err(at("study1"))?;
    out.write("study1/scores.csv", &s1.to_csv_string(), "study1")?;
    let json = serde_json::to_string_pretty(&s1).map_err(at("study1"))? + "\n";
    out.write("study1/outcome.json", &json, "study1")
}

fn write_study2(out: &mut Outputs, prelim: &PreliminaryResults) -> Result<(), StageError> {
    let s2 = run_max_variance_study(prelim).map_err(at("study2"))?;
    out.write("study2/variances.csv", &s2.to_csv_string(), "study2")?;
    let json = serde_json::to_string_pretty(&s2).map_err(at("study2"))? + "\n";
    out.write("study2/outcome.json", &json, "study2")
}

fn write_plots(out: &mut Outputs, prelim: &PreliminaryResults) -> Result<(), StageError> {
    let dir = out.root.join("plots");
    for e in emit_experiment_plots(prelim, &dir).map_err(at("report"))? {
        out.record(&e.csv, "report");
        out.record(&e.svg, "report");
    }
    Ok(())
}

/// The preliminary run, repeated `m` times when the command draws
/// conclusions from it.
fn preliminary(cfg: &ExperimentConfig, replicate: bool) -> Result<PreliminaryResults, StageError> {
    if replicate {
        Ok(run_replicated(cfg).map_err(at("replication"))?.preliminary)
    } else {
        run_preliminary(cfg).map_err(at("preliminary"))
    }
}

fn execute(cli: Cli) -> Result<(), StageError> {
    let cfg = resolve_config(&cli.common)?;
    let mut out = Outputs::new(&cli.common.out)?;
    let name = match &cli.command {
        Command::TrainExplain => {
            let prelim = preliminary(&cfg, false)?;
            write_preliminary(&mut out, &prelim)?;
            write_explanations(&mut out, &prelim)?;
            "train-explain"
        }
        Command::Compare { shap, lime } => {
            let a = load_explanations(shap).map_err(at("load"))?;
            let b = load_explanations(lime).map_err(at("load"))?;
            let report = CorrelationReport::compare(&a, &b).map_err(at("compare"))?;
            out.write("compare/correlation.csv", &report.to_csv_string(), "compare")?;
            "compare"
        }
        Command::Study1 => {
            let prelim = preliminary(&cfg, true)?;
            write_preliminary(&mut out, &prelim)?;
            write_study1(&mut out, &prelim, &cfg)?;
            "study1"
        }
        Command::Study2 => {
            let prelim = preliminary(&cfg, true)?;
            write_preliminary(&mut out, &prelim)?;
            write_study2(&mut out, &prelim)?;
            "study2"
        }
        Command::Report => {
            let prelim = preliminary(&cfg, false)?;
            write_preliminary(&mut out, &prelim)?;
            write_plots(&mut out, &prelim)?;
            "report"
        }
        Command::RunAll => {
            let prelim = preliminary(&cfg, true)?;
            write_preliminary(&mut out, &prelim)?;
            write_explanations(&mut out, &prelim)?;
            write_study1(&mut out, &prelim, &cfg)?;
            write_study2(&mut out, &prelim)?;
            write_plots(&mut out, &prelim)?;
            "run-all"
        }
    };
    out.finish(name, &cfg)
}

/// Parses `args` (program name first) and runs the command. Returns 0 on
/// success, 1 on usage errors and 2 when a pipeline stage fails.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let jobs = cli.common.jobs;
    let run = move || execute(cli);
    let result = match jobs {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(at("setup")(e)),
        },
        None => run(),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error in stage {}: {}", e.stage, e.message);
            2
        }
    }
}
