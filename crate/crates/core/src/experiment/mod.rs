//! The end-to-end protocol: repeated train/explain/compare runs, then the
//! accuracy-prediction and variance studies built on their aggregates.

mod config;
mod preliminary;
mod studies;

pub use config::{DatasetSpec, ExperimentConfig, LimeSettings, ShapSettings};
pub use preliminary::{run_preliminary, CellFailure, CellRecord, CellValues, ModelSummary, PreliminaryResults};
pub use studies::{
    accuracy_prediction, loo_score, outcome2, run_accuracy_prediction_study, run_max_variance_study,
    variance_comparison, AccuracyPrediction, SecondLevelScore, Study1Outcome, Study2Outcome,
    VarianceComparison,
};

use crate::error::{Error, Result};

/// Results of the whole protocol repeated `config.m` times.
#[derive(Debug, Clone)]
pub struct Replicated {
    pub preliminary: PreliminaryResults,
    pub study1: Study1Outcome,
    pub study2: Study2Outcome,
}

/// Runs the protocol `m` times from the same master seed and checks that
/// every repetition reproduces the first one exactly.
pub fn run_replicated(config: &ExperimentConfig) -> Result<Replicated> {
    let mut first: Option<(Replicated, String)> = None;
    for rep in 0..config.m {
        let preliminary = run_preliminary(config)?;
        let study1 = run_accuracy_prediction_study(&preliminary, &config.second_level_models, config.p)?;
        let study2 = run_max_variance_study(&preliminary)?;
        let fingerprint = format!(
            "{}{}{}{}",
            preliminary.cells_csv(),
            preliminary.summary_csv(),
            study1.to_csv_string(),
            study2.to_csv_string()
        );
        match &first {
            None => {
                first = Some((
                    Replicated {
                        preliminary,
                        study1,
                        study2,
                    },
                    fingerprint,
                ))
            }
            Some((_, f)) if *f != fingerprint => return Err(Error::ReplicationMismatch(rep)),
            Some(_) => log::info!("repetition {rep} matches repetition 0"),
        }
    }
    Ok(first.expect("m >= 1 is validated").0)
}
