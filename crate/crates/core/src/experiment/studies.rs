use serde::Serialize;

use super::preliminary::PreliminaryResults;
use crate::dataset::{TabularDataset, TaskKind};
use crate::dissonance::sample_variance;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::models::{self, Hyperparams, ModelKind};

/// Leave-one-out R^2 of a one-feature regression: each point is predicted
/// by a model fitted on the others, and the pooled predictions are scored
/// against the targets.
pub fn loo_score(kind: ModelKind, features: &[f64], targets: &[f64]) -> Result<f64> {
    if features.len() != targets.len() {
        return Err(Error::LengthMismatch(features.len(), targets.len()));
    }
    if features.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            got: features.len(),
        });
    }
    if kind.task_kind() != TaskKind::Regression {
        return Err(Error::TaskMismatch {
            model: kind.name().into(),
            expected: kind.task_kind().to_string(),
            got: TaskKind::Regression.to_string(),
        });
    }
    let n = features.len();
    let mut pred = Vec::with_capacity(n);
    for held in 0..n {
        let keep: Vec<usize> = (0..n).filter(|&i| i != held).collect();
        let x = Matrix::new(n - 1, 1, keep.iter().map(|&i| features[i]).collect())?;
        let y = keep.iter().map(|&i| targets[i]).collect();
        let train = TabularDataset::new("second_level", vec!["avg_correlation".into()], x, y, TaskKind::Regression)?;
        let model = models::train(kind, &Hyperparams::new(), &train, 0)?;
        pred.push(model.predict(&Matrix::new(1, 1, vec![features[held]])?)?[0]);
    }
    models::r2_score(targets, &pred)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondLevelScore {
    pub model: ModelKind,
    pub score: f64,
    pub supports_hypothesis: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyPrediction {
    pub dataset: String,
    /// First-level models behind each point, with (avg_correlation, accuracy).
    pub points: Vec<(ModelKind, f64, f64)>,
    pub scores: Vec<SecondLevelScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Study1Outcome {
    pub p: f64,
    pub protocol: &'static str,
    pub per_dataset: Vec<AccuracyPrediction>,
    /// True only if every second-level score on every dataset exceeds `p`.
    pub accuracy_predictable: bool,
}

/// Scores each second-level kind on `(x = avg_correlation, y = accuracy)`
/// points by leave-one-out R^2; a score above `p` supports the idea that
/// correlation predicts accuracy.
pub fn accuracy_prediction(
    dataset: &str,
    points: Vec<(ModelKind, f64, f64)>,
    second_kinds: &[ModelKind],
    p: f64,
) -> Result<AccuracyPrediction> {
    let x: Vec<f64> = points.iter().map(|t| t.1).collect();
    let y: Vec<f64> = points.iter().map(|t| t.2).collect();
    let scores = second_kinds
        .iter()
        .map(|&k| {
            let score = loo_score(k, &x, &y)?;
            Ok(SecondLevelScore {
                model: k,
                score,
                supports_hypothesis: score > p,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AccuracyPrediction {
        dataset: dataset.to_owned(),
        points,
        scores,
    })
}

pub fn run_accuracy_prediction_study(
    prelim: &PreliminaryResults,
    second_kinds: &[ModelKind],
    p: f64,
) -> Result<Study1Outcome> {
    let per_dataset = prelim
        .datasets()
        .iter()
        .map(|d| {
            let points = prelim
                .summaries_for(d)
                .map(|s| (s.model, s.avg_correlation, s.accuracy))
                .collect();
            accuracy_prediction(d, points, second_kinds, p)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(outcome1(p, per_dataset))
}

fn outcome1(p: f64, per_dataset: Vec<AccuracyPrediction>) -> Study1Outcome {
    let accuracy_predictable = per_dataset
        .iter()
        .all(|d| d.scores.iter().all(|s| s.supports_hypothesis));
    Study1Outcome {
        p,
        protocol: "leave-one-out R^2, feature = avg_correlation, target = accuracy",
        per_dataset,
        accuracy_predictable,
    }
}

impl Study1Outcome {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("dataset,second_level_model,loo_r2,supports_hypothesis\n");
        for d in &self.per_dataset {
            for s in &d.scores {
                out.push_str(&format!("{},{},{},{}\n", d.dataset, s.model, s.score, s.supports_hypothesis));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceComparison {
    pub dataset: String,
    pub var_avg: f64,
    pub var_max: f64,
    /// `var_max < var_avg`, strictly.
    pub max_more_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Study2Outcome {
    pub per_dataset: Vec<VarianceComparison>,
    /// False as soon as one dataset has `var_max >= var_avg`.
    pub max_always_more_consistent: bool,
}

/// Compares the spread of per-model average correlations against the
/// spread of per-model max-importance correlations.
pub fn variance_comparison(dataset: &str, avg: &[f64], max: &[f64]) -> Result<VarianceComparison> {
    if avg.len() != max.len() {
        return Err(Error::LengthMismatch(avg.len(), max.len()));
    }
    let var_avg = sample_variance(avg)?;
    let var_max = sample_variance(max)?;
    Ok(VarianceComparison {
        dataset: dataset.to_owned(),
        var_avg,
        var_max,
        max_more_consistent: var_max < var_avg,
    })
}

pub fn outcome2(per_dataset: Vec<VarianceComparison>) -> Study2Outcome {
    Study2Outcome {
        max_always_more_consistent: per_dataset.iter().all(|d| d.max_more_consistent),
        per_dataset,
    }
}

pub fn run_max_variance_study(prelim: &PreliminaryResults) -> Result<Study2Outcome> {
    let per_dataset = prelim
        .datasets()
        .iter()
        .map(|d| {
            let avg: Vec<f64> = prelim.summaries_for(d).map(|s| s.avg_correlation).collect();
            let max: Vec<f64> = prelim.summaries_for(d).map(|s| s.correlation_max).collect();
            variance_comparison(d, &avg, &max)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(outcome2(per_dataset))
}

impl Study2Outcome {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("dataset,var_avg,var_max,max_more_consistent\n");
        for d in &self.per_dataset {
            out.push_str(&format!("{},{},{},{}\n", d.dataset, d.var_avg, d.var_max, d.max_more_consistent));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIABETES_AVG: [f64; 7] = [0.878, 0.918, 0.900, 0.819, 0.905, 0.726, 0.868];
    const DIABETES_ACC: [f64; 7] = [0.332, 0.323, -4.043, 0.357, 0.332, 0.203, 0.128];

    /// Leave-one-out R^2 of a straight-line fit using the textbook
    /// closed-form slope and intercept.
    fn closed_form_loo(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let mut pred = Vec::new();
        for h in 0..n {
            let (mut sx, mut sy, mut sxx, mut sxy, mut k) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in (0..n).filter(|&i| i != h) {
                sx += x[i];
                sy += y[i];
                sxx += x[i] * x[i];
                sxy += x[i] * y[i];
                k += 1.0;
            }
            let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
            pred.push((sy - slope * sx) / k + slope * x[h]);
        }
        let my = y.iter().sum::<f64>() / n as f64;
        let ss_res: f64 = y.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum();
        let ss_tot: f64 = y.iter().map(|a| (a - my).powi(2)).sum();
        1.0 - ss_res / ss_tot
    }

    #[test]
    fn exact_line_scores_one() {
        let x = [0.1, 0.4, 0.5, 0.8, 0.9];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!((loo_score(ModelKind::OlsLinear, &x, &y).unwrap() - 1.0).abs() < 1e-9);
        let shifted: Vec<f64> = x.iter().map(|v| 0.3 * v - 0.1).collect();
        let out = accuracy_prediction("synthetic", x.iter().zip(&shifted).map(|(&a, &b)| (ModelKind::Ridge, a, b)).collect(), &[ModelKind::OlsLinear], 0.5).unwrap();
        assert!(out.scores[0].score >= 0.99 && out.scores[0].supports_hypothesis);
    }

    #[test]
    fn published_accuracy_points_do_not_predict() {
        let ours = loo_score(ModelKind::OlsLinear, &DIABETES_AVG, &DIABETES_ACC).unwrap();
        assert!((ours - closed_form_loo(&DIABETES_AVG, &DIABETES_ACC)).abs() < 1e-9);
        assert!((ours - -0.6012732676918782).abs() < 1e-9);
        assert!(ours < 0.5);
    }

    #[test]
    fn noise_fixture_scores_low() {
        let x = [0.129, 0.499, 0.601, 0.029, 0.148, 0.928, 0.07, 0.13];
        let y = [0.747, -1.847, 1.567, -0.096, 0.68, -0.137, -0.379, 0.463];
        let s = loo_score(ModelKind::OlsLinear, &x, &y).unwrap();
        assert!((s - -0.5439197635211042).abs() < 1e-9);
        assert!((s - closed_form_loo(&x, &y)).abs() < 1e-9);
    }

    #[test]
    fn loo_ignores_point_order() {
        let mut idx: Vec<usize> = (0..7).collect();
        idx.reverse();
        idx.swap(1, 4);
        let x: Vec<f64> = idx.iter().map(|&i| DIABETES_AVG[i]).collect();
        let y: Vec<f64> = idx.iter().map(|&i| DIABETES_ACC[i]).collect();
        for kind in ModelKind::regression_kinds() {
            let a = loo_score(kind, &DIABETES_AVG, &DIABETES_ACC).unwrap();
            let b = loo_score(kind, &x, &y).unwrap();
            assert!((a - b).abs() < 1e-9, "{kind}");
        }
    }

    #[test]
    fn loo_preconditions() {
        assert!(matches!(loo_score(ModelKind::OlsLinear, &[1.0, 2.0], &[1.0, 2.0]), Err(Error::TooFewPoints { .. })));
        assert!(loo_score(ModelKind::GaussianNb, &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn flipping_one_score_flips_one_flag() {
        let make = |scores: &[f64]| {
            outcome1(
                0.5,
                vec![AccuracyPrediction {
                    dataset: "d".into(),
                    points: Vec::new(),
                    scores: scores
                        .iter()
                        .map(|&s| SecondLevelScore {
                            model: ModelKind::Ridge,
                            score: s,
                            supports_hypothesis: s > 0.5,
                        })
                        .collect(),
                }],
            )
        };
        let before = make(&[0.6, 0.7, 0.9]);
        let after = make(&[0.6, 0.4, 0.9]);
        let flags = |o: &Study1Outcome| o.per_dataset[0].scores.iter().map(|s| s.supports_hypothesis).collect::<Vec<_>>();
        assert_eq!(flags(&before), [true, true, true]);
        assert_eq!(flags(&after), [true, false, true]);
        assert!(before.accuracy_predictable && !after.accuracy_predictable);
    }

    #[test]
    fn variance_study_examples() {
        let diabetes_max = [0.335, 0.832, 0.492, 0.851, 0.844, 0.743, 0.805];
        let diabetes = variance_comparison("diabetes", &DIABETES_AVG, &diabetes_max).unwrap();
        assert!((diabetes.var_max - 0.042).abs() < 0.001);
        assert!(!diabetes.max_more_consistent);

        let digits_avg = [0.467, 0.0644, 0.515, 0.341, 0.100, 0.461, 0.389];
        let digits_max = [0.138, 0.199, 0.210, 0.0167, 0.0496, 0.200, 0.036];
        let digits = variance_comparison("digits", &digits_avg, &digits_max).unwrap();
        assert!((digits.var_avg - 0.033).abs() < 0.001 && (digits.var_max - 0.007).abs() < 0.001);
        assert!(digits.max_more_consistent);

        let flat = variance_comparison("flat", &[0.5; 3], &[0.2; 3]).unwrap();
        assert!(!flat.max_more_consistent);
        assert!(!outcome2(vec![diabetes, digits]).max_always_more_consistent);
    }
}
