//! LIME for tabular data with Gaussian perturbations and a ridge surrogate.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::shap::explained_class;
use super::{ExplainerConfig, ExplainerId, ExplanationTable};
use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::Matrix;
use crate::models::TrainedModel;
use crate::seed;

struct Local {
    scores: Vec<f64>,
    intercept: f64,
    output: f64,
    r2: Option<f64>,
}

/// LIME attributions for every row of `instances`.
///
/// Perturbations are `x + sigma * eps` with `eps ~ N(0, I)` and `sigma` the
/// per-feature training standard deviation; the first sample is the instance
/// itself. Samples are weighted by `exp(-|eps|^2 / width^2)` and the model
/// output is regressed on the standardized perturbations by weighted ridge.
/// The scores are the surrogate's coefficients. Features with zero spread
/// are never perturbed and score 0.
pub fn explain_lime(
    model: &TrainedModel,
    train_reference: &TabularDataset,
    instances: &Matrix,
    config: &ExplainerConfig,
) -> Result<ExplanationTable> {
    let m = model.n_features();
    for got in [train_reference.n_features(), instances.ncols()] {
        if got != m {
            return Err(Error::ShapeMismatch { expected: m, got });
        }
    }
    if train_reference.n_rows() == 0 {
        return Err(Error::EmptyData(train_reference.source_id().into()));
    }
    config.validate(m)?;

    let x = train_reference.features();
    let n = x.nrows() as f64;
    let mean: Vec<f64> = (0..m).map(|j| x.column(j).iter().sum::<f64>() / n).collect();
    let std: Vec<f64> = (0..m)
        .map(|j| {
            let v = x.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
            v.sqrt()
        })
        .collect();
    let active: Vec<usize> = (0..m).filter(|&j| std[j] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::NothingToPerturb(train_reference.source_id().into()));
    }
    let width = config.kernel_width_for(m);
    let n_samples = config.samples_for(m);

    let results: Vec<Result<Local>> = (0..instances.nrows())
        .into_par_iter()
        .map(|i| {
            let setup = Setup {
                mean: &mean,
                std: &std,
                active: &active,
                width,
                n_samples,
                penalty: config.ridge_penalty,
            };
            explain_one(model, instances.row(i), &setup, seed::derive(config.seed, i as u64))
        })
        .collect();

    let mut scores = Matrix::with_cols(m);
    let (mut base, mut outputs, mut r2) = (Vec::new(), Vec::new(), Vec::new());
    for r in results {
        let local = r?;
        scores.push_row(&local.scores);
        base.push(local.intercept);
        outputs.push(local.output);
        r2.push(local.r2);
    }
    Ok(ExplanationTable::new(
        ExplainerId::Lime,
        model.feature_names().to_vec(),
        instances.clone(),
        scores,
    )?
    .with_diagnostics(base, outputs, r2))
}

struct Setup<'a> {
    mean: &'a [f64],
    std: &'a [f64],
    active: &'a [usize],
    width: f64,
    n_samples: usize,
    penalty: f64,
}

fn explain_one(model: &TrainedModel, x: &[f64], s: &Setup<'_>, seed: u64) -> Result<Local> {
    let m = x.len();
    let k = s.active.len();
    let mut rng = seed::rng(seed);
    let mut perturbed = Matrix::with_cols(m);
    let mut standardized = Matrix::with_cols(k);
    let mut weights = Vec::with_capacity(s.n_samples);
    let mut eps = vec![0.0; k];
    let mut row = x.to_vec();
    let mut z = vec![0.0; k];
    for t in 0..s.n_samples {
        if t > 0 {
            eps.iter_mut()
                .for_each(|e| *e = StandardNormal.sample(&mut rng));
        }
        for (a, &j) in s.active.iter().enumerate() {
            row[j] = x[j] + s.std[j] * eps[a];
            z[a] = (row[j] - s.mean[j]) / s.std[j];
        }
        let d2: f64 = eps.iter().map(|e| e * e).sum();
        weights.push((-d2 / (s.width * s.width)).exp());
        perturbed.push_row(&row);
        standardized.push_row(&z);
    }

    let class = explained_class(model, x)?;
    let y = model.explained_output(&perturbed, class)?;
    let (intercept, beta) = linalg::weighted_ridge(&standardized, &y, &weights, s.penalty)
        .ok_or(Error::DegenerateRegression(1))?;

    let wsum: f64 = weights.iter().sum();
    let ybar = weights.iter().zip(&y).map(|(w, v)| w * v).sum::<f64>() / wsum;
    let mut ss_tot = 0.0;
    let mut ss_res = 0.0;
    for ((zr, &yv), &w) in standardized.rows().zip(&y).zip(&weights) {
        let fit = intercept + linalg::dot(&beta, zr);
        ss_res += w * (yv - fit).powi(2);
        ss_tot += w * (yv - ybar).powi(2);
    }
    let r2 = (ss_tot > 1e-24 * wsum * ybar.abs().max(1.0).powi(2)).then(|| 1.0 - ss_res / ss_tot);

    let mut scores = vec![0.0; m];
    for (a, &j) in s.active.iter().enumerate() {
        scores[j] = beta[a];
    }
    Ok(Local {
        scores,
        intercept,
        output: y[0],
        r2,
    })
}
