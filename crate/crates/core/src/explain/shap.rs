//! Kernel SHAP and a brute-force Shapley oracle.
//!
//! Both use the interventional value function: the value of a coalition S
//! is the model output averaged over background rows b, with the instance's
//! features kept on S and b's values everywhere else. The empty coalition is
//! therefore the background expectation of the model output.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use super::{ExplainerConfig, ExplainerId, ExplanationTable};
use crate::dataset::{TabularDataset, TaskKind};
use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::Matrix;
use crate::models::{argmax, TrainedModel};
use crate::seed;

const MAX_ATTEMPTS: usize = 5;
/// Coalitions evaluated per model call.
const CHUNK: usize = 512;
const MAX_EXACT_FEATURES: usize = 20;

/// Up to `size` training rows, drawn without replacement and kept in
/// dataset order. Small datasets are used whole.
pub fn background_sample(ds: &TabularDataset, size: usize, seed: u64) -> Matrix {
    let n = ds.n_rows();
    if n <= size {
        return ds.features().clone();
    }
    let mut rng = seed::rng(seed::derive(seed, seed::label("background")));
    let mut idx = sample(&mut rng, n, size).into_vec();
    idx.sort_unstable();
    ds.features().select_rows(&idx)
}

/// The class whose probability is explained: the model's own prediction.
pub(crate) fn explained_class(model: &TrainedModel, x: &[f64]) -> Result<Option<usize>> {
    match model.task_kind() {
        TaskKind::Regression => Ok(None),
        TaskKind::Classification => {
            let row = Matrix::new(1, x.len(), x.to_vec())?;
            Ok(Some(argmax(model.predict_proba(&row)?.row(0))))
        }
    }
}

fn check_width(model: &TrainedModel, got: usize) -> Result<()> {
    if got != model.n_features() {
        return Err(Error::ShapeMismatch {
            expected: model.n_features(),
            got,
        });
    }
    Ok(())
}

/// Kernel SHAP attributions for every row of `instances`.
///
/// When every non-trivial coalition fits in the sample budget they are all
/// enumerated and the result is the exact Shapley value. Otherwise whole
/// coalition sizes are enumerated, smallest and largest first, while they
/// fit, and the remaining budget is drawn by kernel-weighted size with each
/// coalition paired with its complement. The efficiency constraint is
/// eliminated by substitution, so attributions always sum to
/// `f(x) - E_background f`.
pub fn explain_kernel_shap(
    model: &TrainedModel,
    background: &TabularDataset,
    instances: &Matrix,
    config: &ExplainerConfig,
) -> Result<ExplanationTable> {
    let m = model.n_features();
    check_width(model, background.n_features())?;
    check_width(model, instances.ncols())?;
    if background.n_rows() == 0 {
        return Err(Error::EmptyData(background.source_id().into()));
    }
    config.validate(m)?;
    let bg = background_sample(background, config.background_size, config.seed);
    let n_samples = config.samples_for(m);

    let results: Vec<Result<(Vec<f64>, f64, f64)>> = (0..instances.nrows())
        .into_par_iter()
        .map(|i| {
            let x = instances.row(i);
            let class = explained_class(model, x)?;
            let sub = seed::derive(config.seed, i as u64);
            explain_one(model, class, &bg, x, n_samples, sub)
        })
        .collect();

    let mut scores = Matrix::with_cols(m);
    let mut base = Vec::with_capacity(results.len());
    let mut outputs = Vec::with_capacity(results.len());
    for r in results {
        let (phi, b, fx) = r?;
        scores.push_row(&phi);
        base.push(b);
        outputs.push(fx);
    }
    Ok(ExplanationTable::new(
        ExplainerId::Shap,
        model.feature_names().to_vec(),
        instances.clone(),
        scores,
    )?
    .with_diagnostics(base, outputs, Vec::new()))
}

struct Coalitions {
    masks: Vec<Vec<bool>>,
    weights: Vec<f64>,
}

impl Coalitions {
    fn new() -> Self {
        Self {
            masks: Vec::new(),
            weights: Vec::new(),
        }
    }

    fn push(&mut self, mask: Vec<bool>, weight: f64) {
        self.masks.push(mask);
        self.weights.push(weight);
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Total Shapley-kernel mass of all coalitions of size `s`.
fn size_mass(m: usize, s: usize) -> f64 {
    (m - 1) as f64 / (s * (m - s)) as f64
}

/// Calls `f` with every subset of `0..m` of size `s`, as a mask.
fn for_each_subset(m: usize, s: usize, mut f: impl FnMut(Vec<bool>)) {
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        let mut mask = vec![false; m];
        idx.iter().for_each(|&j| mask[j] = true);
        f(mask);
        // Advance to the next combination in lexicographic order.
        let Some(pos) = (0..s).rev().find(|&p| idx[p] < m - s + p) else {
            return;
        };
        idx[pos] += 1;
        for q in pos + 1..s {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

fn enumerate_all(m: usize) -> Coalitions {
    let mut c = Coalitions::new();
    for s in 1..m {
        let w = size_mass(m, s) / binomial(m, s);
        for_each_subset(m, s, |mask| c.push(mask, w));
    }
    c
}

fn sample_coalitions(m: usize, budget: usize, seed: u64) -> Coalitions {
    let mut c = Coalitions::new();
    let mut left = budget;
    // Size groups {s, m - s}, smallest s first.
    let mut groups: Vec<usize> = (1..=m / 2).collect();
    let group_count = |s: usize| binomial(m, s) * if 2 * s == m { 1.0 } else { 2.0 };
    while let Some(&s) = groups.first() {
        let count = group_count(s);
        if count > left as f64 {
            break;
        }
        let w = size_mass(m, s) / binomial(m, s);
        for_each_subset(m, s, |mask| c.push(mask, w));
        if 2 * s != m {
            for_each_subset(m, m - s, |mask| c.push(mask, w));
        }
        left -= count as usize;
        groups.remove(0);
    }
    if left == 0 || groups.is_empty() {
        return c;
    }

    let masses: Vec<f64> = groups
        .iter()
        .map(|&s| size_mass(m, s) * if 2 * s == m { 1.0 } else { 2.0 })
        .collect();
    let total: f64 = masses.iter().sum();
    let mut rng = seed::rng(seed);
    let mut drawn: Vec<(Vec<bool>, usize)> = Vec::new();
    let mut index: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut add = |mask: Vec<bool>, drawn: &mut Vec<(Vec<bool>, usize)>| {
        if let Some(&k) = index.get(&mask) {
            drawn[k].1 += 1;
        } else {
            index.insert(mask.clone(), drawn.len());
            drawn.push((mask, 1));
        }
    };
    let mut n_drawn = 0usize;
    while left > 0 {
        let mut u = rng.random::<f64>() * total;
        let mut g = 0;
        while g + 1 < groups.len() && u >= masses[g] {
            u -= masses[g];
            g += 1;
        }
        let s = groups[g];
        let mut mask = vec![false; m];
        for j in sample(&mut rng, m, s) {
            mask[j] = true;
        }
        let complement: Vec<bool> = mask.iter().map(|b| !b).collect();
        add(mask, &mut drawn);
        n_drawn += 1;
        left -= 1;
        if left > 0 {
            add(complement, &mut drawn);
            n_drawn += 1;
            left -= 1;
        }
    }
    for (mask, k) in drawn {
        c.push(mask, total * k as f64 / n_drawn as f64);
    }
    c
}

/// Interventional coalition values, evaluated in chunks.
fn coalition_values(
    model: &TrainedModel,
    class: Option<usize>,
    bg: &Matrix,
    x: &[f64],
    masks: &[Vec<bool>],
) -> Result<Vec<f64>> {
    let nb = bg.nrows();
    let mut out = Vec::with_capacity(masks.len());
    for chunk in masks.chunks(CHUNK) {
        let mut batch = Matrix::with_cols(x.len());
        for mask in chunk {
            for b in bg.rows() {
                let row: Vec<f64> = mask
                    .iter()
                    .zip(x.iter().zip(b))
                    .map(|(&keep, (&xi, &bi))| if keep { xi } else { bi })
                    .collect();
                batch.push_row(&row);
            }
        }
        let f = model.explained_output(&batch, class)?;
        out.extend(f.chunks(nb).map(|c| c.iter().sum::<f64>() / nb as f64));
    }
    Ok(out)
}

fn explain_one(
    model: &TrainedModel,
    class: Option<usize>,
    bg: &Matrix,
    x: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<(Vec<f64>, f64, f64)> {
    let m = x.len();
    let ends = coalition_values(model, class, bg, x, &[vec![false; m], vec![true; m]])?;
    let (v0, fx) = (ends[0], ends[1]);
    let delta = fx - v0;
    if m == 1 {
        return Ok((vec![delta], v0, fx));
    }
    let full = m < usize::BITS as usize - 1 && (1usize << m) - 2 <= n_samples - 2;

    for attempt in 0..MAX_ATTEMPTS {
        let coalitions = if full {
            enumerate_all(m)
        } else {
            sample_coalitions(m, n_samples - 2, seed::derive(seed, attempt as u64))
        };
        let values = coalition_values(model, class, bg, x, &coalitions.masks)?;

        // v(z) - v0 = sum_i z_i phi_i with phi_{m-1} = delta - sum_{i<m-1} phi_i.
        let last = m - 1;
        let mut design = Matrix::with_cols(last);
        let mut target = Vec::with_capacity(values.len());
        let mut row = vec![0.0; last];
        for ((mask, &w), &v) in coalitions.masks.iter().zip(&coalitions.weights).zip(&values) {
            let sw = w.sqrt();
            let zl = if mask[last] { 1.0 } else { 0.0 };
            for (r, &z) in row.iter_mut().zip(mask) {
                *r = sw * (if z { 1.0 } else { 0.0 } - zl);
            }
            design.push_row(&row);
            target.push(sw * (v - v0 - zl * delta));
        }
        let Some(mut phi) = linalg::lstsq(&design, &target) else {
            log::debug!("degenerate coalition sample on attempt {attempt}; redrawing");
            if full {
                break;
            }
            continue;
        };
        phi.push(delta - phi.iter().sum::<f64>());

        let scale = values
            .iter()
            .chain([&v0, &fx])
            .fold(0.0_f64, |acc, v| acc.max(v.abs()));
        for p in &mut phi {
            if p.abs() <= 1e-10 * scale {
                *p = 0.0;
            }
        }
        return Ok((phi, v0, fx));
    }
    Err(Error::DegenerateRegression(MAX_ATTEMPTS))
}

/// Exact Shapley values by summing marginal contributions over all `2^M`
/// coalitions, with the same interventional value function and explained
/// output as [`explain_kernel_shap`] but no regression.
pub fn shapley_exact(model: &TrainedModel, background: &Matrix, instance: &[f64]) -> Result<Vec<f64>> {
    let m = instance.len();
    if m > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures(m));
    }
    check_width(model, m)?;
    check_width(model, background.ncols())?;
    if background.nrows() == 0 {
        return Err(Error::EmptyData("background".into()));
    }
    let class = explained_class(model, instance)?;
    let n_sets = 1usize << m;
    let nb = background.nrows();

    let mut value = Vec::with_capacity(n_sets);
    let per_call = (4096 / nb).max(1);
    let mut set = 0usize;
    while set < n_sets {
        let end = (set + per_call).min(n_sets);
        let mut data = Vec::with_capacity((end - set) * nb * m);
        for s in set..end {
            for b in background.rows() {
                data.extend((0..m).map(|j| if s >> j & 1 == 1 { instance[j] } else { b[j] }));
            }
        }
        let batch = Matrix::new((end - set) * nb, m, data)?;
        let f = model.explained_output(&batch, class)?;
        for c in f.chunks(nb) {
            value.push(c.iter().sum::<f64>() / nb as f64);
        }
        set = end;
    }

    let mut phi = vec![0.0; m];
    for s in 0..n_sets {
        let size = s.count_ones() as usize;
        if size == m {
            continue;
        }
        // |S|! (M - |S| - 1)! / M!
        let w = 1.0 / (m as f64 * binomial(m - 1, size));
        for (i, p) in phi.iter_mut().enumerate() {
            if s >> i & 1 == 0 {
                *p += w * (value[s | 1 << i] - value[s]);
            }
        }
    }
    Ok(phi)
}
