use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::dataset::{builtin, TabularDataset, TaskKind};
use crate::models::{train, Hyperparams, ModelKind, TrainedModel};

fn names(m: usize) -> Vec<String> {
    (0..m).map(|j| format!("f{j}")).collect()
}

fn regression(rows: &[Vec<f64>], f: impl Fn(&[f64]) -> f64) -> TabularDataset {
    let y = rows.iter().map(|r| f(r)).collect();
    TabularDataset::new(
        "synthetic",
        names(rows[0].len()),
        Matrix::from_rows(rows).unwrap(),
        y,
        TaskKind::Regression,
    )
    .unwrap()
}

fn random_rows(n: usize, m: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = crate::seed::rng(seed);
    (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(-2.0..2.0)).collect())
        .collect()
}

/// OLS fitted to a noiseless linear target reproduces its weights.
fn linear_model(w: &[f64], seed: u64) -> (TrainedModel, TabularDataset) {
    let rows = random_rows(60, w.len(), seed);
    let ds = regression(&rows, |r| r.iter().zip(w).map(|(a, b)| a * b).sum());
    (train(ModelKind::OlsLinear, &Hyperparams::new(), &ds, 0).unwrap(), ds)
}

fn boosted(rows: &[Vec<f64>], depth: f64, f: impl Fn(&[f64]) -> f64) -> (TrainedModel, TabularDataset) {
    let ds = regression(rows, f);
    let p = Hyperparams::new().with("n_trees", 30.0).with("max_depth", depth);
    (train(ModelKind::GradientBoostingReg, &p, &ds, 0).unwrap(), ds)
}

fn one_row(x: &[f64]) -> Matrix {
    Matrix::from_rows(&[x.to_vec()]).unwrap()
}

fn output(model: &TrainedModel, x: &[f64]) -> f64 {
    model.explained_output(&one_row(x), None).unwrap()[0]
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn linear_model_single_reference_point() {
    let (model, _) = linear_model(&[2.0, -1.0], 1);
    let bg = regression(&[vec![0.0, 0.0]], |_| 0.0);
    let t = explain_kernel_shap(&model, &bg, &one_row(&[1.0, 1.0]), &ExplainerConfig::shap(0)).unwrap();
    assert!(max_abs_diff(t.scores().row(0), &[2.0, -1.0]) < 1e-6);
}

#[test]
fn ignored_feature_gets_zero() {
    let (model, ds) = linear_model(&[1.5, -0.5, 0.0], 2);
    let t = explain_kernel_shap(&model, &ds, ds.features(), &ExplainerConfig::shap(3)).unwrap();
    for row in t.scores().rows() {
        assert!(row[2].abs() < 1e-9);
    }
}

#[test]
fn full_enumeration_matches_brute_force() {
    let rows = random_rows(50, 3, 4);
    let (gbr, ds) = boosted(&rows, 3.0, |r| r[0] * r[1] + (r[2] * 2.0).sin());
    let bg = background_sample(&ds, 100, 0);
    let t = explain_kernel_shap(&gbr, &ds, ds.features(), &ExplainerConfig::shap(0)).unwrap();
    for i in 0..ds.n_rows() {
        let exact = shapley_exact(&gbr, &bg, ds.features().row(i)).unwrap();
        assert!(max_abs_diff(t.scores().row(i), &exact) < 1e-6);
    }

    let iris = builtin("iris").unwrap();
    let knn = train(ModelKind::KnnClassifier, &Hyperparams::new(), &iris, 0).unwrap();
    let t = explain_kernel_shap(&knn, &iris, &iris.features().select_rows(&[0, 60, 120]), &ExplainerConfig::shap(1)).unwrap();
    let bg = background_sample(&iris, 100, 1);
    for (i, idx) in [0, 60, 120].into_iter().enumerate() {
        let exact = shapley_exact(&knn, &bg, iris.features().row(idx)).unwrap();
        assert!(max_abs_diff(t.scores().row(i), &exact) < 1e-6);
    }
}

#[test]
fn additive_model_closed_form() {
    // Depth-one boosting is a sum of one-feature stumps.
    let rows = random_rows(80, 2, 5);
    let (model, ds) = boosted(&rows, 1.0, |r| r[0].powi(2) + (3.0 * r[1]).cos());
    let bg = background_sample(&ds, 100, 0);
    let x = [0.7, -1.1];
    // For an additive f, f(x_i, c) - f(b_i, c) does not depend on c.
    let mut expected = [0.0; 2];
    for b in bg.rows() {
        expected[0] += output(&model, &[x[0], 0.0]) - output(&model, &[b[0], 0.0]);
        expected[1] += output(&model, &[0.0, x[1]]) - output(&model, &[0.0, b[1]]);
    }
    expected.iter_mut().for_each(|e| *e /= bg.nrows() as f64);
    let exact = shapley_exact(&model, &bg, &x).unwrap();
    assert!(max_abs_diff(&exact, &expected) < 1e-9);
    let t = explain_kernel_shap(&model, &ds, &one_row(&x), &ExplainerConfig::shap(0)).unwrap();
    assert!(max_abs_diff(t.scores().row(0), &expected) < 1e-6);
}

#[test]
fn constant_model_scores_nothing() {
    let iris = builtin("iris").unwrap();
    let stump = train(ModelKind::DecisionTree, &Hyperparams::new().with("max_depth", 0.0), &iris, 0).unwrap();
    let probe = iris.features().select_rows(&[3, 77]);
    let exact = shapley_exact(&stump, iris.features(), probe.row(0)).unwrap();
    assert!(exact.iter().all(|&v| v == 0.0));
    let shap = explain_kernel_shap(&stump, &iris, &probe, &ExplainerConfig::shap(0)).unwrap();
    assert!(shap.scores().as_slice().iter().all(|&v| v == 0.0));
    let lime = explain_lime(&stump, &iris, &probe, &ExplainerConfig::lime(0)).unwrap();
    assert!(lime.scores().as_slice().iter().all(|v| v.abs() < 1e-6));
    assert!(lime.surrogate_r2().iter().all(Option::is_none));
}

#[test]
fn single_feature_gets_the_whole_gap() {
    let rows = random_rows(40, 1, 6);
    let (model, ds) = boosted(&rows, 2.0, |r| r[0].powi(3));
    let bg = background_sample(&ds, 100, 0);
    let x = [0.4];
    let expected = output(&model, &x) - bg.rows().map(|b| output(&model, b)).sum::<f64>() / bg.nrows() as f64;
    let t = explain_kernel_shap(&model, &ds, &one_row(&x), &ExplainerConfig::shap(0)).unwrap();
    assert!((t.scores().get(0, 0) - expected).abs() < 1e-12);

    // For a linear model this is also f(x) - f(background mean).
    let (lin, ds) = linear_model(&[3.0], 7);
    let mean = ds.features().column(0).iter().sum::<f64>() / ds.n_rows() as f64;
    let phi = shapley_exact(&lin, ds.features(), &[1.25]).unwrap();
    assert!((phi[0] - (output(&lin, &[1.25]) - output(&lin, &[mean]))).abs() < 1e-9);
}

#[test]
fn symmetric_model_symmetric_scores() {
    let (model, _) = linear_model(&[1.0, 1.0], 8);
    let bg = regression(&[vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]], |_| 0.0);
    let t = explain_kernel_shap(&model, &bg, &one_row(&[3.0, 3.0]), &ExplainerConfig::shap(0)).unwrap();
    assert!((t.scores().get(0, 0) - t.scores().get(0, 1)).abs() < 1e-6);
}

#[test]
fn sampled_estimates_approach_exact_values() {
    let rows = random_rows(60, 8, 9);
    let (model, ds) = boosted(&rows, 3.0, |r| r[0] * r[1] - r[2] + r[3] * r[4] * r[5] + r[6].abs() - 0.5 * r[7]);
    let bg = background_sample(&ds, 20, 0);
    let bg_ds = TabularDataset::new("bg", names(8), bg.clone(), vec![0.0; bg.nrows()], TaskKind::Regression).unwrap();
    let probe = ds.features().select_rows(&(0..12).collect::<Vec<_>>());
    let exact: Vec<Vec<f64>> = probe.rows().map(|x| shapley_exact(&model, &bg, x).unwrap()).collect();
    let mad = |n: usize| {
        let t = explain_kernel_shap(&model, &bg_ds, &probe, &ExplainerConfig::shap(10).with_samples(n)).unwrap();
        let mut total = 0.0;
        for (i, e) in exact.iter().enumerate() {
            total += t.scores().row(i).iter().zip(e).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
        total / (8 * exact.len()) as f64
    };
    let (m64, m128, m256) = (mad(64), mad(128), mad(256));
    assert!(m256 < 1e-9, "{m256}");
    assert!(m128 < m64, "{m128} vs {m64}");
}

#[test]
fn sampled_mode_keeps_efficiency() {
    let rows = random_rows(80, 12, 11);
    let (model, ds) = boosted(&rows, 3.0, |r| r.iter().enumerate().map(|(j, v)| v * v * j as f64).sum());
    let probe = ds.features().select_rows(&[0, 1, 2, 3]);
    let t = explain_kernel_shap(&model, &ds, &probe, &ExplainerConfig::shap(2).with_samples(100)).unwrap();
    for i in 0..4 {
        let gap = t.instance_outputs()[i] - t.base_values()[i];
        assert!((t.scores().row(i).iter().sum::<f64>() - gap).abs() < 1e-6);
    }
}

#[test]
fn shap_rejects_too_few_samples_and_wide_inputs() {
    let (model, ds) = linear_model(&[1.0, 2.0, 3.0], 12);
    let cfg = ExplainerConfig::shap(0).with_samples(4);
    assert!(explain_kernel_shap(&model, &ds, ds.features(), &cfg).is_err());
    let wide = Matrix::zeros(1, 4);
    assert!(matches!(
        explain_kernel_shap(&model, &ds, &wide, &ExplainerConfig::shap(0)),
        Err(Error::ShapeMismatch { .. })
    ));
    let big = Matrix::zeros(1, 21);
    assert!(matches!(shapley_exact(&model, &big, big.row(0)), Err(Error::TooManyFeatures(21))));
}

#[test]
fn lime_recovers_linear_ranking() {
    let w = [1.0, -2.0, 0.5, 3.0, -0.25];
    let spread = [1.0, 0.3, 4.0, 0.5, 2.0];
    let mut rng = crate::seed::rng(13);
    let rows: Vec<Vec<f64>> = (0..200)
        .map(|_| spread.iter().map(|s| s * rng.random_range(-1.0..1.0)).collect())
        .collect();
    let ds = regression(&rows, |r| r.iter().zip(&w).map(|(a, b)| a * b).sum());
    let model = train(ModelKind::OlsLinear, &Hyperparams::new(), &ds, 0).unwrap();
    let sigma: Vec<f64> = (0..5)
        .map(|j| {
            let c = ds.features().column(j);
            let mu = c.iter().sum::<f64>() / c.len() as f64;
            (c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / c.len() as f64).sqrt()
        })
        .collect();
    let mut expected: Vec<usize> = (0..5).collect();
    expected.sort_by(|&a, &b| (w[b] * sigma[b]).abs().total_cmp(&(w[a] * sigma[a]).abs()));

    let cfg = ExplainerConfig::lime(21).with_samples(5000);
    let t = explain_lime(&model, &ds, &ds.features().select_rows(&[0, 1, 2]), &cfg).unwrap();
    for i in 0..3 {
        assert_eq!(t.rank_order(i), expected.as_slice());
        assert!(t.surrogate_r2()[i].unwrap() >= 0.99);
    }
}

#[test]
fn lime_is_deterministic_and_skips_flat_features() {
    let mut rows = random_rows(50, 3, 14);
    rows.iter_mut().for_each(|r| r[1] = 5.0);
    let (model, ds) = boosted(&rows, 2.0, |r| r[0] - r[2] * r[2]);
    let cfg = ExplainerConfig::lime(3).with_samples(300);
    let a = explain_lime(&model, &ds, ds.features(), &cfg).unwrap();
    let b = explain_lime(&model, &ds, ds.features(), &cfg).unwrap();
    assert_eq!(a.to_csv_string(), b.to_csv_string());
    assert!(a.scores().column(1).iter().all(|&v| v == 0.0));

    let flat = regression(&[vec![1.0, 2.0], vec![1.0, 2.0]], |_| 0.0);
    let flat_model = train(ModelKind::Ridge, &Hyperparams::new(), &regression(&random_rows(10, 2, 0), |r| r[0]), 0).unwrap();
    assert!(matches!(
        explain_lime(&flat_model, &flat, flat.features(), &cfg),
        Err(Error::NothingToPerturb(_))
    ));
}

fn table(scores: &[&[f64]]) -> ExplanationTable {
    let m = scores[0].len();
    let s = Matrix::from_rows(scores).unwrap();
    let v = Matrix::from_rows(&(0..scores.len()).map(|i| vec![i as f64 + 0.5; m]).collect::<Vec<_>>()).unwrap();
    ExplanationTable::new(ExplainerId::Lime, names(m), v, s).unwrap()
}

#[test]
fn export_layout_and_ranking() {
    let t = table(&[&[0.1, -0.5, 0.3], &[0.0, 0.0, 0.2]]);
    let text = t.to_csv_string();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[0], "explainer,instance,rank,feature,value,score");
    assert!(lines[1].starts_with("lime,0,0,f1,"));
    assert!(lines[2].starts_with("lime,0,1,f2,"));
    assert!(lines[3].starts_with("lime,0,2,f0,"));
    // Ties keep feature order.
    assert!(lines[5].starts_with("lime,1,1,f0,"));
    assert!(lines[6].starts_with("lime,1,2,f1,"));
    assert_eq!(t.top_magnitude(0), 0.5);
}

#[test]
fn export_reload_export_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.csv");
    let t = table(&[&[0.1, -0.5, 0.3], &[0.0, 0.0, 0.0], &[1.0 / 3.0, -1e-300, 7e12]]);
    export_explanations(&t, &path).unwrap();
    let first = std::fs::read_to_string(&path).unwrap();
    let back = load_explanations(&path).unwrap();
    for name in t.feature_names() {
        assert_eq!(back.feature_scores(name).unwrap(), t.feature_scores(name).unwrap());
    }
    export_explanations(&back, &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), first);

    let missing = dir.path().join("no/such/dir/e.csv");
    assert!(matches!(export_explanations(&t, &missing), Err(Error::Write { .. })));
}

#[test]
fn malformed_files_are_rejected() {
    let head = "explainer,instance,rank,feature,value,score\n";
    let cases = [
        "a,b,c\n".to_owned(),
        format!("{head}shap,0,0,a,1,2\nlime,0,1,b,1,1\n"),
        format!("{head}shap,0,1,a,1,2\n"),
        format!("{head}shap,0,0,a,1,1\nshap,0,1,b,1,2\n"),
        format!("{head}shap,0,0,a,1,NaN\n"),
        format!("{head}shap,0,0,a,1,1\nshap,1,0,b,1,1\n"),
        format!("{head}shap,0,0,a,1,2\nshap,0,1,a,1,1\n"),
        format!("{head}svm,0,0,a,1,2\n"),
    ];
    for c in cases {
        assert!(parse_explanations(c.as_bytes()).is_err(), "{c}");
    }
    let empty = parse_explanations(head.as_bytes()).unwrap();
    assert_eq!(empty.n_instances(), 0);
}

proptest! {
    #[test]
    fn csv_round_trip(n in 1usize..5, m in 1usize..5, seed in any::<u64>(), zeros in 0usize..3) {
        let mut rng = crate::seed::rng(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|j| if j < zeros { 0.0 } else { rng.random_range(-1e3..1e3) }).collect())
            .collect();
        let t = ExplanationTable::new(
            ExplainerId::Shap,
            names(m),
            Matrix::from_rows(&rows).unwrap(),
            Matrix::from_rows(&rows).unwrap(),
        ).unwrap();
        let text = t.to_csv_string();
        let back = parse_explanations(text.as_bytes()).unwrap();
        prop_assert_eq!(back.to_csv_string(), text);
        prop_assert_eq!(back.n_instances() * back.n_features(), back.rows().count());
    }

    #[test]
    fn shap_efficiency_on_linear_models(w in proptest::collection::vec(-3.0f64..3.0, 2..6), seed in 0u64..1000) {
        let (model, ds) = linear_model(&w, seed);
        let probe = ds.features().select_rows(&[0, 1]);
        let t = explain_kernel_shap(&model, &ds, &probe, &ExplainerConfig::shap(seed)).unwrap();
        let bg = background_sample(&ds, 100, seed);
        let means: Vec<f64> = (0..w.len()).map(|j| bg.column(j).iter().sum::<f64>() / bg.nrows() as f64).collect();
        for i in 0..2 {
            let gap = t.instance_outputs()[i] - t.base_values()[i];
            prop_assert!((t.scores().row(i).iter().sum::<f64>() - gap).abs() < 1e-6);
            let (_, coef) = model.linear_coefficients().unwrap();
            for j in 0..w.len() {
                let analytic = coef[j] * (probe.get(i, j) - means[j]);
                prop_assert!((t.scores().get(i, j) - analytic).abs() < 1e-6);
            }
        }
    }
}
