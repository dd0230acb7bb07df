//! Agreement between two explainers: per-feature Pearson correlation of their
//! scores across instances, the mean of those, and the correlation of each
//! instance's largest attribution.
//!
//! A correlation involving a constant series is undefined and counts as zero
//! in every aggregate.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::explain::ExplanationTable;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrelationValue {
    Defined(f64),
    Undefined,
}

impl CorrelationValue {
    /// The value used in aggregates: undefined counts as 0.
    pub fn effective(self) -> f64 {
        match self {
            CorrelationValue::Defined(r) => r,
            CorrelationValue::Undefined => 0.0,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, CorrelationValue::Defined(_))
    }

    pub fn value(self) -> Option<f64> {
        match self {
            CorrelationValue::Defined(r) => Some(r),
            CorrelationValue::Undefined => None,
        }
    }
}

impl fmt::Display for CorrelationValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorrelationValue::Defined(r) => write!(f, "{r}"),
            CorrelationValue::Undefined => f.write_str("undefined"),
        }
    }
}

/// Serialized as the number, or `null` when undefined.
impl Serialize for CorrelationValue {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.value().serialize(s)
    }
}

/// True when the series has no spread relative to its magnitude.
pub fn is_flat(x: &[f64]) -> bool {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let scale = x.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let ss: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    ss.sqrt() <= 1e-12 * scale * n.sqrt()
}

/// Pearson correlation; undefined for fewer than 2 points or a flat series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationValue> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 || is_flat(x) || is_flat(y) {
        return Ok(CorrelationValue::Undefined);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let r = sxy / (sxx * syy).sqrt();
    debug_assert!(r.abs() <= 1.0 + 1e-12, "pearson overshoot {r}");
    Ok(CorrelationValue::Defined(r.clamp(-1.0, 1.0)))
}

fn check_aligned(a: &ExplanationTable, b: &ExplanationTable) -> Result<()> {
    let fa: BTreeSet<&String> = a.feature_names().iter().collect();
    let fb: BTreeSet<&String> = b.feature_names().iter().collect();
    if a.n_instances() != b.n_instances() || fa != fb || fa.len() != a.n_features() {
        return Err(Error::TableMismatch);
    }
    Ok(())
}

/// Correlation of the two tables' scores for one feature, instances aligned
/// by index.
pub fn feature_correlation(
    a: &ExplanationTable,
    b: &ExplanationTable,
    feature: &str,
) -> Result<CorrelationValue> {
    check_aligned(a, b)?;
    pearson(&a.feature_scores(feature)?, &b.feature_scores(feature)?)
}

/// Mean of `effective` values over all entries, undefined ones included in
/// the count. Zero entries give 0.
pub fn mean_effective(values: &[CorrelationValue]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().map(|v| v.effective()).sum::<f64>() / values.len() as f64
}

/// Per-feature correlations in name order, so the result does not depend on
/// which table is passed first.
fn per_feature_sorted(a: &ExplanationTable, b: &ExplanationTable) -> Result<Vec<(String, CorrelationValue)>> {
    check_aligned(a, b)?;
    let mut names = a.feature_names().to_vec();
    names.sort();
    names
        .into_iter()
        .map(|f| {
            let r = pearson(&a.feature_scores(&f)?, &b.feature_scores(&f)?)?;
            Ok((f, r))
        })
        .collect()
}

pub fn average_correlation(a: &ExplanationTable, b: &ExplanationTable) -> Result<f64> {
    let per = per_feature_sorted(a, b)?;
    let values: Vec<CorrelationValue> = per.into_iter().map(|(_, v)| v).collect();
    Ok(mean_effective(&values))
}

/// `|score|` of each instance's top-ranked feature.
pub fn max_importance_series(t: &ExplanationTable) -> Vec<f64> {
    (0..t.n_instances()).map(|i| t.top_magnitude(i)).collect()
}

pub fn correlation_max(a: &ExplanationTable, b: &ExplanationTable) -> Result<CorrelationValue> {
    if a.n_instances() != b.n_instances() {
        return Err(Error::TableMismatch);
    }
    pearson(&max_importance_series(a), &max_importance_series(b))
}

/// Unbiased sample variance (divisor `n - 1`).
pub fn sample_variance(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: values.len(),
        });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Ok(values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

/// All agreement statistics for one (dataset, model) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub source_id: String,
    pub model: String,
    /// In the first table's feature order.
    pub per_feature: Vec<(String, CorrelationValue)>,
    pub average: f64,
    pub correlation_max: CorrelationValue,
    pub undefined_count: usize,
}

impl CorrelationReport {
    pub fn compare(a: &ExplanationTable, b: &ExplanationTable) -> Result<Self> {
        check_aligned(a, b)?;
        let per_feature = a
            .feature_names()
            .iter()
            .map(|f| Ok((f.clone(), feature_correlation(a, b, f)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            source_id: a.source_id().to_owned(),
            model: a.model().to_owned(),
            undefined_count: per_feature.iter().filter(|(_, v)| !v.is_defined()).count(),
            average: average_correlation(a, b)?,
            correlation_max: correlation_max(a, b)?,
            per_feature,
        })
    }

    /// `feature,correlation,defined` rows (undefined written as 0) and a
    /// trailing `#` summary line.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("feature,correlation,defined\n");
        for (f, v) in &self.per_feature {
            out.push_str(&format!("{},{:.6},{}\n", csv_field(f), v.effective(), v.is_defined()));
        }
        out.push_str(&format!(
            "# average={:.6} correlation_max={:.6} correlation_max_defined={} undefined_count={}\n",
            self.average,
            self.correlation_max.effective(),
            self.correlation_max.is_defined(),
            self.undefined_count
        ));
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::{ExplainerId, ExplanationRow};
    use crate::matrix::Matrix;
    use proptest::prelude::*;

    fn table(id: ExplainerId, scores: &[Vec<f64>]) -> ExplanationTable {
        let m = scores[0].len();
        let names = (0..m).map(|j| format!("f{j}")).collect();
        let s = Matrix::from_rows(scores).unwrap();
        ExplanationTable::new(id, names, Matrix::zeros(scores.len(), m), s).unwrap()
    }

    #[test]
    fn pearson_reference_values() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), CorrelationValue::Defined(1.0));
        let flat = pearson(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(flat, CorrelationValue::Undefined);
        assert_eq!(flat.effective(), 0.0);
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap().value().unwrap();
        assert!((r - 0.8).abs() < 1e-12);
        assert_eq!(pearson(&[1.0], &[2.0]).unwrap(), CorrelationValue::Undefined);
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(Error::LengthMismatch(2, 1))));
    }

    #[test]
    fn feature_level_examples() {
        let a = table(ExplainerId::Shap, &[vec![0.1, 0.0], vec![0.4, 0.0], vec![-0.2, 0.0]]);
        let copy = table(ExplainerId::Lime, &[vec![0.1, 1.0], vec![0.4, 2.0], vec![-0.2, 0.5]]);
        assert_eq!(feature_correlation(&a, &copy, "f0").unwrap(), CorrelationValue::Defined(1.0));
        let shifted = table(ExplainerId::Lime, &[vec![2.0 * 0.1 + 3.0, 1.0], vec![2.0 * 0.4 + 3.0, 2.0], vec![2.0 * -0.2 + 3.0, 0.5]]);
        assert!((feature_correlation(&a, &shifted, "f0").unwrap().effective() - 1.0).abs() < 1e-12);
        assert_eq!(feature_correlation(&a, &copy, "f1").unwrap(), CorrelationValue::Undefined);
        assert!(matches!(feature_correlation(&a, &copy, "f9"), Err(Error::FeatureNotFound(_))));
        let short = table(ExplainerId::Lime, &[vec![0.1, 1.0]]);
        assert!(matches!(feature_correlation(&a, &short, "f0"), Err(Error::TableMismatch)));

        let report = CorrelationReport::compare(&a, &copy).unwrap();
        assert_eq!(report.undefined_count, 1);
        assert!((report.average - 0.5).abs() < 1e-12);
        assert!(report.to_csv_string().contains("f1,0.000000,false\n"));
    }

    #[test]
    fn max_series_and_its_correlation() {
        let t = table(ExplainerId::Shap, &[vec![0.1, -0.5, 0.3], vec![0.0, 0.0, 0.0]]);
        assert_eq!(max_importance_series(&t), vec![0.5, 0.0]);
        let a = table(ExplainerId::Shap, &[vec![0.5], vec![0.6], vec![0.7]]);
        let b = table(ExplainerId::Lime, &[vec![-0.2], vec![0.4], vec![0.9]]);
        let r = correlation_max(&a, &b).unwrap().value().unwrap();
        assert!((r - 0.9707253433941508).abs() < 1e-12);
        let flat = table(ExplainerId::Lime, &[vec![1.0], vec![-1.0], vec![1.0]]);
        assert_eq!(correlation_max(&a, &flat).unwrap().effective(), 0.0);
    }

    #[test]
    fn variance_examples() {
        assert_eq!(sample_variance(&[3.0, 3.0, 3.0]).unwrap(), 0.0);
        assert!((sample_variance(&[1.0, 2.0, 3.0, 4.0]).unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert!(sample_variance(&[1.0]).is_err());
    }

    /// Literal port of the comparison pseudocode: rebuild each explainer's
    /// per-feature series by scanning the exported rows for the feature, then
    /// correlate, with NaN read as 0.
    fn comparison_oracle(a: &ExplanationTable, b: &ExplanationTable) -> f64 {
        let lists: Vec<Vec<ExplanationRow>> = vec![a.rows().collect(), b.rows().collect()];
        let features: Vec<String> = lists[0].iter().filter(|r| r.instance == 0).map(|r| r.feature.clone()).collect();
        let mut total = 0.0;
        for feature in &features {
            let mut series: Vec<Vec<f64>> = Vec::new();
            for rows in &lists {
                let n = rows.iter().map(|r| r.instance + 1).max().unwrap_or(0);
                let s = (0..n)
                    .map(|i| rows.iter().find(|r| r.instance == i && &r.feature == feature).unwrap().score)
                    .collect();
                series.push(s);
            }
            let (x, y) = (&series[0], &series[1]);
            let k = x.len() as f64;
            let mx = x.iter().sum::<f64>() / k;
            let my = y.iter().sum::<f64>() / k;
            let cov: f64 = x.iter().zip(y).map(|(p, q)| (p - mx) * (q - my)).sum();
            let vx: f64 = x.iter().map(|p| (p - mx).powi(2)).sum();
            let vy: f64 = y.iter().map(|q| (q - my).powi(2)).sum();
            let r = cov / (vx * vy).sqrt();
            total += if r.is_nan() { 0.0 } else { r };
        }
        total / features.len() as f64
    }

    fn score_grid(n: usize, m: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        // Small integer grid so that constant columns and ties occur often.
        proptest::collection::vec(proptest::collection::vec((-3i32..4).prop_map(|v| v as f64 * 0.25), m), n)
    }

    fn pair() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        (2usize..=5, 1usize..=4).prop_flat_map(|(n, m)| (score_grid(n, m), score_grid(n, m)))
    }

    proptest! {
        #[test]
        fn symmetric_in_argument_order((sa, sb) in pair()) {
            let a = table(ExplainerId::Shap, &sa);
            let b = table(ExplainerId::Lime, &sb);
            prop_assert_eq!(average_correlation(&a, &b).unwrap(), average_correlation(&b, &a).unwrap());
            prop_assert_eq!(correlation_max(&a, &b).unwrap(), correlation_max(&b, &a).unwrap());
            for f in a.feature_names() {
                prop_assert_eq!(feature_correlation(&a, &b, f).unwrap(), feature_correlation(&b, &a, f).unwrap());
            }
        }

        #[test]
        fn affine_invariant((sa, sb) in pair(), scale in 0.01f64..100.0, shift in -10.0f64..10.0) {
            let a = table(ExplainerId::Shap, &sa);
            let b = table(ExplainerId::Lime, &sb);
            let moved: Vec<Vec<f64>> = sb.iter().map(|r| r.iter().map(|v| scale * v + shift).collect()).collect();
            let c = table(ExplainerId::Lime, &moved);
            for f in a.feature_names() {
                let (r1, r2) = (feature_correlation(&a, &b, f).unwrap(), feature_correlation(&a, &c, f).unwrap());
                if let (Some(x), Some(y)) = (r1.value(), r2.value()) {
                    prop_assert!((x - y).abs() < 1e-12);
                }
            }
            // Positive scaling alone keeps every instance's top feature.
            let scaled: Vec<Vec<f64>> = sb.iter().map(|r| r.iter().map(|v| scale * v).collect()).collect();
            let d = table(ExplainerId::Lime, &scaled);
            for i in 0..b.n_instances() {
                prop_assert_eq!(b.rank_order(i)[0], d.rank_order(i)[0]);
            }
        }

        #[test]
        fn average_is_bounded((sa, sb) in pair()) {
            let a = table(ExplainerId::Shap, &sa);
            let b = table(ExplainerId::Lime, &sb);
            let report = CorrelationReport::compare(&a, &b).unwrap();
            let m = a.n_features() as f64;
            let u = report.undefined_count as f64;
            prop_assert!(report.average.abs() <= (m - u) / m + 1e-15);
            for (_, v) in &report.per_feature {
                prop_assert!(v.effective().abs() <= 1.0);
            }
        }

        #[test]
        fn matches_pseudocode_port((sa, sb) in pair()) {
            let a = table(ExplainerId::Shap, &sa);
            let b = table(ExplainerId::Lime, &sb);
            let ours = average_correlation(&a, &b).unwrap();
            prop_assert!((ours - comparison_oracle(&a, &b)).abs() < 1e-12);
        }
    }
}
