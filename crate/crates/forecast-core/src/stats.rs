//! Point-forecast error metrics and the two-step multi-model comparison:
//! Friedman's rank test with the Iman-Davenport correction, followed by
//! Hochberg-style post hoc z-tests against a reference model.

pub mod special;

#[cfg(not(feature = "std"))]
use num_traits::Float as _;

use alloc::{string::String, vec, vec::Vec};

use crate::{Error, Result};

/// Default epsilon of the stabilized SMAPE denominator.
pub const SMAPE_EPSILON: f64 = 0.1;

/// The four point-forecast measures used in model comparisons. Lower is
/// better for all of them. `arank` is only meaningful in a multi-model
/// context and is absent for a model evaluated on its own.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricSet {
    pub rmse: f64,
    pub mae: f64,
    pub smape: f64,
    pub arank: Option<f64>,
}

fn check_pair(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch {
            left: actual.len(),
            right: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Root mean squared error.
pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let h = actual.len() as f64;
    let ss: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    Ok((ss / h).sqrt())
}

/// Mean absolute error.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let h = actual.len() as f64;
    let sa: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p).abs())
        .sum();
    Ok(sa / h)
}

/// Symmetric mean absolute percentage error with the stabilized denominator
/// `max(|y| + |yhat| + eps, 0.5 + eps)`, which keeps near-zero actuals from
/// blowing the ratio up. Result is in percent, bounded by 200.
pub fn smape_modified(actual: &[f64], predicted: &[f64], epsilon: f64) -> Result<f64> {
    check_pair(actual, predicted)?;
    if epsilon <= 0.0 {
        return Err(Error::DomainError("smape epsilon must be positive"));
    }
    let h = actual.len() as f64;
    let s: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p).abs() / (y.abs() + p.abs() + epsilon).max(0.5 + epsilon))
        .sum();
    Ok(100.0 * s / h)
}

/// The unstabilized SMAPE variant with a square root enclosing the sum of
/// half-denominator terms. Kept selectable for comparison; the stabilized
/// [`smape_modified`] is what reports use.
pub fn smape_root_form(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(actual, predicted)?;
    let h = actual.len() as f64;
    let s: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p).abs() / ((y.abs() + p.abs()) / 2.0))
        .sum();
    Ok(100.0 * s.sqrt() / h)
}

/// Ranks `values` ascending, averaging tied positions. Returns ranks starting
/// at 1.
pub fn rank_ascending(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("NaN in ranking"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // positions i..=j (0-based) share the average of ranks i+1..=j+1
        let avg = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Average rank of each model's absolute error across time points.
///
/// At every time point the models are ranked ascending by `|y - yhat|`, ties
/// averaged; each model's ARank is the mean of its per-point ranks, so it
/// lies in `[1, M]`.
pub fn arank(actual: &[f64], predictions: &[&[f64]]) -> Result<Vec<f64>> {
    let m = predictions.len();
    if m < 2 {
        return Err(Error::InsufficientData("arank needs at least two models"));
    }
    for p in predictions {
        check_pair(actual, p)?;
    }
    let h = actual.len();
    let mut sums = vec![0.0; m];
    let mut errs = vec![0.0; m];
    for i in 0..h {
        for (j, p) in predictions.iter().enumerate() {
            errs[j] = (actual[i] - p[i]).abs();
        }
        for (j, r) in rank_ascending(&errs).into_iter().enumerate() {
            sums[j] += r;
        }
    }
    Ok(sums.into_iter().map(|s| s / h as f64).collect())
}

/// Per-(dataset, model) metric values with their rank matrix, the input to
/// the two-step comparison. Lower metric values are better.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ComparisonTable {
    pub models: Vec<String>,
    pub datasets: Vec<String>,
    /// `values[i][j]` is the metric of model `j` on dataset `i`.
    pub values: Vec<Vec<f64>>,
    /// Per-dataset ascending ranks with ties averaged.
    pub ranks: Vec<Vec<f64>>,
    /// Mean rank of each model across datasets.
    pub mean_ranks: Vec<f64>,
}

impl ComparisonTable {
    pub fn new(models: Vec<String>, datasets: Vec<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let k = models.len();
        let n = datasets.len();
        if k < 2 {
            return Err(Error::InsufficientData("need at least two models"));
        }
        if n < 2 {
            return Err(Error::InsufficientData("need at least two datasets"));
        }
        if values.len() != n {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: n,
            });
        }
        let mut ranks = Vec::with_capacity(n);
        for row in &values {
            if row.len() != k {
                return Err(Error::LengthMismatch {
                    left: row.len(),
                    right: k,
                });
            }
            ranks.push(rank_ascending(row));
        }
        let mean_ranks = (0..k)
            .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / n as f64)
            .collect();
        Ok(ComparisonTable {
            models,
            datasets,
            values,
            ranks,
            mean_ranks,
        })
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn n_datasets(&self) -> usize {
        self.datasets.len()
    }
}

/// Friedman chi-squared with the Iman-Davenport F correction.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FriedmanResult {
    pub chi2: f64,
    /// Iman-Davenport statistic; infinite when the ranks separate perfectly.
    pub f_f: f64,
    /// Upper-tail p-value of `f_f` under F((k-1), (k-1)(N-1)).
    pub p_value: f64,
    /// True when `chi2 == N(k-1)`, the perfect-separation boundary where the
    /// Iman-Davenport denominator vanishes.
    pub degenerate: bool,
}

/// Runs the Friedman test on a comparison table.
///
/// Mean ranks feed `chi2 = 12N/(k(k+1)) * (sum R_j^2 - k(k+1)^2/4)` and the
/// Iman-Davenport correction `F_F = (N-1) chi2 / (N(k-1) - chi2)`.
pub fn friedman(table: &ComparisonTable) -> Result<FriedmanResult> {
    let k = table.n_models() as f64;
    let n = table.n_datasets() as f64;
    let sum_r2: f64 = table.mean_ranks.iter().map(|r| r * r).sum();
    let chi2 = 12.0 * n / (k * (k + 1.0)) * (sum_r2 - k * (k + 1.0) * (k + 1.0) / 4.0);
    // guard the tiny negatives that tie-averaging roundoff can produce
    let chi2 = chi2.max(0.0);
    let denom = n * (k - 1.0) - chi2;
    if denom <= 1e-12 {
        return Ok(FriedmanResult {
            chi2,
            f_f: f64::INFINITY,
            p_value: 0.0,
            degenerate: true,
        });
    }
    let f_f = (n - 1.0) * chi2 / denom;
    let p_value = 1.0 - special::f_cdf(f_f, k - 1.0, (k - 1.0) * (n - 1.0))?;
    Ok(FriedmanResult {
        chi2,
        f_f,
        p_value,
        degenerate: false,
    })
}

/// One post hoc comparison against the reference model.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HochbergComparison {
    pub model: String,
    /// `(R_model - R_reference) / sqrt(k(k+1)/(6N))`.
    pub z: f64,
    /// Two-sided normal p-value.
    pub p_value: f64,
    /// Whether the i-th smallest p-value fell below `(i/k) * alpha`.
    pub reject: bool,
}

/// Omnibus test plus the post hoc round against a reference model.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TwoStepResult {
    pub friedman: FriedmanResult,
    pub reference: String,
    pub alpha: f64,
    /// Comparisons in the table's model order, reference excluded.
    pub comparisons: Vec<HochbergComparison>,
}

/// Step-two post hoc z-tests of every model against `reference`.
///
/// The i-th smallest p-value is called significant when it is below
/// `(i/k) * alpha`, with `k` the total number of models in the table.
pub fn hochberg(table: &ComparisonTable, reference: &str, alpha: f64) -> Result<TwoStepResult> {
    let k = table.n_models();
    let n = table.n_datasets();
    let ref_idx = table
        .models
        .iter()
        .position(|m| m == reference)
        .ok_or_else(|| Error::UnknownReference(String::from(reference)))?;
    let denom = (k as f64 * (k as f64 + 1.0) / (6.0 * n as f64)).sqrt();
    let mut comparisons: Vec<HochbergComparison> = table
        .models
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != ref_idx)
        .map(|(j, name)| {
            let z = (table.mean_ranks[j] - table.mean_ranks[ref_idx]) / denom;
            let p_value = 2.0 * (1.0 - special::normal_cdf(z.abs()));
            HochbergComparison {
                model: name.clone(),
                z,
                p_value,
                reject: false,
            }
        })
        .collect();

    // sort p ascending; the i-th smallest (1-based) is tested at (i/k) alpha
    let mut order: Vec<usize> = (0..comparisons.len()).collect();
    order.sort_by(|&a, &b| {
        comparisons[a]
            .p_value
            .partial_cmp(&comparisons[b].p_value)
            .expect("p-values are finite")
    });
    for (i, &idx) in order.iter().enumerate() {
        let threshold = (i + 1) as f64 / k as f64 * alpha;
        comparisons[idx].reject = comparisons[idx].p_value < threshold;
    }

    Ok(TwoStepResult {
        friedman: friedman(table)?,
        reference: String::from(reference),
        alpha,
        comparisons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn names(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn rmse_mae_hand_values() {
        let a = [2.0, 4.0];
        let p = [1.0, 6.0];
        // direct arithmetic: mean squared error (1 + 4)/2 = 2.5
        assert!((rmse(&a, &p).unwrap() - 2.5f64.sqrt()).abs() < 1e-12);
        assert!((mae(&a, &p).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        assert_eq!(mae(&a, &a).unwrap(), 0.0);
        // single point: both collapse to |e|
        assert!((rmse(&[3.0], &[5.5]).unwrap() - 2.5).abs() < 1e-12);
        assert!((mae(&[3.0], &[5.5]).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn metric_input_validation() {
        assert_eq!(
            rmse(&[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { left: 1, right: 2 })
        );
        assert_eq!(rmse(&[], &[]), Err(Error::EmptyInput));
    }

    #[test]
    fn smape_hand_values() {
        assert_eq!(smape_modified(&[1.0, 2.0], &[1.0, 2.0], 0.1).unwrap(), 0.0);
        // 0/max(0.1, 0.6) guards the 0/0 case
        assert_eq!(smape_modified(&[0.0], &[0.0], 0.1).unwrap(), 0.0);
        // 100 * 50 / max(150.1, 0.6)
        let v = smape_modified(&[100.0], &[50.0], 0.1).unwrap();
        assert!((v - 100.0 * 50.0 / 150.1).abs() < 1e-9);
        assert!((v - 33.31112591605596).abs() < 1e-9);
    }

    #[test]
    fn smape_bounded_by_200() {
        let a = [0.0, 1.0, -3.0, 1000.0];
        let p = [5.0, -1.0, 3.0, -1000.0];
        let v = smape_modified(&a, &p, 0.1).unwrap();
        assert!(v <= 200.0);
    }

    #[test]
    fn rank_ties_averaged() {
        assert_eq!(rank_ascending(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        assert_eq!(rank_ascending(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(rank_ascending(&[5.0, 5.0, 5.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn arank_hand_values() {
        // model A strictly closer at both points
        let actual = [1.0, 2.0];
        let a = [1.1, 2.1];
        let b = [1.5, 2.5];
        let r = arank(&actual, &[&a, &b]).unwrap();
        assert_eq!(r, vec![1.0, 2.0]);

        // identical predictions: everyone gets (M+1)/2
        let same = [1.0, 2.0];
        let r = arank(&actual, &[&same, &same, &same]).unwrap();
        assert_eq!(r, vec![2.0, 2.0, 2.0]);

        // errors (1,2,3) then (3,2,1) balance out
        let actual = [0.0, 0.0];
        let m1 = [1.0, 3.0];
        let m2 = [2.0, 2.0];
        let m3 = [3.0, 1.0];
        let r = arank(&actual, &[&m1, &m2, &m3]).unwrap();
        assert_eq!(r, vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn friedman_hand_example() {
        // ranks A(1,1,2), B(2,2,1), C(3,3,3) expressed through values
        let values = vec![
            vec![1.0, 2.0, 3.0],
            vec![1.0, 2.0, 3.0],
            vec![2.0, 1.0, 3.0],
        ];
        let t = ComparisonTable::new(names(&["A", "B", "C"]), names(&["d1", "d2", "d3"]), values)
            .unwrap();
        let r = friedman(&t).unwrap();
        assert!((r.chi2 - 14.0 / 3.0).abs() < 1e-3, "chi2 {}", r.chi2);
        assert!((r.f_f - 7.0).abs() < 1e-3, "f_f {}", r.f_f);
        assert!(!r.degenerate);
    }

    #[test]
    fn friedman_identical_models_is_zero() {
        let values = vec![vec![1.0, 1.0, 1.0], vec![2.0, 2.0, 2.0]];
        let t = ComparisonTable::new(names(&["A", "B", "C"]), names(&["d1", "d2"]), values)
            .unwrap();
        let r = friedman(&t).unwrap();
        assert_eq!(r.chi2, 0.0);
        assert_eq!(r.f_f, 0.0);
    }

    #[test]
    fn friedman_degenerate_separation() {
        // two models, perfectly separated on every dataset: chi2 = N(k-1)
        let values = vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]];
        let t = ComparisonTable::new(names(&["A", "B"]), names(&["d1", "d2", "d3"]), values)
            .unwrap();
        let r = friedman(&t).unwrap();
        assert!(r.degenerate);
        assert!(r.f_f.is_infinite());
        assert_eq!(r.p_value, 0.0);
    }

    #[test]
    fn hochberg_zero_gap_never_rejected() {
        let values = vec![
            vec![1.0, 1.0, 5.0],
            vec![2.0, 2.0, 9.0],
            vec![4.0, 4.0, 1.0],
        ];
        let t = ComparisonTable::new(names(&["REF", "M", "X"]), names(&["a", "b", "c"]), values)
            .unwrap();
        let r = hochberg(&t, "REF", 0.10).unwrap();
        let m = r.comparisons.iter().find(|c| c.model == "M").unwrap();
        assert_eq!(m.z, 0.0);
        assert!((m.p_value - 1.0).abs() < 1e-12);
        assert!(!m.reject);
    }

    #[test]
    fn hochberg_denominator_k8_n9() {
        // rank gap of 5.0 with k = 8, N = 9: z = 5 / sqrt(72/54)
        let want = 5.0 / (8.0_f64 * 9.0 / (6.0 * 9.0)).sqrt();
        assert!((want - 4.330127018922194_f64).abs() < 1e-12);
    }

    #[test]
    fn hochberg_unknown_reference() {
        let values = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let t = ComparisonTable::new(names(&["A", "B"]), names(&["d1", "d2"]), values).unwrap();
        assert!(matches!(
            hochberg(&t, "NOPE", 0.1),
            Err(Error::UnknownReference(_))
        ));
    }

    #[test]
    fn hochberg_z_antisymmetric_in_reference() {
        let values = vec![
            vec![1.0, 3.0, 2.0],
            vec![2.0, 1.0, 3.0],
            vec![1.5, 2.5, 3.5],
            vec![1.0, 2.0, 3.0],
        ];
        let t = ComparisonTable::new(
            names(&["A", "B", "C"]),
            names(&["d1", "d2", "d3", "d4"]),
            values,
        )
        .unwrap();
        let ra = hochberg(&t, "A", 0.1).unwrap();
        let rb = hochberg(&t, "B", 0.1).unwrap();
        let z_b_vs_a = ra.comparisons.iter().find(|c| c.model == "B").unwrap().z;
        let z_a_vs_b = rb.comparisons.iter().find(|c| c.model == "A").unwrap().z;
        assert!((z_b_vs_a + z_a_vs_b).abs() < 1e-12);
    }
}
