//! Confusion matrices, the screening metric suite, and the paired t-test used
//! to compare methods across cross-validation folds.

mod student_t;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use student_t::{incomplete_beta, two_sided_p};

/// Counts of (true class, predicted class) pairs; rows are true classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n: n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, true_class: usize, predicted: usize) -> u64 {
        self.counts[true_class * self.n + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, true_class: usize) -> u64 {
        self.counts[true_class * self.n..(true_class + 1) * self.n]
            .iter()
            .sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.n).map(|r| self.get(r, predicted)).sum()
    }

    pub fn add(&mut self, true_class: usize, predicted: usize) {
        self.counts[true_class * self.n + predicted] += 1;
    }

    /// Element-wise accumulation of another matrix of the same order.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.n != self.n {
            return Err(Error::DimensionMismatch(format!(
                "cannot merge {}-class into {}-class confusion matrix",
                other.n, self.n
            )));
        }
        for (a, &b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        (0..self.n)
            .map(|r| self.counts[r * self.n..(r + 1) * self.n].to_vec())
            .collect()
    }
}

/// Builds a confusion matrix from prediction/label pairs.
pub fn confusion(
    predictions: &[usize],
    labels: &[usize],
    n_classes: usize,
) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(n_classes);
    for (&y_hat, &y) in predictions.iter().zip(labels) {
        if y >= n_classes || y_hat >= n_classes {
            return Err(Error::InvalidInput(format!(
                "class index out of range: true {y}, predicted {y_hat}, n = {n_classes}"
            )));
        }
        cm.add(y, y_hat);
    }
    Ok(cm)
}

/// How per-class metrics are combined into a single number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    /// Unweighted mean over classes.
    Macro,
    /// Mean weighted by true-class support.
    Weighted,
}

/// The metric suite computed from one confusion matrix. Serializes to the
/// flat schema: accuracy, precision_macro, sensitivity_macro, f1_macro,
/// sensitivity_per_class, confusion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub sensitivity_macro: f64,
    pub f1_macro: f64,
    pub sensitivity_per_class: Vec<f64>,
    pub confusion: Vec<Vec<u64>>,
    /// Set when some class had an empty row or column and contributed 0.
    #[serde(skip)]
    pub degenerate_denominator: bool,
}

struct PerClass {
    precision: Vec<f64>,
    sensitivity: Vec<f64>,
    f1: Vec<f64>,
    degenerate: bool,
}

fn per_class_metrics(cm: &ConfusionMatrix) -> Result<PerClass> {
    if cm.total() == 0 {
        return Err(Error::InvalidInput("empty confusion matrix".into()));
    }
    let n = cm.n_classes();
    let mut out = PerClass {
        precision: vec![0.0; n],
        sensitivity: vec![0.0; n],
        f1: vec![0.0; n],
        degenerate: false,
    };
    for j in 0..n {
        let tp = cm.get(j, j) as f64;
        let col = cm.col_sum(j) as f64;
        let row = cm.row_sum(j) as f64;
        if col > 0.0 {
            out.precision[j] = tp / col;
        } else {
            out.degenerate = true;
        }
        if row > 0.0 {
            out.sensitivity[j] = tp / row;
        } else {
            out.degenerate = true;
        }
        let denom = out.precision[j] + out.sensitivity[j];
        if denom > 0.0 {
            out.f1[j] = 2.0 * out.precision[j] * out.sensitivity[j] / denom;
        }
    }
    Ok(out)
}

fn average(values: &[f64], cm: &ConfusionMatrix, how: Averaging) -> f64 {
    let n = values.len();
    match how {
        Averaging::Macro => values.iter().sum::<f64>() / n as f64,
        Averaging::Weighted => {
            let total = cm.total() as f64;
            values
                .iter()
                .enumerate()
                .map(|(j, &v)| v * cm.row_sum(j) as f64 / total)
                .sum()
        }
    }
}

/// Macro-averaged report (the paper-facing default).
pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    metrics_with(cm, Averaging::Macro)
}

/// Report with an explicit averaging convention for the three summary values.
pub fn metrics_with(cm: &ConfusionMatrix, how: Averaging) -> Result<MetricsReport> {
    let per = per_class_metrics(cm)?;
    let total = cm.total() as f64;
    let trace: u64 = (0..cm.n_classes()).map(|j| cm.get(j, j)).sum();
    Ok(MetricsReport {
        accuracy: trace as f64 / total,
        precision_macro: average(&per.precision, cm, how),
        sensitivity_macro: average(&per.sensitivity, cm, how),
        f1_macro: average(&per.f1, cm, how),
        sensitivity_per_class: per.sensitivity,
        confusion: cm.to_rows(),
        degenerate_denominator: per.degenerate,
    })
}

/// Result of a two-sided paired t-test.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PairedTTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
}

/// Paired t-test on matched samples `a` and `b`:
/// `t = mean(d) / (sd(d) / sqrt(k))` with `d = a - b`, df = k - 1.
pub fn paired_ttest(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "paired samples of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    let k = a.len();
    if k < 2 {
        return Err(Error::InvalidInput(format!(
            "paired t-test needs at least 2 pairs, got {k}"
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput("non-finite difference".into()));
    }
    let mean = diffs.iter().sum::<f64>() / k as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (k - 1) as f64;
    if var == 0.0 {
        return Err(Error::DegenerateSample(
            "all paired differences are identical; t statistic is undefined".into(),
        ));
    }
    let t = mean / (var.sqrt() / (k as f64).sqrt());
    let df = k - 1;
    Ok(PairedTTest {
        t,
        p: two_sided_p(t, df as f64),
        df,
    })
}
