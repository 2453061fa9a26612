//! Cost matrices and the decisions they drive.
//!
//! Two flavors exist. The score-level matrix reshapes the classifier's raw
//! outputs before the softmax so that critical classes keep the upper hand;
//! the loss-level matrix prices misclassification for risk computation and
//! cost-weighted losses. Both can be validated against the clinical severity
//! ordering used for the three-class screening setup.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::Matrix;

/// How a score cost matrix transforms a logit row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreTransform {
    /// `o = f * xi` (row vector times matrix). Label-free, so it applies at
    /// both train and test time.
    MatrixProduct,
    /// `o = xi[y, :] .* f`, element-wise scaling by the true-class row.
    /// Needs labels, so it is a train-only interpretation.
    LabelRow,
}

/// Which flavor of cost matrix a raw entry grid represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    Score,
    Loss,
}

/// All-positive score-level cost matrix (the multiplier grid applied to logits).
///
/// Entries must be nonnegative with a strictly positive diagonal; the identity
/// matrix is the neutral "no costs" element. Handcrafted clinical matrices are
/// strictly positive everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCostMatrix {
    entries: Matrix,
}

impl ScoreCostMatrix {
    pub fn new(entries: Matrix) -> Result<Self> {
        if entries.rows() != entries.cols() {
            return Err(Error::DimensionMismatch(format!(
                "score cost matrix must be square, got {}x{}",
                entries.rows(),
                entries.cols()
            )));
        }
        if !entries.all_finite() {
            return Err(Error::InvalidInput(
                "score cost matrix has non-finite entries".into(),
            ));
        }
        if entries.data().iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidInput(
                "score cost entries must be nonnegative".into(),
            ));
        }
        for i in 0..entries.rows() {
            if entries.get(i, i) <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "score cost diagonal entry ({i},{i}) must be positive"
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Neutral element: leaves logits untouched.
    pub fn identity(n: usize) -> Self {
        Self {
            entries: Matrix::identity(n),
        }
    }

    /// `c * I`; positive uniform scaling never moves the argmax.
    pub fn scaled_identity(n: usize, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidInput(format!(
                "scale must be positive, got {c}"
            )));
        }
        Self::new(Matrix::identity(n).map(|x| c * x))
    }

    /// The 3-class matrix encoding the expert severity ordering under the
    /// default class roles. Diagonal 1; each misclassification direction gets
    /// a damping factor, smaller for more severe directions. The factors sit
    /// close to identity so the score mix stays well conditioned.
    pub fn clinical_default() -> Self {
        let roles = ClassRoles::default_benchmark();
        let mut m = Matrix::identity(3);
        let severity = roles.severity_ranking();
        let factors = [0.04, 0.05, 0.06, 0.07, 0.08, 0.09];
        for ((a, b), f) in severity.into_iter().zip(factors) {
            m.set(a, b, f);
        }
        Self { entries: m }
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::new(read_square_csv(path)?)
    }

    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.entries.data().iter().all(|&x| x > 0.0)
    }
}

/// Zero-diagonal loss-level cost matrix: entry `(p, q)` prices deciding `q`
/// when the truth is `p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCostMatrix {
    entries: Matrix,
}

impl LossCostMatrix {
    pub fn new(entries: Matrix) -> Result<Self> {
        if entries.rows() != entries.cols() {
            return Err(Error::DimensionMismatch(format!(
                "loss cost matrix must be square, got {}x{}",
                entries.rows(),
                entries.cols()
            )));
        }
        if !entries.all_finite() {
            return Err(Error::InvalidInput(
                "loss cost matrix has non-finite entries".into(),
            ));
        }
        for p in 0..entries.rows() {
            for q in 0..entries.cols() {
                let v = entries.get(p, q);
                if p == q && v != 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "loss cost diagonal entry ({p},{p}) must be zero, got {v}"
                    )));
                }
                if p != q && v < 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "loss cost entry ({p},{q}) must be nonnegative, got {v}"
                    )));
                }
            }
        }
        Ok(Self { entries })
    }

    /// Uniform 0-1 costs: every mistake costs 1, correct decisions cost 0.
    pub fn zero_one(n: usize) -> Self {
        Self {
            entries: Matrix::from_fn(n, n, |p, q| if p == q { 0.0 } else { 1.0 }),
        }
    }

    /// The 3-class matrix encoding the expert severity ordering under the
    /// default class roles, with costs strictly decreasing along the chain.
    pub fn clinical_default() -> Self {
        let roles = ClassRoles::default_benchmark();
        let mut m = Matrix::zeros(3, 3);
        let severity = roles.severity_ranking();
        let costs = [10.0, 8.0, 4.0, 3.0, 2.0, 1.0];
        for ((a, b), c) in severity.into_iter().zip(costs) {
            m.set(a, b, c);
        }
        Self { entries: m }
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        Self::new(read_square_csv(path)?)
    }

    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    pub fn entries(&self) -> &Matrix {
        &self.entries
    }
}

/// Reads an n x n comma-separated grid with no header; row = true class,
/// column = decided class.
fn read_square_csv(path: &Path) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error_to_parse(&e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error_to_parse(&e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let mut row = Vec::with_capacity(record.len());
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("expected a number, got {field:?}"),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "empty cost matrix file".into(),
        });
    }
    let m = Matrix::from_rows(&rows)?;
    if m.rows() != m.cols() {
        return Err(Error::Parse {
            line: m.rows(),
            msg: format!("cost matrix must be square, got {}x{}", m.rows(), m.cols()),
        });
    }
    Ok(m)
}

fn csv_error_to_parse(e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

/// Applies the score-level cost transform to a batch of logits.
///
/// `labels` is required by (and only by) [`ScoreTransform::LabelRow`].
pub fn apply_score_costs(
    logits: &Matrix,
    costs: &ScoreCostMatrix,
    mode: ScoreTransform,
    labels: Option<&[usize]>,
) -> Result<Matrix> {
    let n = costs.n();
    if logits.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "logits width {} does not match cost matrix order {}",
            logits.cols(),
            n
        )));
    }
    match mode {
        ScoreTransform::MatrixProduct => logits.matmul(costs.entries()),
        ScoreTransform::LabelRow => {
            let labels = labels.ok_or_else(|| {
                Error::InvalidInput("label-row score transform requires labels".into())
            })?;
            if labels.len() != logits.rows() {
                return Err(Error::DimensionMismatch(format!(
                    "{} labels for {} logit rows",
                    labels.len(),
                    logits.rows()
                )));
            }
            let mut out = logits.clone();
            for (i, &y) in labels.iter().enumerate() {
                if y >= n {
                    return Err(Error::InvalidInput(format!(
                        "label {y} out of range for {n} classes"
                    )));
                }
                let scale = costs.entries().row(y).to_vec();
                for (v, s) in out.row_mut(i).iter_mut().zip(scale) {
                    *v *= s;
                }
            }
            Ok(out)
        }
    }
}

/// Expected risk of each candidate decision `p`: `R(p) = sum_q xi'[p][q] * probs[q]`.
pub fn expected_risk(probs: &[f64], costs: &LossCostMatrix) -> Result<Vec<f64>> {
    let n = costs.n();
    if probs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} probabilities for {} classes",
            probs.len(),
            n
        )));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidInput(
            "probabilities must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "probabilities must sum to 1, got {total}"
        )));
    }
    let mut risk = vec![0.0; n];
    for (p, r) in risk.iter_mut().enumerate() {
        *r = costs
            .entries()
            .row(p)
            .iter()
            .zip(probs)
            .map(|(&c, &pr)| c * pr)
            .sum();
    }
    Ok(risk)
}

/// Minimum-expected-risk decision; ties break toward the lowest class index.
pub fn min_risk_decision(probs: &[f64], costs: &LossCostMatrix) -> Result<usize> {
    let risk = expected_risk(probs, costs)?;
    let mut best = 0;
    for (p, &r) in risk.iter().enumerate().skip(1) {
        if r < risk[best] {
            best = p;
        }
    }
    Ok(best)
}

/// Assigns the three clinical roles to class indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRoles {
    /// Healthy class.
    pub normal: usize,
    /// The class whose misses are most expensive (the screening target).
    pub critical: usize,
    /// The class whose appearance mimics the critical one.
    pub confusable: usize,
}

impl ClassRoles {
    /// Roles matching the reference benchmark's count order: the minority
    /// critical class first, then the confusable class, then healthy.
    pub fn default_benchmark() -> Self {
        Self {
            critical: 0,
            confusable: 1,
            normal: 2,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if n != 3 {
            return Err(Error::Unsupported(format!(
                "clinical class roles require exactly 3 classes, got {n}"
            )));
        }
        let mut seen = [false; 3];
        for idx in [self.normal, self.critical, self.confusable] {
            if idx >= 3 {
                return Err(Error::Unsupported(format!("role index {idx} out of range")));
            }
            if seen[idx] {
                return Err(Error::Unsupported("class roles must be distinct".into()));
            }
            seen[idx] = true;
        }
        Ok(())
    }

    /// Misclassification directions from most to least severe:
    /// C->N, C->P, P->C, P->N, N->C, N->P.
    pub fn severity_ranking(&self) -> [(usize, usize); 6] {
        let (c, p, n) = (self.critical, self.confusable, self.normal);
        [(c, n), (c, p), (p, c), (p, n), (n, c), (n, p)]
    }
}

/// Checks the six strict severity inequalities of the expert ordering.
///
/// For loss matrices the entry itself is the cost, so severities must be
/// strictly decreasing along the ranking. For score matrices the entry is a
/// damping factor, so severities must be strictly *increasing* (a smaller
/// multiplier suppresses harder).
///
/// Returns the list of violated constraints; empty means the matrix conforms.
pub fn clinical_ordering_violations(
    entries: &Matrix,
    kind: CostKind,
    roles: &ClassRoles,
) -> Result<Vec<String>> {
    if entries.rows() != entries.cols() {
        return Err(Error::DimensionMismatch(
            "cost matrix must be square".into(),
        ));
    }
    roles.validate(entries.rows())?;
    let ranking = roles.severity_ranking();
    let severity = |a: usize, b: usize| -> f64 {
        match kind {
            CostKind::Loss => entries.get(a, b),
            CostKind::Score => -entries.get(a, b),
        }
    };
    let mut violations = Vec::new();
    for w in ranking.windows(2) {
        let (a1, b1) = w[0];
        let (a2, b2) = w[1];
        if !(severity(a1, b1) > severity(a2, b2)) {
            violations.push(format!(
                "cost({a1}->{b1}) must exceed cost({a2}->{b2}) \
                 (entries {} and {})",
                entries.get(a1, b1),
                entries.get(a2, b2)
            ));
        }
    }
    Ok(violations)
}

/// Like [`clinical_ordering_violations`], but errors when any constraint fails.
pub fn validate_clinical_ordering(
    entries: &Matrix,
    kind: CostKind,
    roles: &ClassRoles,
) -> Result<()> {
    let violations = clinical_ordering_violations(entries, kind, roles)?;
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::ClinicalOrdering { violations })
    }
}
