//! Loss functions with analytic gradients: softmax cross-entropy, center
//! loss, the class-conditional center loss, loss-level cost-weighted
//! cross-entropy, and the joint cost-sensitive loss.
//!
//! Conventions: all losses average over the mini-batch (divide by `m`, not by
//! the weight sum). Gradients are returned with the same `1/m` scaling so they
//! can be fed to the optimizer directly. Centers are constants here; they move
//! only through the rule in [`crate::centers`].

use crate::costs::{apply_score_costs, ScoreCostMatrix, ScoreTransform};
use crate::error::{Error, Result};
use crate::nncore::Matrix;

/// One mini-batch: deep features, raw logits, and integer labels.
#[derive(Debug, Clone, Copy)]
pub struct LabeledBatch<'a> {
    pub features: &'a Matrix,
    pub logits: &'a Matrix,
    pub labels: &'a [usize],
}

impl<'a> LabeledBatch<'a> {
    pub fn new(features: &'a Matrix, logits: &'a Matrix, labels: &'a [usize]) -> Result<Self> {
        let m = labels.len();
        if features.rows() != m || logits.rows() != m {
            return Err(Error::DimensionMismatch(format!(
                "batch sizes disagree: {} features, {} logits, {} labels",
                features.rows(),
                logits.rows(),
                m
            )));
        }
        if m == 0 {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let n = logits.cols();
        if let Some(&bad) = labels.iter().find(|&&y| y >= n) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {n} classes"
            )));
        }
        Ok(Self {
            features,
            logits,
            labels,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.logits.cols()
    }
}

/// Index of the largest score; ties break toward the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable softmax of one logit row (max-subtraction).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::InvalidInput("empty logit vector".into()));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite logit".into()));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    Ok(out)
}

/// Row-wise softmax of a logit matrix.
pub fn softmax_rows(logits: &Matrix) -> Result<Matrix> {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let probs = softmax(logits.row(r))?;
        out.row_mut(r).copy_from_slice(&probs);
    }
    Ok(out)
}

/// `log(sum(exp(row)))` with max-subtraction.
fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = row.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

fn check_class_weights(weights: &[f64], n: usize, require_positive: bool) -> Result<()> {
    if weights.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} class weights for {} classes",
            weights.len(),
            n
        )));
    }
    for (j, &w) in weights.iter().enumerate() {
        if !w.is_finite() || w < 0.0 || (require_positive && w == 0.0) {
            return Err(Error::InvalidInput(format!(
                "class weight w[{j}] = {w} must be {}",
                if require_positive {
                    "positive"
                } else {
                    "nonnegative"
                }
            )));
        }
    }
    Ok(())
}

/// Softmax cross-entropy, optionally class-weighted:
/// `L = -(1/m) * sum_i w[y_i] * log p[y_i]`.
///
/// Returns the loss and its gradient with respect to the logits.
pub fn softmax_ce(batch: &LabeledBatch, class_weights: Option<&[f64]>) -> Result<(f64, Matrix)> {
    let m = batch.batch_size();
    let n = batch.n_classes();
    if let Some(w) = class_weights {
        check_class_weights(w, n, false)?;
    }
    let inv_m = 1.0 / m as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(m, n);
    for i in 0..m {
        let row = batch.logits.row(i);
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite logit in row {i}")));
        }
        let y = batch.labels[i];
        let w = class_weights.map_or(1.0, |ws| ws[y]);
        let lse = log_sum_exp(row);
        loss += w * (lse - row[y]);
        let probs = softmax(row)?;
        let grad_row = grad.row_mut(i);
        for (k, &p) in probs.iter().enumerate() {
            let indicator = if k == y { 1.0 } else { 0.0 };
            grad_row[k] = w * (p - indicator) * inv_m;
        }
    }
    Ok((loss * inv_m, grad))
}

/// Shared kernel for the plain and class-weighted center penalties.
fn center_term(
    batch: &LabeledBatch,
    centers: &Matrix,
    class_weights: Option<&[f64]>,
) -> Result<(f64, Matrix)> {
    let m = batch.batch_size();
    let d = batch.features.cols();
    if centers.cols() != d {
        return Err(Error::DimensionMismatch(format!(
            "center dim {} does not match feature dim {}",
            centers.cols(),
            d
        )));
    }
    if let Some(&bad) = batch.labels.iter().find(|&&y| y >= centers.rows()) {
        return Err(Error::InvalidInput(format!(
            "label {bad} out of range for {} centers",
            centers.rows()
        )));
    }
    let inv_m = 1.0 / m as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(m, d);
    for i in 0..m {
        let y = batch.labels[i];
        let w = class_weights.map_or(1.0, |ws| ws[y]);
        let x = batch.features.row(i);
        let c = centers.row(y);
        let grad_row = grad.row_mut(i);
        for k in 0..d {
            let diff = x[k] - c[k];
            loss += w * diff * diff;
            grad_row[k] = 2.0 * w * diff * inv_m;
        }
    }
    Ok((loss * inv_m, grad))
}

/// Center loss `L_C = (1/m) * sum_i ||x_i - c[y_i]||^2` and its feature gradient.
pub fn center_loss(batch: &LabeledBatch, centers: &Matrix) -> Result<(f64, Matrix)> {
    center_term(batch, centers, None)
}

/// Class-weighted center loss: each example's term is scaled by `w[y_i]`.
/// Weights must be strictly positive.
pub fn conditional_center_loss(
    batch: &LabeledBatch,
    centers: &Matrix,
    class_weights: &[f64],
) -> Result<(f64, Matrix)> {
    check_class_weights(class_weights, centers.rows(), true)?;
    center_term(batch, centers, Some(class_weights))
}

/// How the loss-level cost picks its column at loss time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostIndexing {
    /// Scale by `xi'[y, argmax p]` — the cost of the decision the model would
    /// make. Piecewise constant in the logits.
    Argmax,
    /// Scale by the expected cost `sum_q xi'[y, q] * p_q`. Smooth in the
    /// logits; the gradient includes the product-rule term.
    Expected,
}

/// Cross-entropy with each example's term scaled by the loss-level cost
/// matrix. Correct argmax predictions pick up the (zero) diagonal entry.
pub fn cost_weighted_ce(
    batch: &LabeledBatch,
    loss_costs: &crate::costs::LossCostMatrix,
    indexing: CostIndexing,
) -> Result<(f64, Matrix)> {
    let m = batch.batch_size();
    let n = batch.n_classes();
    if loss_costs.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "cost matrix order {} does not match {} classes",
            loss_costs.n(),
            n
        )));
    }
    let inv_m = 1.0 / m as f64;
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(m, n);
    for i in 0..m {
        let row = batch.logits.row(i);
        let y = batch.labels[i];
        let probs = softmax(row)?;
        let nll = log_sum_exp(row) - row[y];
        let cost_row = loss_costs.entries().row(y);
        match indexing {
            CostIndexing::Argmax => {
                let q = argmax(&probs);
                let scale = cost_row[q];
                loss += scale * nll;
                let grad_row = grad.row_mut(i);
                for (k, &p) in probs.iter().enumerate() {
                    let indicator = if k == y { 1.0 } else { 0.0 };
                    grad_row[k] = scale * (p - indicator) * inv_m;
                }
            }
            CostIndexing::Expected => {
                let expected: f64 = cost_row.iter().zip(&probs).map(|(&c, &p)| c * p).sum();
                loss += expected * nll;
                // d/dz_k [E(p) * nll] = p_k (c_k - E) * nll + E * (p_k - 1{k=y})
                let grad_row = grad.row_mut(i);
                for (k, &p) in probs.iter().enumerate() {
                    let indicator = if k == y { 1.0 } else { 0.0 };
                    grad_row[k] =
                        (p * (cost_row[k] - expected) * nll + expected * (p - indicator)) * inv_m;
                }
            }
        }
    }
    Ok((loss * inv_m, grad))
}

/// The joint cost-sensitive loss: logits are reshaped by the score-level cost
/// matrix, class-weighted cross-entropy is applied to the reshaped scores, and
/// the class-weighted center penalty is added with balance `lambda_c`.
///
/// Returns `(loss, grad wrt the original pre-transform logits, grad wrt features)`.
pub fn dcsl_loss(
    batch: &LabeledBatch,
    centers: &Matrix,
    class_weights: &[f64],
    score_costs: &ScoreCostMatrix,
    lambda_c: f64,
    transform: ScoreTransform,
) -> Result<(f64, Matrix, Matrix)> {
    if !(lambda_c >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "lambda_c must be nonnegative, got {lambda_c}"
        )));
    }
    check_class_weights(class_weights, batch.n_classes(), true)?;

    let transformed = apply_score_costs(batch.logits, score_costs, transform, Some(batch.labels))?;
    let reshaped = LabeledBatch::new(batch.features, &transformed, batch.labels)?;
    let (ce, grad_transformed) = softmax_ce(&reshaped, Some(class_weights))?;

    // Pull the CE gradient back through the (constant) cost transform.
    let grad_logits = match transform {
        ScoreTransform::MatrixProduct => {
            grad_transformed.matmul(&score_costs.entries().transpose())?
        }
        ScoreTransform::LabelRow => {
            let mut g = grad_transformed;
            for (i, &y) in batch.labels.iter().enumerate() {
                let scale = score_costs.entries().row(y).to_vec();
                for (v, s) in g.row_mut(i).iter_mut().zip(scale) {
                    *v *= s;
                }
            }
            g
        }
    };

    let (lc, grad_center) = center_term(batch, centers, Some(class_weights))?;
    let grad_features = grad_center.map(|g| lambda_c * g);
    Ok((ce + lambda_c * lc, grad_logits, grad_features))
}
