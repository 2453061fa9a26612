//! Per-class center vectors and their mini-batch update rules.
//!
//! Centers move by rule, not by backprop: each batch contributes a delta
//! `dc_j = sum_i [w_j] 1{y_i = j} (c_j - x_i) / (1 + count_j)` and the bank
//! applies `c_j <- c_j - alpha [w_j] dc_j`. The class weight can enter the
//! delta, the update step, or both; the printed equations apply it in both
//! places, so that is the default.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::Matrix;

/// Where the class weight enters the center update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CenterWeighting {
    /// No weighting anywhere (plain center loss updates).
    None,
    /// Weight inside the delta only.
    Delta,
    /// Weight on the update step only.
    Update,
    /// Weight in both places (literal composition of the printed equations).
    #[default]
    Both,
}

/// Per-class center vectors with update rate `alpha` and a weighting mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CenterBank {
    centers: Matrix,
    alpha: f64,
    weighting: CenterWeighting,
}

/// Zero-initialized bank: n centers of dimension d, alpha = 1, literal weighting.
pub fn init_centers(n_classes: usize, feature_dim: usize) -> CenterBank {
    CenterBank {
        centers: Matrix::zeros(n_classes, feature_dim),
        alpha: 1.0,
        weighting: CenterWeighting::default(),
    }
}

impl CenterBank {
    /// Bank seeded with explicit center vectors (e.g. resuming a run).
    pub fn from_centers(centers: Matrix) -> Result<Self> {
        if !centers.all_finite() {
            return Err(Error::InvalidInput("centers must be finite".into()));
        }
        Ok(Self {
            centers,
            alpha: 1.0,
            weighting: CenterWeighting::default(),
        })
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "center update rate alpha must be in (0, 1], got {alpha}"
            )));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn with_weighting(mut self, weighting: CenterWeighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn centers(&self) -> &Matrix {
        &self.centers
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn weighting(&self) -> CenterWeighting {
        self.weighting
    }

    pub fn n_classes(&self) -> usize {
        self.centers.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.centers.cols()
    }

    /// Mini-batch center deltas. Classes absent from the batch get a zero row
    /// (empty numerator over denominator 1). `class_weights`, when given,
    /// scales each class's numerator.
    pub fn delta_centers(
        &self,
        features: &Matrix,
        labels: &[usize],
        class_weights: Option<&[f64]>,
    ) -> Result<Matrix> {
        if features.cols() != self.feature_dim() {
            return Err(Error::DimensionMismatch(format!(
                "feature dim {} does not match center dim {}",
                features.cols(),
                self.feature_dim()
            )));
        }
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        let n = self.n_classes();
        if let Some(&bad) = labels.iter().find(|&&y| y >= n) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {n} centers"
            )));
        }
        if let Some(w) = class_weights {
            if w.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} class weights for {n} centers",
                    w.len()
                )));
            }
        }

        let d = self.feature_dim();
        let mut deltas = Matrix::zeros(n, d);
        let mut counts = vec![0usize; n];
        for (i, &y) in labels.iter().enumerate() {
            counts[y] += 1;
            let w = class_weights.map_or(1.0, |ws| ws[y]);
            let x = features.row(i);
            let c = self.centers.row(y);
            let delta_row = deltas.row_mut(y);
            for k in 0..d {
                delta_row[k] += w * (c[k] - x[k]);
            }
        }
        for (j, &count) in counts.iter().enumerate() {
            let denom = 1.0 + count as f64;
            for v in deltas.row_mut(j) {
                *v /= denom;
            }
        }
        Ok(deltas)
    }

    /// Applies `c_j <- c_j - alpha [w_j] delta_j`.
    pub fn update_centers(&mut self, deltas: &Matrix, class_weights: Option<&[f64]>) -> Result<()> {
        if deltas.shape() != self.centers.shape() {
            return Err(Error::DimensionMismatch(format!(
                "delta shape {:?} does not match center shape {:?}",
                deltas.shape(),
                self.centers.shape()
            )));
        }
        if let Some(w) = class_weights {
            if w.len() != self.n_classes() {
                return Err(Error::DimensionMismatch(format!(
                    "{} class weights for {} centers",
                    w.len(),
                    self.n_classes()
                )));
            }
        }
        for j in 0..self.n_classes() {
            let w = class_weights.map_or(1.0, |ws| ws[j]);
            let step = self.alpha * w;
            let delta_row = deltas.row(j).to_vec();
            for (c, dv) in self.centers.row_mut(j).iter_mut().zip(delta_row) {
                *c -= step * dv;
            }
        }
        Ok(())
    }

    /// One full batch update, routing the class weights per the configured
    /// weighting mode.
    pub fn update_from_batch(
        &mut self,
        features: &Matrix,
        labels: &[usize],
        class_weights: &[f64],
    ) -> Result<()> {
        let (delta_w, update_w): (Option<&[f64]>, Option<&[f64]>) = match self.weighting {
            CenterWeighting::None => (None, None),
            CenterWeighting::Delta => (Some(class_weights), None),
            CenterWeighting::Update => (None, Some(class_weights)),
            CenterWeighting::Both => (Some(class_weights), Some(class_weights)),
        };
        let deltas = self.delta_centers(features, labels, delta_w)?;
        self.update_centers(&deltas, update_w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_is_zero_and_deterministic() {
        let a = init_centers(3, 2);
        let b = init_centers(3, 2);
        assert_eq!(a.centers().shape(), (3, 2));
        assert!(a.centers().data().iter().all(|&v| v == 0.0));
        assert_eq!(a.centers(), b.centers());
    }

    #[test]
    fn absent_class_gets_zero_delta() {
        let bank = init_centers(3, 2);
        let features = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let deltas = bank.delta_centers(&features, &[0], None).unwrap();
        assert_eq!(deltas.row(1), &[0.0, 0.0]);
        assert_eq!(deltas.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn unweighted_delta_matches_hand_computation() {
        // c1 = (0,0); two class-1 examples at (2,0) and (0,2):
        // dc1 = ((0-2, 0-0) + (0-0, 0-2)) / (1+2) = (-2/3, -2/3).
        let bank = init_centers(2, 2);
        let features = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let deltas = bank.delta_centers(&features, &[1, 1], None).unwrap();
        assert!((deltas.get(1, 0) + 2.0 / 3.0).abs() < 1e-15);
        assert!((deltas.get(1, 1) + 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(deltas.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn weighted_delta_scales_numerator() {
        // Same batch with w1 = 0.5: dc1 = (-1/3, -1/3).
        let bank = init_centers(2, 2);
        let features = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let deltas = bank
            .delta_centers(&features, &[1, 1], Some(&[1.0, 0.5]))
            .unwrap();
        assert!((deltas.get(1, 0) + 1.0 / 3.0).abs() < 1e-15);
        assert!((deltas.get(1, 1) + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_deltas_leave_bank_unchanged() {
        let mut bank = init_centers(2, 2);
        bank.update_centers(&Matrix::zeros(2, 2), None).unwrap();
        assert!(bank.centers().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unweighted_update_applies_alpha_delta() {
        let mut bank = init_centers(2, 2);
        let mut deltas = Matrix::zeros(2, 2);
        deltas.set(1, 0, -2.0 / 3.0);
        deltas.set(1, 1, -2.0 / 3.0);
        bank.update_centers(&deltas, None).unwrap();
        assert!((bank.centers().get(1, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((bank.centers().get(1, 1) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn both_mode_composes_the_weight_twice() {
        // Literal composition: delta already carries w = 0.5, the update
        // applies it again, so c1 = 0 - 1 * 0.5 * (-1/3) = 1/6.
        let mut bank = init_centers(2, 2).with_weighting(CenterWeighting::Both);
        let features = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]).unwrap();
        bank.update_from_batch(&features, &[1, 1], &[1.0, 0.5])
            .unwrap();
        assert!((bank.centers().get(1, 0) - 1.0 / 6.0).abs() < 1e-15);
        assert!((bank.centers().get(1, 1) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn fixed_point_when_features_sit_on_center() {
        let mut bank = init_centers(2, 2);
        bank.centers.set(0, 0, 1.5);
        bank.centers.set(0, 1, -0.5);
        let before = bank.centers().clone();
        let features = Matrix::from_rows(&[vec![1.5, -0.5], vec![1.5, -0.5]]).unwrap();
        let deltas = bank.delta_centers(&features, &[0, 0], None).unwrap();
        assert!(deltas.data().iter().all(|&v| v == 0.0));
        bank.update_centers(&deltas, None).unwrap();
        assert_eq!(bank.centers(), &before);
    }

    #[test]
    fn update_contracts_toward_class_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let d = rng.random_range(1..4);
            let m = rng.random_range(1..6);
            let mut bank = init_centers(1, d);
            for k in 0..d {
                bank.centers.set(0, k, rng.random_range(-2.0..2.0));
            }
            let features = Matrix::from_fn(m, d, |_, _| rng.random_range(-2.0..2.0));
            let labels = vec![0usize; m];
            let spread = |c: &Matrix| -> f64 {
                (0..m)
                    .map(|i| {
                        features
                            .row(i)
                            .iter()
                            .zip(c.row(0))
                            .map(|(x, cv)| (x - cv) * (x - cv))
                            .sum::<f64>()
                    })
                    .sum()
            };
            let before = spread(bank.centers());
            let deltas = bank.delta_centers(&features, &labels, None).unwrap();
            let moved = deltas.data().iter().any(|&v| v != 0.0);
            bank.update_centers(&deltas, None).unwrap();
            let after = spread(bank.centers());
            if moved {
                assert!(
                    after < before,
                    "spread should strictly decrease: {before} -> {after}"
                );
            }
        }
    }

    #[test]
    fn every_weighted_mode_collapses_with_unit_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let features = Matrix::from_fn(8, 3, |_, _| rng.random_range(-2.0..2.0));
        let labels: Vec<usize> = (0..8).map(|_| rng.random_range(0..3)).collect();
        let unit = [1.0; 3];
        let mut reference = init_centers(3, 3).with_weighting(CenterWeighting::None);
        reference
            .update_from_batch(&features, &labels, &unit)
            .unwrap();
        for mode in [
            CenterWeighting::Delta,
            CenterWeighting::Update,
            CenterWeighting::Both,
        ] {
            let mut bank = init_centers(3, 3).with_weighting(mode);
            bank.update_from_batch(&features, &labels, &unit).unwrap();
            for (a, b) in bank.centers().data().iter().zip(reference.centers().data()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn alpha_outside_unit_interval_is_rejected() {
        assert!(init_centers(2, 2).with_alpha(0.0).is_err());
        assert!(init_centers(2, 2).with_alpha(1.5).is_err());
        assert!(init_centers(2, 2).with_alpha(1.0).is_ok());
    }
}
