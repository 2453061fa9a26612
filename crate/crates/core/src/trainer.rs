//! The end-to-end training loop: batch iteration, joint loss assembly per
//! mode, rule-based center updates, Adam steps, and prediction.
//!
//! Four loss modes form a lattice: plain softmax, softmax + center loss,
//! softmax + class-conditional center loss, and the full cost-sensitive
//! joint loss. Neutral hyperparameters collapse each mode onto the previous
//! one bitwise, which the tests rely on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::centers::{init_centers, CenterBank, CenterWeighting};
use crate::costs::{apply_score_costs, ScoreCostMatrix, ScoreTransform};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::losses::{
    argmax, center_loss, conditional_center_loss, dcsl_loss, softmax_ce, softmax_rows, LabeledBatch,
};
use crate::nncore::{AdamState, Matrix, Network};

/// Which joint loss drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    /// Cross-entropy only.
    Softmax,
    /// Cross-entropy plus the plain center penalty.
    SoftmaxCl,
    /// Cross-entropy plus the class-conditional center penalty.
    SoftmaxCcl,
    /// Score-level cost transform, class-weighted cross-entropy, and the
    /// class-conditional center penalty.
    Dcsl,
}

impl LossMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::Softmax => "softmax",
            LossMode::SoftmaxCl => "softmax_cl",
            LossMode::SoftmaxCcl => "softmax_ccl",
            LossMode::Dcsl => "dcsl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(LossMode::Softmax),
            "softmax_cl" => Ok(LossMode::SoftmaxCl),
            "softmax_ccl" => Ok(LossMode::SoftmaxCcl),
            "dcsl" => Ok(LossMode::Dcsl),
            other => Err(Error::InvalidConfig(format!(
                "unknown loss mode {other:?} (expected softmax, softmax_cl, softmax_ccl, dcsl)"
            ))),
        }
    }

    fn uses_centers(self) -> bool {
        !matches!(self, LossMode::Softmax)
    }
}

/// How per-class weights are derived from training label counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassWeightMode {
    /// w_j = n_j / N (the printed formula; up-weights majority classes).
    Frequency,
    /// w_j proportional to N / n_j, normalized to sum 1 (up-weights minority
    /// classes, matching the "class balance" reading).
    InverseFrequency,
    /// All ones.
    Unit,
}

impl ClassWeightMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassWeightMode::Frequency => "frequency",
            ClassWeightMode::InverseFrequency => "inverse_frequency",
            ClassWeightMode::Unit => "unit",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "frequency" => Ok(ClassWeightMode::Frequency),
            "inverse" | "inverse_frequency" => Ok(ClassWeightMode::InverseFrequency),
            "unit" => Ok(ClassWeightMode::Unit),
            other => Err(Error::InvalidConfig(format!(
                "unknown class weight mode {other:?} (expected frequency, inverse, unit)"
            ))),
        }
    }
}

/// Per-class weights from label counts. Every class must appear at least once.
pub fn class_weights(
    labels: &[usize],
    n_classes: usize,
    mode: ClassWeightMode,
) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; n_classes];
    for &y in labels {
        if y >= n_classes {
            return Err(Error::InvalidInput(format!(
                "label {y} out of range for {n_classes} classes"
            )));
        }
        counts[y] += 1;
    }
    if let Some(j) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidInput(format!(
            "class {j} has no examples; cannot derive class weights"
        )));
    }
    let total = labels.len() as f64;
    Ok(match mode {
        ClassWeightMode::Frequency => counts.iter().map(|&c| c as f64 / total).collect(),
        ClassWeightMode::InverseFrequency => {
            let raw: Vec<f64> = counts.iter().map(|&c| total / c as f64).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|w| w / sum).collect()
        }
        ClassWeightMode::Unit => vec![1.0; n_classes],
    })
}

/// Every knob of a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss_mode: LossMode,
    /// Balance between cross-entropy and the center penalty.
    pub lambda_c: f64,
    /// Center update rate.
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub center_weighting: CenterWeighting,
    pub score_transform: ScoreTransform,
    /// Apply the score cost transform at prediction time too.
    pub costs_at_test: bool,
    pub class_weight_mode: ClassWeightMode,
    /// Widths of the relu layers before the feature layer.
    pub hidden_dims: Vec<usize>,
    /// Width of the deep-feature layer (the center dimension).
    pub feature_dim: usize,
    /// Score-level costs for the cost-sensitive mode. `None` falls back to
    /// the clinical default for three-class data.
    pub score_costs: Option<ScoreCostMatrix>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss_mode: LossMode::Dcsl,
            lambda_c: 0.05,
            alpha: 1.0,
            learning_rate: 1e-3,
            epochs: 40,
            batch_size: 32,
            seed: 0,
            center_weighting: CenterWeighting::Both,
            score_transform: ScoreTransform::MatrixProduct,
            costs_at_test: true,
            class_weight_mode: ClassWeightMode::InverseFrequency,
            hidden_dims: vec![64],
            feature_dim: 2,
            score_costs: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.lambda_c >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda_c must be nonnegative, got {}",
                self.lambda_c
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidConfig("feature dim must be positive".into()));
        }
        Ok(())
    }
}

/// Loss and training accuracy after one epoch.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

/// Everything a finished run carries: the model, the centers, and history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainState {
    pub network: Network,
    pub centers: CenterBank,
    pub class_weights: Vec<f64>,
    pub loss_mode: LossMode,
    pub score_costs: Option<ScoreCostMatrix>,
    pub score_transform: ScoreTransform,
    pub costs_at_test: bool,
    pub iterations: usize,
    pub history: Vec<EpochStats>,
}

impl TrainState {
    /// Forward pass plus decision. The score cost transform is applied only
    /// for the cost-sensitive mode, only when `costs_at_test` holds, and only
    /// for the label-free transform.
    pub fn predict(&self, batch: &Matrix, costs_at_test: bool) -> Result<(Vec<usize>, Matrix)> {
        let pass = self.network.forward(batch)?;
        let logits = self.decision_scores(&pass.logits, costs_at_test)?;
        let probs = softmax_rows(&logits)?;
        let predictions = (0..probs.rows()).map(|r| argmax(probs.row(r))).collect();
        Ok((predictions, probs))
    }

    /// Deep features for a batch (for embedding export).
    pub fn features(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.network.forward(batch)?.features)
    }

    fn decision_scores(&self, logits: &Matrix, costs_at_test: bool) -> Result<Matrix> {
        if costs_at_test
            && self.loss_mode == LossMode::Dcsl
            && self.score_transform == ScoreTransform::MatrixProduct
        {
            if let Some(costs) = &self.score_costs {
                return apply_score_costs(logits, costs, self.score_transform, None);
            }
        }
        Ok(logits.clone())
    }
}

fn shuffle<R: Rng>(indices: &mut [usize], rng: &mut R) {
    for i in (1..indices.len()).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
}

fn gather_batch(dataset: &Dataset, indices: &[usize]) -> (Matrix, Vec<usize>) {
    let d = dataset.input_dim();
    let mut features = Matrix::zeros(indices.len(), d);
    let mut labels = Vec::with_capacity(indices.len());
    for (r, &i) in indices.iter().enumerate() {
        features
            .row_mut(r)
            .copy_from_slice(dataset.features().row(i));
        labels.push(dataset.labels()[i]);
    }
    (features, labels)
}

fn resolve_score_costs(config: &TrainConfig, n_classes: usize) -> Result<Option<ScoreCostMatrix>> {
    if config.loss_mode != LossMode::Dcsl {
        return Ok(None);
    }
    let costs = match &config.score_costs {
        Some(costs) => costs.clone(),
        None if n_classes == 3 => ScoreCostMatrix::clinical_default(),
        None => {
            return Err(Error::InvalidConfig(format!(
                "the cost-sensitive mode needs a score cost matrix for {n_classes} classes \
                 (the clinical default only covers 3)"
            )))
        }
    };
    if costs.n() != n_classes {
        return Err(Error::DimensionMismatch(format!(
            "score cost matrix order {} does not match {n_classes} classes",
            costs.n()
        )));
    }
    Ok(Some(costs))
}

/// Trains a network on `dataset` according to `config`. Deterministic for a
/// fixed seed: the same configuration always yields bitwise-identical
/// parameters and history.
pub fn fit(dataset: &Dataset, config: &TrainConfig) -> Result<TrainState> {
    config.validate()?;
    let n = dataset.n_classes();
    if n < 2 {
        return Err(Error::InvalidInput(
            "training needs at least 2 classes".into(),
        ));
    }
    let weights = class_weights(dataset.labels(), n, config.class_weight_mode)?;
    let score_costs = resolve_score_costs(config, n)?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut network = Network::with_dims(
        dataset.input_dim(),
        &config.hidden_dims,
        config.feature_dim,
        n,
        &mut rng,
    )?;
    let mut centers = init_centers(n, config.feature_dim)
        .with_alpha(config.alpha)?
        .with_weighting(config.center_weighting);
    let mut adam = AdamState::new(&network);
    let unit_weights = vec![1.0; n];

    let total = dataset.n_examples();
    let mut order: Vec<usize> = (0..total).collect();
    let mut iterations = 0usize;
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        shuffle(&mut order, &mut rng);
        let mut loss_sum = 0.0;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let (features_in, labels) = gather_batch(dataset, chunk);
            let pass = network.forward(&features_in)?;
            if !pass.logits.all_finite() || !pass.features.all_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "non-finite network output at epoch {epoch}, batch {batch_idx}"
                )));
            }
            let batch = LabeledBatch::new(&pass.features, &pass.logits, &labels)?;

            let m = labels.len();
            let (loss, grad_logits, grad_features) = match config.loss_mode {
                LossMode::Softmax => {
                    let (ce, grad) = softmax_ce(&batch, None)?;
                    (ce, grad, Matrix::zeros(m, config.feature_dim))
                }
                LossMode::SoftmaxCl => {
                    let (ce, grad_logits) = softmax_ce(&batch, None)?;
                    let (lc, grad_center) = center_loss(&batch, centers.centers())?;
                    let grad_features = grad_center.map(|g| config.lambda_c * g);
                    (ce + config.lambda_c * lc, grad_logits, grad_features)
                }
                LossMode::SoftmaxCcl => {
                    let (ce, grad_logits) = softmax_ce(&batch, Some(&weights))?;
                    let (lc, grad_center) =
                        conditional_center_loss(&batch, centers.centers(), &weights)?;
                    let grad_features = grad_center.map(|g| config.lambda_c * g);
                    (ce + config.lambda_c * lc, grad_logits, grad_features)
                }
                LossMode::Dcsl => {
                    let costs = score_costs.as_ref().expect("resolved for dcsl");
                    dcsl_loss(
                        &batch,
                        centers.centers(),
                        &weights,
                        costs,
                        config.lambda_c,
                        config.score_transform,
                    )?
                }
            };
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged(format!(
                    "non-finite loss at epoch {epoch}, batch {batch_idx}"
                )));
            }
            loss_sum += loss * m as f64;

            // Centers move by rule after the loss, before the parameters.
            if config.loss_mode.uses_centers() {
                let center_weights = match config.loss_mode {
                    LossMode::SoftmaxCl => &unit_weights,
                    _ => &weights,
                };
                centers.update_from_batch(&pass.features, &labels, center_weights)?;
            }

            let grads = network.backward(&pass.cache, &grad_logits, &grad_features)?;
            adam.step(&mut network, &grads, config.learning_rate)
                .map_err(|e| match e {
                    Error::TrainingDiverged(msg) => Error::TrainingDiverged(format!(
                        "{msg} at epoch {epoch}, batch {batch_idx}"
                    )),
                    other => other,
                })?;
            iterations += 1;
        }

        let snapshot = TrainState {
            network: network.clone(),
            centers: centers.clone(),
            class_weights: weights.clone(),
            loss_mode: config.loss_mode,
            score_costs: score_costs.clone(),
            score_transform: config.score_transform,
            costs_at_test: config.costs_at_test,
            iterations,
            history: Vec::new(),
        };
        let (predictions, _) = snapshot.predict(dataset.features(), config.costs_at_test)?;
        let correct = predictions
            .iter()
            .zip(dataset.labels())
            .filter(|(p, y)| p == y)
            .count();
        history.push(EpochStats {
            epoch,
            mean_loss: loss_sum / total as f64,
            train_accuracy: correct as f64 / total as f64,
        });
    }

    Ok(TrainState {
        network,
        centers,
        class_weights: weights,
        loss_mode: config.loss_mode,
        score_costs,
        score_transform: config.score_transform,
        costs_at_test: config.costs_at_test,
        iterations,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, SynthConfig};

    fn tiny_dataset(seed: u64) -> Dataset {
        generate(&SynthConfig {
            n_classes: 3,
            in_dim: 4,
            class_counts: vec![12, 20, 20],
            class_separation: 3.0,
            intra_spread: 0.6,
            seed,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    fn quick_config(mode: LossMode) -> TrainConfig {
        TrainConfig {
            loss_mode: mode,
            epochs: 5,
            hidden_dims: vec![8],
            feature_dim: 2,
            seed: 42,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn default_hyperparameters_are_pinned() {
        let config = TrainConfig::default();
        assert_eq!(config.lambda_c, 0.05);
        assert_eq!(config.alpha, 1.0);
        assert_eq!(config.learning_rate, 1e-3);
        assert_eq!(config.epochs, 40);
        assert_eq!(config.batch_size, 32);
        assert_eq!(config.feature_dim, 2);
        assert!(config.costs_at_test);
    }

    #[test]
    fn iteration_counter_matches_processed_batches() {
        let ds = tiny_dataset(0); // 52 examples
        let config = TrainConfig {
            batch_size: 20,
            ..quick_config(LossMode::Softmax)
        };
        let state = fit(&ds, &config).unwrap();
        // ceil(52 / 20) = 3 batches per epoch, 5 epochs.
        assert_eq!(state.iterations, 15);
        assert_eq!(state.history.len(), 5);
    }

    #[test]
    fn frequency_weights_match_paper_counts() {
        // 239 / 1000 / 1000 examples.
        let mut labels = vec![0usize; 239];
        labels.extend(vec![1usize; 1000]);
        labels.extend(vec![2usize; 1000]);
        let w = class_weights(&labels, 3, ClassWeightMode::Frequency).unwrap();
        assert!((w[0] - 239.0 / 2239.0).abs() < 1e-12);
        assert!((w[0] - 0.10674).abs() < 1e-5);
        assert!((w[1] - 0.44663).abs() < 1e-5);
        assert!((w[2] - 0.44663).abs() < 1e-5);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_counts_agree_across_frequency_modes() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let freq = class_weights(&labels, 3, ClassWeightMode::Frequency).unwrap();
        let inv = class_weights(&labels, 3, ClassWeightMode::InverseFrequency).unwrap();
        for j in 0..3 {
            assert!((freq[j] - 1.0 / 3.0).abs() < 1e-12);
            assert!((inv[j] - 1.0 / 3.0).abs() < 1e-12);
        }
        let unit = class_weights(&labels, 3, ClassWeightMode::Unit).unwrap();
        assert_eq!(unit, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn class_weights_reject_empty_class() {
        let labels = vec![0usize, 0, 2, 2];
        assert!(class_weights(&labels, 3, ClassWeightMode::Frequency).is_err());
    }

    #[test]
    fn zero_epochs_is_a_config_error() {
        let ds = tiny_dataset(0);
        let config = TrainConfig {
            epochs: 0,
            ..quick_config(LossMode::Softmax)
        };
        assert!(matches!(fit(&ds, &config), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn softmax_separable_data_reaches_full_training_accuracy() {
        let ds = generate(&SynthConfig {
            n_classes: 2,
            in_dim: 4,
            class_counts: vec![30, 30],
            class_separation: 8.0,
            intra_spread: 0.3,
            seed: 7,
            ..SynthConfig::default()
        })
        .unwrap();
        let config = TrainConfig {
            epochs: 40,
            ..quick_config(LossMode::Softmax)
        };
        let state = fit(&ds, &config).unwrap();
        let last = state.history.last().unwrap();
        assert_eq!(last.train_accuracy, 1.0, "history: {:?}", state.history);
    }

    #[test]
    fn fit_is_deterministic() {
        let ds = tiny_dataset(1);
        let config = quick_config(LossMode::Dcsl);
        let a = fit(&ds, &config).unwrap();
        let b = fit(&ds, &config).unwrap();
        for (la, lb) in a.network.layers().iter().zip(b.network.layers()) {
            for (x, y) in la.weights.data().iter().zip(lb.weights.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in la.bias.iter().zip(&lb.bias) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        for (ha, hb) in a.history.iter().zip(&b.history) {
            assert_eq!(ha.mean_loss.to_bits(), hb.mean_loss.to_bits());
            assert_eq!(ha.train_accuracy.to_bits(), hb.train_accuracy.to_bits());
        }
    }

    fn assert_same_run(a: &TrainState, b: &TrainState) {
        for (ha, hb) in a.history.iter().zip(&b.history) {
            assert_eq!(
                ha.mean_loss.to_bits(),
                hb.mean_loss.to_bits(),
                "loss diverges at epoch {}",
                ha.epoch
            );
        }
        for (la, lb) in a.network.layers().iter().zip(b.network.layers()) {
            for (x, y) in la.weights.data().iter().zip(lb.weights.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn ccl_with_unit_weights_is_cl_bitwise() {
        let ds = tiny_dataset(3);
        let cl = fit(&ds, &quick_config(LossMode::SoftmaxCl)).unwrap();
        let ccl = fit(
            &ds,
            &TrainConfig {
                class_weight_mode: ClassWeightMode::Unit,
                ..quick_config(LossMode::SoftmaxCcl)
            },
        )
        .unwrap();
        assert_same_run(&cl, &ccl);
    }

    #[test]
    fn cl_with_zero_lambda_is_softmax_bitwise() {
        let ds = tiny_dataset(4);
        let softmax = fit(&ds, &quick_config(LossMode::Softmax)).unwrap();
        let cl = fit(
            &ds,
            &TrainConfig {
                lambda_c: 0.0,
                ..quick_config(LossMode::SoftmaxCl)
            },
        )
        .unwrap();
        assert_same_run(&softmax, &cl);
    }

    #[test]
    fn dcsl_with_identity_costs_and_unit_weights_is_ccl_bitwise() {
        let ds = tiny_dataset(5);
        let ccl = fit(
            &ds,
            &TrainConfig {
                class_weight_mode: ClassWeightMode::Unit,
                ..quick_config(LossMode::SoftmaxCcl)
            },
        )
        .unwrap();
        let dcsl = fit(
            &ds,
            &TrainConfig {
                class_weight_mode: ClassWeightMode::Unit,
                score_costs: Some(ScoreCostMatrix::identity(3)),
                costs_at_test: false,
                ..quick_config(LossMode::Dcsl)
            },
        )
        .unwrap();
        assert_same_run(&ccl, &dcsl);
    }

    #[test]
    fn losses_stay_finite_across_modes() {
        let ds = tiny_dataset(6);
        for mode in [
            LossMode::Softmax,
            LossMode::SoftmaxCl,
            LossMode::SoftmaxCcl,
            LossMode::Dcsl,
        ] {
            let state = fit(&ds, &quick_config(mode)).unwrap();
            assert!(state.history.iter().all(|h| h.mean_loss.is_finite()));
        }
    }

    #[test]
    fn predictions_are_pure() {
        let ds = tiny_dataset(8);
        let state = fit(&ds, &quick_config(LossMode::Dcsl)).unwrap();
        let (a, _) = state.predict(ds.features(), true).unwrap();
        let (b, _) = state.predict(ds.features(), true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tied_scores_break_toward_lowest_index() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[1.0, 2.0, 2.0]), 1);
    }

    #[test]
    fn dcsl_with_identity_costs_predicts_like_softmax_scores() {
        let ds = tiny_dataset(9);
        let config = TrainConfig {
            score_costs: Some(ScoreCostMatrix::identity(3)),
            ..quick_config(LossMode::Dcsl)
        };
        let state = fit(&ds, &config).unwrap();
        let (with_costs, _) = state.predict(ds.features(), true).unwrap();
        let (without, _) = state.predict(ds.features(), false).unwrap();
        assert_eq!(with_costs, without);
    }
}
