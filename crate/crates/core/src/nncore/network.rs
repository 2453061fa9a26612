//! Dense feed-forward network with an explicit deep-feature tap.
//!
//! The network is a stack of dense layers. The activation of the penultimate
//! layer is the "deep feature" vector that the center machinery operates on;
//! the final layer always has identity activation so its raw output is the
//! logit vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::Matrix;

/// Element-wise activation applied after a layer's affine transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed in terms of the activation *output*.
    /// For relu, `output > 0` iff the pre-activation was positive.
    #[inline]
    fn derivative_from_output(self, output: f64) -> f64 {
        match self {
            Activation::Relu => {
                if output > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// One dense layer: `output = activation(input * weights + bias)`.
///
/// Weights have shape `(in_dim, out_dim)` so a batch multiplies from the left.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Layer with explicit parameters.
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::DimensionMismatch(format!(
                "bias length {} does not match weight columns {}",
                bias.len(),
                weights.cols()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Fan-in scaled uniform initialization: U(-1/sqrt(in), 1/sqrt(in)), zero bias.
    pub fn init<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let limit = 1.0 / (in_dim as f64).sqrt();
        let weights = Matrix::from_fn(in_dim, out_dim, |_, _| rng.random_range(-limit..limit));
        Self {
            weights,
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.cols()
    }
}

/// Ordered dense layers plus the index of the layer whose activation is the
/// deep feature. `None` for single-layer networks, where the feature vector
/// is the raw input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Network {
    layers: Vec<DenseLayer>,
    feature_layer_index: Option<usize>,
}

/// Activation record from [`Network::forward`], consumed by [`Network::backward`].
///
/// `activations[0]` is the input batch, `activations[l + 1]` the output of
/// layer `l`; the last entry equals the logits.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Matrix>,
}

/// Output of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Penultimate activations, one row per example.
    pub features: Matrix,
    /// Raw pre-softmax outputs of the final layer.
    pub logits: Matrix,
    pub cache: ForwardCache,
}

/// Per-layer parameter gradients, shapes mirroring the network.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl ParamGrads {
    /// Zero gradients shaped like `net`'s parameters.
    pub fn zeros_like(net: &Network) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: Matrix::zeros(l.in_dim(), l.out_dim()),
                    bias: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.all_finite() && l.bias.iter().all(|b| b.is_finite()))
    }
}

impl Network {
    /// Build from explicit layers. Validates dimension chaining and that the
    /// final layer has identity activation.
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig(
                "network needs at least one layer".into(),
            ));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "layer output dim {} does not feed layer input dim {}",
                    w[0].out_dim(),
                    w[1].in_dim()
                )));
            }
        }
        let last = layers.last().expect("nonempty");
        if last.activation != Activation::Identity {
            return Err(Error::InvalidConfig(
                "final layer must have identity activation (its output is the logit vector)".into(),
            ));
        }
        let feature_layer_index = layers.len().checked_sub(2);
        Ok(Self {
            layers,
            feature_layer_index,
        })
    }

    /// Standard stack: relu hidden layers, a relu feature layer of width
    /// `feature_dim`, and an identity output layer of width `n_classes`.
    pub fn with_dims<R: Rng>(
        input_dim: usize,
        hidden_dims: &[usize],
        feature_dim: usize,
        n_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || feature_dim == 0 || n_classes == 0 {
            return Err(Error::InvalidConfig("layer dims must be positive".into()));
        }
        if hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig("hidden dims must be positive".into()));
        }
        let mut layers = Vec::with_capacity(hidden_dims.len() + 2);
        let mut prev = input_dim;
        for &h in hidden_dims {
            layers.push(DenseLayer::init(prev, h, Activation::Relu, rng));
            prev = h;
        }
        layers.push(DenseLayer::init(prev, feature_dim, Activation::Relu, rng));
        layers.push(DenseLayer::init(
            feature_dim,
            n_classes,
            Activation::Identity,
            rng,
        ));
        Self::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn feature_layer_index(&self) -> Option<usize> {
        self.feature_layer_index
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    /// Dimension of the deep-feature space (the center dimension).
    pub fn feature_dim(&self) -> usize {
        match self.feature_layer_index {
            Some(idx) => self.layers[idx].out_dim(),
            None => self.input_dim(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim()
    }

    /// Forward pass over a batch (one example per row).
    pub fn forward(&self, batch: &Matrix) -> Result<ForwardPass> {
        if batch.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "batch width {} does not match network input dim {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        let m = batch.rows();
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(batch.clone());
        for layer in &self.layers {
            let prev = activations.last().expect("nonempty");
            let mut z = prev.matmul(&layer.weights)?;
            for r in 0..m {
                let row = z.row_mut(r);
                for (v, &b) in row.iter_mut().zip(&layer.bias) {
                    *v = layer.activation.apply(*v + b);
                }
            }
            activations.push(z);
        }
        let logits = activations.last().expect("nonempty").clone();
        let features = activations[activations.len() - 2].clone();
        Ok(ForwardPass {
            features,
            logits,
            cache: ForwardCache { activations },
        })
    }

    /// Backward pass: propagates `grad_logits` down the stack and injects
    /// `grad_features` at the deep-feature activation, returning gradients
    /// for every weight and bias.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_logits: &Matrix,
        grad_features: &Matrix,
    ) -> Result<ParamGrads> {
        let n_layers = self.layers.len();
        if cache.activations.len() != n_layers + 1 {
            return Err(Error::DimensionMismatch(
                "cache does not match network depth".into(),
            ));
        }
        let logits = &cache.activations[n_layers];
        if grad_logits.shape() != logits.shape() {
            return Err(Error::DimensionMismatch(format!(
                "grad_logits shape {:?} does not match logits shape {:?}",
                grad_logits.shape(),
                logits.shape()
            )));
        }
        // The feature activation sits just below the output layer (or is the
        // input itself for single-layer nets).
        let feature_act_index = n_layers.checked_sub(1).filter(|&i| i >= 1);
        let expected_feat_shape = match feature_act_index {
            Some(i) => cache.activations[i].shape(),
            None => cache.activations[0].shape(),
        };
        if grad_features.shape() != expected_feat_shape {
            return Err(Error::DimensionMismatch(format!(
                "grad_features shape {:?} does not match feature shape {:?}",
                grad_features.shape(),
                expected_feat_shape
            )));
        }

        let mut grads = ParamGrads::zeros_like(self);
        // upstream = dL/d(activation output) of the layer being processed.
        let mut upstream = grad_logits.clone();
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let output = &cache.activations[l + 1];
            let input = &cache.activations[l];

            // dL/dz = upstream .* act'(z), with act' read off the cached output.
            let mut dz = upstream;
            for r in 0..dz.rows() {
                let dz_row = dz.row_mut(r);
                let out_row = output.row(r);
                for (g, &o) in dz_row.iter_mut().zip(out_row) {
                    *g *= layer.activation.derivative_from_output(o);
                }
            }

            // dW = input^T * dz ; db = column sums of dz.
            grads.layers[l].weights = input.transpose().matmul(&dz)?;
            for r in 0..dz.rows() {
                for (b, &g) in grads.layers[l].bias.iter_mut().zip(dz.row(r)) {
                    *b += g;
                }
            }

            if l == 0 {
                break;
            }
            upstream = dz.matmul(&layer.weights.transpose())?;
            if Some(l) == feature_act_index {
                upstream.add_scaled(grad_features, 1.0)?;
            }
        }
        Ok(grads)
    }
}
