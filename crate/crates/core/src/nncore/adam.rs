//! Adam optimizer over a [`Network`]'s parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncore::{Matrix, Network, ParamGrads};

/// First/second-moment accumulators plus the step counter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    m_weights: Vec<Matrix>,
    v_weights: Vec<Matrix>,
    m_bias: Vec<Vec<f64>>,
    v_bias: Vec<Vec<f64>>,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: u64,
}

impl AdamState {
    /// Fresh state with the universal defaults (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
    pub fn new(net: &Network) -> Self {
        Self::with_constants(net, 0.9, 0.999, 1e-8)
    }

    pub fn with_constants(net: &Network, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        let m_weights: Vec<Matrix> = net
            .layers()
            .iter()
            .map(|l| Matrix::zeros(l.in_dim(), l.out_dim()))
            .collect();
        let m_bias: Vec<Vec<f64>> = net
            .layers()
            .iter()
            .map(|l| vec![0.0; l.out_dim()])
            .collect();
        Self {
            v_weights: m_weights.clone(),
            m_weights,
            v_bias: m_bias.clone(),
            m_bias,
            beta1,
            beta2,
            epsilon,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update of every weight and bias; increments the step counter.
    pub fn step(
        &mut self,
        net: &mut Network,
        grads: &ParamGrads,
        learning_rate: f64,
    ) -> Result<()> {
        if grads.layers.len() != net.layers().len() {
            return Err(Error::DimensionMismatch(
                "gradient layer count does not match network".into(),
            ));
        }
        if !grads.all_finite() {
            return Err(Error::TrainingDiverged("non-finite gradient".into()));
        }
        self.step += 1;
        let bias_corr1 = 1.0 - self.beta1.powi(self.step as i32);
        let bias_corr2 = 1.0 - self.beta2.powi(self.step as i32);

        for (l, layer) in net.layers_mut().iter_mut().enumerate() {
            let lg = &grads.layers[l];
            if lg.weights.shape() != layer.weights.shape() || lg.bias.len() != layer.bias.len() {
                return Err(Error::DimensionMismatch(format!(
                    "gradient shape mismatch at layer {l}"
                )));
            }
            update_slice(
                layer.weights.data_mut(),
                lg.weights.data(),
                self.m_weights[l].data_mut(),
                self.v_weights[l].data_mut(),
                self.beta1,
                self.beta2,
                self.epsilon,
                learning_rate,
                bias_corr1,
                bias_corr2,
            );
            update_slice(
                &mut layer.bias,
                &lg.bias,
                &mut self.m_bias[l],
                &mut self.v_bias[l],
                self.beta1,
                self.beta2,
                self.epsilon,
                learning_rate,
                bias_corr1,
                bias_corr2,
            );
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    learning_rate: f64,
    bias_corr1: f64,
    bias_corr2: f64,
) {
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        let m_hat = m[i] / bias_corr1;
        let v_hat = v[i] / bias_corr2;
        params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::{Activation, DenseLayer};

    fn scalar_net(weight: f64) -> Network {
        let layer = DenseLayer::new(
            Matrix::from_rows(&[vec![weight]]).unwrap(),
            vec![0.0],
            Activation::Identity,
        )
        .unwrap();
        Network::new(vec![layer]).unwrap()
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut net = scalar_net(1.0);
        let mut state = AdamState::new(&net);
        let grads = ParamGrads::zeros_like(&net);
        state.step(&mut net, &grads, 1e-3).unwrap();
        assert_eq!(net.layers()[0].weights.get(0, 0), 1.0);
        assert_eq!(net.layers()[0].bias[0], 0.0);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_param_by_about_learning_rate() {
        // Hand evaluation of the Adam recurrence at t = 1 with g = 1:
        // m_hat = 1, v_hat = 1, so the update is lr / (1 + eps) ~ lr.
        let mut net = scalar_net(1.0);
        let mut state = AdamState::new(&net);
        let mut grads = ParamGrads::zeros_like(&net);
        grads.layers[0].weights.set(0, 0, 1.0);
        let lr = 1e-3;
        state.step(&mut net, &grads, lr).unwrap();
        let got = net.layers()[0].weights.get(0, 0);
        assert!((got - (1.0 - lr)).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn non_finite_gradient_is_a_divergence_error() {
        let mut net = scalar_net(1.0);
        let mut state = AdamState::new(&net);
        let mut grads = ParamGrads::zeros_like(&net);
        grads.layers[0].weights.set(0, 0, f64::NAN);
        let err = state.step(&mut net, &grads, 1e-3).unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged(_)));
    }

    #[test]
    fn quadratic_loss_decreases_while_approaching_the_minimum() {
        // Minimize f(w) = (w - 3)^2 by feeding Adam the analytic gradient.
        // Adam's step size is bounded by the learning rate, so 250 steps at
        // lr = 0.01 keep the iterate strictly below the minimum: every
        // gradient is negative, w climbs monotonically, and the loss falls
        // at every step. (Near the minimum momentum would overshoot.)
        let mut net = scalar_net(0.0);
        let mut state = AdamState::new(&net);
        let loss = |w: f64| (w - 3.0) * (w - 3.0);
        let mut prev = loss(net.layers()[0].weights.get(0, 0));
        for _ in 0..250 {
            let w = net.layers()[0].weights.get(0, 0);
            let mut grads = ParamGrads::zeros_like(&net);
            grads.layers[0].weights.set(0, 0, 2.0 * (w - 3.0));
            state.step(&mut net, &grads, 0.01).unwrap();
            let now = loss(net.layers()[0].weights.get(0, 0));
            assert!(now < prev, "loss must fall every step: {prev} -> {now}");
            prev = now;
        }
        assert!(prev < 2.0, "started at 9.0, should be well below: {prev}");
    }
}
