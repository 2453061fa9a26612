//! Minimal dense neural-network engine: matrices, layers, forward/backward
//! passes, and the Adam optimizer.

mod adam;
mod matrix;
mod network;

pub use adam::AdamState;
pub use matrix::Matrix;
pub use network::{
    Activation, DenseLayer, ForwardCache, ForwardPass, LayerGrads, Network, ParamGrads,
};
