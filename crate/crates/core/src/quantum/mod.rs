//! Statevector simulation of the hybrid quantum hidden layer.

mod circuit;
mod layer;
mod state;

pub use circuit::{angle_embed, entangler_layers, CircuitWeights};
pub use layer::{input_angle, QLayerJacobian, QuantumLayer};
pub use state::{StateVector, MAX_QUBITS};

use crate::error::Result;

/// Layer outputs for activations sized to the weights' qubit count.
pub fn qlayer_forward(activations: &[f64], weights: &CircuitWeights) -> Result<Vec<f64>> {
    QuantumLayer::new(weights.qubits(), weights.layers())?.forward(activations, weights)
}

pub fn qlayer_grad(activations: &[f64], weights: &CircuitWeights) -> Result<QLayerJacobian> {
    QuantumLayer::new(weights.qubits(), weights.layers())?.grad(activations, weights)
}
