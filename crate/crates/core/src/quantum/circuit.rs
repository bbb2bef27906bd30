use std::f64::consts::TAU;

use rand::Rng;

use super::state::StateVector;
use crate::error::{Error, Result};

/// Rotation angles of the entangler stack, `layers x qubits`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitWeights {
    layers: usize,
    qubits: usize,
    angles: Vec<f64>,
}

impl CircuitWeights {
    pub fn new(layers: usize, qubits: usize, angles: Vec<f64>) -> Result<Self> {
        if layers == 0 || qubits == 0 {
            return Err(Error::InvalidInput(format!(
                "circuit needs at least one layer and qubit, got {layers}x{qubits}"
            )));
        }
        if angles.len() != layers * qubits {
            return Err(Error::Shape {
                op: "circuit_weights",
                detail: format!("{} angles for {layers}x{qubits}", angles.len()),
            });
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("circuit angle".into()));
        }
        Ok(Self { layers, qubits, angles })
    }

    pub fn zeros(layers: usize, qubits: usize) -> Result<Self> {
        Self::new(layers, qubits, vec![0.0; layers * qubits])
    }

    /// Angles drawn uniformly from `[0, 2pi)`.
    pub fn random(layers: usize, qubits: usize, rng: &mut impl Rng) -> Result<Self> {
        let angles = (0..layers * qubits).map(|_| rng.gen::<f64>() * TAU).collect();
        Self::new(layers, qubits, angles)
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn angle(&self, layer: usize, qubit: usize) -> f64 {
        self.angles[layer * self.qubits + qubit]
    }

    pub(crate) fn angles_mut(&mut self) -> &mut [f64] {
        &mut self.angles
    }
}

/// `prod_i RX(angles[i]) on qubit i` applied to `|0...0>`.
pub fn angle_embed(angles: &[f64], qubits: usize) -> Result<StateVector> {
    if angles.len() != qubits {
        return Err(Error::Shape {
            op: "angle_embed",
            detail: format!("{} angles for {qubits} qubits", angles.len()),
        });
    }
    let mut state = StateVector::zero(qubits)?;
    for (i, &a) in angles.iter().enumerate() {
        state.apply_rx(i, a)?;
    }
    Ok(state)
}

/// One RX per qubit followed by the CNOT ring `0->1, ..., q-1->0`, per layer.
/// A single qubit has no ring.
pub fn entangler_layers(state: &mut StateVector, weights: &CircuitWeights) -> Result<()> {
    let q = state.qubits();
    if weights.qubits() != q {
        return Err(Error::Shape {
            op: "entangler_layers",
            detail: format!("weights for {} qubits on a {q}-qubit state", weights.qubits()),
        });
    }
    for layer in 0..weights.layers() {
        for i in 0..q {
            state.apply_rx(i, weights.angle(layer, i))?;
        }
        if q > 1 {
            for i in 0..q {
                state.apply_cnot(i, (i + 1) % q)?;
            }
        }
    }
    Ok(())
}
