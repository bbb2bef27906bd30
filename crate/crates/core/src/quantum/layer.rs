use std::f64::consts::{FRAC_PI_2, PI};

use super::circuit::{angle_embed, entangler_layers, CircuitWeights};
use super::state::StateVector;
use crate::autodiff::{CustomOp, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Hybrid layer: `pi * tanh(a)` angle embedding, entangler stack, `<Z_i>` readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantumLayer {
    pub qubits: usize,
    pub layers: usize,
}

/// Jacobians of the layer outputs, row-major with one row per output.
#[derive(Debug, Clone, PartialEq)]
pub struct QLayerJacobian {
    /// `qubits x qubits`: d out_i / d activation_k.
    pub d_inputs: Vec<f64>,
    /// `qubits x (layers * qubits)`: d out_i / d weight_(l, k).
    pub d_weights: Vec<f64>,
}

/// Activation-to-angle map.
pub fn input_angle(a: f64) -> f64 {
    PI * a.tanh()
}

fn input_angle_derivative(a: f64) -> f64 {
    let t = a.tanh();
    PI * (1.0 - t * t)
}

impl QuantumLayer {
    pub fn new(qubits: usize, layers: usize) -> Result<Self> {
        CircuitWeights::zeros(layers, qubits)?;
        Ok(Self { qubits, layers })
    }

    /// Number of trainable rotation angles.
    pub fn weight_count(&self) -> usize {
        self.qubits * self.layers
    }

    fn check(&self, activations: &[f64], w: &CircuitWeights) -> Result<()> {
        if activations.len() != self.qubits {
            return Err(Error::Shape {
                op: "qlayer",
                detail: format!("{} activations for {} qubits", activations.len(), self.qubits),
            });
        }
        if w.qubits() != self.qubits || w.layers() != self.layers {
            return Err(Error::Shape {
                op: "qlayer",
                detail: format!(
                    "weights {}x{} for a {}x{} layer",
                    w.layers(),
                    w.qubits(),
                    self.layers,
                    self.qubits
                ),
            });
        }
        if activations.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("quantum layer activation".into()));
        }
        Ok(())
    }

    fn run(&self, angles: &[f64], w: &CircuitWeights) -> Result<StateVector> {
        let mut state = angle_embed(angles, self.qubits)?;
        entangler_layers(&mut state, w)?;
        Ok(state)
    }

    pub fn forward(&self, activations: &[f64], w: &CircuitWeights) -> Result<Vec<f64>> {
        self.check(activations, w)?;
        let angles: Vec<f64> = activations.iter().map(|&a| input_angle(a)).collect();
        Ok(self.run(&angles, w)?.z_expectations())
    }

    /// Parameter-shift derivatives with respect to the activations,
    /// chained through the input scaling.
    pub fn input_jacobian(&self, activations: &[f64], w: &CircuitWeights) -> Result<Vec<f64>> {
        self.check(activations, w)?;
        let q = self.qubits;
        let mut angles: Vec<f64> = activations.iter().map(|&a| input_angle(a)).collect();
        let mut jac = vec![0.0; q * q];
        for k in 0..q {
            let theta = angles[k];
            angles[k] = theta + FRAC_PI_2;
            let plus = self.run(&angles, w)?.z_expectations();
            angles[k] = theta - FRAC_PI_2;
            let minus = self.run(&angles, w)?.z_expectations();
            angles[k] = theta;
            let scale = input_angle_derivative(activations[k]);
            for i in 0..q {
                jac[i * q + k] = 0.5 * (plus[i] - minus[i]) * scale;
            }
        }
        Ok(jac)
    }

    /// Parameter-shift derivatives with respect to the rotation weights.
    pub fn weight_jacobian(&self, activations: &[f64], w: &CircuitWeights) -> Result<Vec<f64>> {
        self.check(activations, w)?;
        let q = self.qubits;
        let nw = self.weight_count();
        let angles: Vec<f64> = activations.iter().map(|&a| input_angle(a)).collect();
        let embedded = angle_embed(&angles, q)?;
        let mut shifted = w.clone();
        let mut jac = vec![0.0; q * nw];
        for p in 0..nw {
            let theta = w.angles()[p];
            shifted.angles_mut()[p] = theta + FRAC_PI_2;
            let mut s = embedded.clone();
            entangler_layers(&mut s, &shifted)?;
            let plus = s.z_expectations();
            shifted.angles_mut()[p] = theta - FRAC_PI_2;
            let mut s = embedded.clone();
            entangler_layers(&mut s, &shifted)?;
            let minus = s.z_expectations();
            shifted.angles_mut()[p] = theta;
            for i in 0..q {
                jac[i * nw + p] = 0.5 * (plus[i] - minus[i]);
            }
        }
        Ok(jac)
    }

    pub fn grad(&self, activations: &[f64], w: &CircuitWeights) -> Result<QLayerJacobian> {
        Ok(QLayerJacobian {
            d_inputs: self.input_jacobian(activations, w)?,
            d_weights: self.weight_jacobian(activations, w)?,
        })
    }

    /// Records the layer on a tape. `activations` is `[rows, qubits]`,
    /// `weights` is `[layers, qubits]`; the result is `[rows, qubits]`.
    pub fn record(&self, tape: &mut Tape, activations: Var, weights: Var) -> Result<Var> {
        let w = self.weights_from(tape.value(weights))?;
        let act = tape.value(activations);
        let (rows, cols) = (act.rows(), act.cols());
        if cols != self.qubits || act.shape().len() != 2 {
            return Err(Error::Shape {
                op: "qlayer",
                detail: format!("activations {:?} for {} qubits", act.shape(), self.qubits),
            });
        }
        let mut out = Vec::with_capacity(rows * cols);
        for row in act.data().chunks(cols) {
            out.extend(self.forward(row, &w)?);
        }
        let output = Tensor::new(vec![rows, cols], out)?;
        Ok(tape.custom(&[activations, weights], output, Box::new(*self)))
    }

    fn weights_from(&self, t: &Tensor) -> Result<CircuitWeights> {
        if t.shape() != [self.layers, self.qubits] {
            return Err(Error::Shape {
                op: "qlayer",
                detail: format!("weights {:?} for a {}x{} layer", t.shape(), self.layers, self.qubits),
            });
        }
        CircuitWeights::new(self.layers, self.qubits, t.data().to_vec())
    }
}

impl CustomOp for QuantumLayer {
    fn name(&self) -> &str {
        "quantum_layer"
    }

    fn backward(
        &self,
        inputs: &[&Tensor],
        _output: &Tensor,
        grad_output: &Tensor,
        needs_grad: &[bool],
    ) -> Result<Vec<Option<Tensor>>> {
        let (act, wt) = (inputs[0], inputs[1]);
        let w = self.weights_from(wt)?;
        let q = self.qubits;
        let nw = self.weight_count();
        let mut d_act = needs_grad[0].then(|| vec![0.0; act.len()]);
        let mut d_w = needs_grad[1].then(|| vec![0.0; nw]);
        for (r, (row, g)) in act.data().chunks(q).zip(grad_output.data().chunks(q)).enumerate() {
            if let Some(d) = d_act.as_mut() {
                let jac = self.input_jacobian(row, &w)?;
                for k in 0..q {
                    d[r * q + k] = (0..q).map(|i| g[i] * jac[i * q + k]).sum();
                }
            }
            if let Some(d) = d_w.as_mut() {
                let jac = self.weight_jacobian(row, &w)?;
                for (p, dp) in d.iter_mut().enumerate() {
                    *dp += (0..q).map(|i| g[i] * jac[i * nw + p]).sum::<f64>();
                }
            }
        }
        Ok(vec![
            d_act.map(|d| Tensor::new(act.shape().to_vec(), d)).transpose()?,
            d_w.map(|d| Tensor::new(wt.shape().to_vec(), d)).transpose()?,
        ])
    }
}
