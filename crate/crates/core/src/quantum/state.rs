use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense amplitude vector of a `qubits`-qubit register.
///
/// Qubit 0 is the most significant bit of the basis index, so the basis
/// label `|10>` on two qubits is index 2 with qubit 0 set.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    qubits: usize,
    amps: Vec<Complex64>,
}

/// Largest register the simulator accepts.
pub const MAX_QUBITS: usize = 12;

impl StateVector {
    /// `|0...0>`.
    pub fn zero(qubits: usize) -> Result<Self> {
        Self::basis(qubits, 0)
    }

    pub fn basis(qubits: usize, index: usize) -> Result<Self> {
        check_qubits(qubits)?;
        let dim = 1usize << qubits;
        if index >= dim {
            return Err(Error::InvalidInput(format!("basis index {index} >= {dim}")));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); dim];
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { qubits, amps })
    }

    /// Wraps raw amplitudes. The caller is responsible for normalization.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let dim = amps.len();
        if dim < 2 || !dim.is_power_of_two() {
            return Err(Error::InvalidInput(format!("{dim} amplitudes is not 2^q with q >= 1")));
        }
        let qubits = dim.trailing_zeros() as usize;
        check_qubits(qubits)?;
        Ok(Self { qubits, amps })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn mask(&self, qubit: usize) -> Result<usize> {
        if qubit >= self.qubits {
            return Err(Error::QubitOutOfRange {
                index: qubit,
                qubits: self.qubits,
            });
        }
        Ok(1 << (self.qubits - 1 - qubit))
    }

    /// `RX(theta) = [[cos t/2, -i sin t/2], [-i sin t/2, cos t/2]]` on `qubit`.
    pub fn apply_rx(&mut self, qubit: usize, theta: f64) -> Result<()> {
        let mask = self.mask(qubit)?;
        let (s, c) = (theta / 2.0).sin_cos();
        let mis = Complex64::new(0.0, -s);
        for b in 0..self.amps.len() {
            if b & mask == 0 {
                let a0 = self.amps[b];
                let a1 = self.amps[b | mask];
                self.amps[b] = a0 * c + a1 * mis;
                self.amps[b | mask] = a0 * mis + a1 * c;
            }
        }
        Ok(())
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) -> Result<()> {
        if control == target {
            return Err(Error::InvalidInput(format!("cnot control and target are both {control}")));
        }
        let cm = self.mask(control)?;
        let tm = self.mask(target)?;
        for b in 0..self.amps.len() {
            if b & cm != 0 && b & tm == 0 {
                self.amps.swap(b, b | tm);
            }
        }
        Ok(())
    }

    /// `<Z_i>` for every qubit.
    pub fn z_expectations(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.qubits];
        for (b, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            for (i, o) in out.iter_mut().enumerate() {
                if b & (1 << (self.qubits - 1 - i)) == 0 {
                    *o += p;
                } else {
                    *o -= p;
                }
            }
        }
        out
    }
}

fn check_qubits(qubits: usize) -> Result<()> {
    if qubits == 0 || qubits > MAX_QUBITS {
        return Err(Error::InvalidInput(format!(
            "qubit count {qubits} outside 1..={MAX_QUBITS}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rx_identity_and_flip() {
        let mut s = StateVector::zero(1).unwrap();
        s.apply_rx(0, 0.0).unwrap();
        assert_eq!(s, StateVector::zero(1).unwrap());

        s.apply_rx(0, PI).unwrap();
        let a = s.amplitudes();
        assert!(a[0].norm() < 1e-15);
        assert!((a[1] - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        assert!((s.z_expectations()[0] + 1.0).abs() < 1e-15);

        let mut h = StateVector::zero(1).unwrap();
        h.apply_rx(0, PI / 2.0).unwrap();
        assert!(h.z_expectations()[0].abs() < 1e-12);
    }

    #[test]
    fn rx_rejects_bad_qubit() {
        let mut s = StateVector::zero(2).unwrap();
        assert_eq!(
            s.apply_rx(2, 0.1),
            Err(Error::QubitOutOfRange { index: 2, qubits: 2 })
        );
    }

    #[test]
    fn cnot_truth_table() {
        let mut s = StateVector::basis(2, 0b00).unwrap();
        s.apply_cnot(0, 1).unwrap();
        assert_eq!(s, StateVector::basis(2, 0b00).unwrap());

        let mut s = StateVector::basis(2, 0b10).unwrap();
        s.apply_cnot(0, 1).unwrap();
        assert_eq!(s, StateVector::basis(2, 0b11).unwrap());

        assert!(s.apply_cnot(1, 1).is_err());
        assert!(s.apply_cnot(0, 5).is_err());
    }

    #[test]
    fn z_expectations_of_simple_states() {
        assert_eq!(StateVector::zero(3).unwrap().z_expectations(), vec![1.0; 3]);
        assert_eq!(StateVector::basis(2, 0b11).unwrap().z_expectations(), vec![-1.0, -1.0]);
        let amp = Complex64::new(1.0 / 4.0, 0.0);
        let uniform = StateVector::from_amplitudes(vec![amp; 16]).unwrap();
        for z in uniform.z_expectations() {
            assert!(z.abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(StateVector::zero(0).is_err());
        assert!(StateVector::zero(MAX_QUBITS + 1).is_err());
        assert!(StateVector::from_amplitudes(vec![Complex64::new(1.0, 0.0); 3]).is_err());
    }
}
