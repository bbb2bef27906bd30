//! The statevector simulator against explicit dense unitaries, and
//! parameter-shift gradients against finite differences.

use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use qauction_core::autodiff::{grad_check, Tensor};
use qauction_core::quantum::{
    angle_embed, entangler_layers, input_angle, qlayer_forward, qlayer_grad, CircuitWeights, QuantumLayer,
    StateVector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Matrix = Vec<Vec<Complex64>>;

fn identity(dim: usize) -> Matrix {
    (0..dim)
        .map(|r| (0..dim).map(|c| if r == c { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }).collect())
        .collect()
}

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let d = a.len();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); d]; d];
    for r in 0..d {
        for k in 0..d {
            if a[r][k] == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c in 0..d {
                out[r][c] += a[r][k] * b[k][c];
            }
        }
    }
    out
}

fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (da, db) = (a.len(), b.len());
    let mut out = vec![vec![Complex64::new(0.0, 0.0); da * db]; da * db];
    for i in 0..da {
        for j in 0..da {
            for k in 0..db {
                for l in 0..db {
                    out[i * db + k][j * db + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

fn rx(theta: f64) -> Matrix {
    let c = Complex64::new((theta / 2.0).cos(), 0.0);
    let s = Complex64::new(0.0, -(theta / 2.0).sin());
    vec![vec![c, s], vec![s, c]]
}

/// Single-qubit gate on `qubit` of `q`, qubit 0 being the leftmost factor.
fn embed_gate(gate: &Matrix, qubit: usize, q: usize) -> Matrix {
    let id = identity(2);
    let mut out = vec![vec![Complex64::new(1.0, 0.0)]];
    for k in 0..q {
        out = kron(&out, if k == qubit { gate } else { &id });
    }
    out
}

fn cnot(control: usize, target: usize, q: usize) -> Matrix {
    let dim = 1 << q;
    let mut out = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
    for col in 0..dim {
        let cbit = (col >> (q - 1 - control)) & 1;
        let row = if cbit == 1 { col ^ (1 << (q - 1 - target)) } else { col };
        out[row][col] = Complex64::new(1.0, 0.0);
    }
    out
}

fn circuit_unitary(angles: &[f64], w: &CircuitWeights) -> Matrix {
    let q = angles.len();
    let mut u = identity(1 << q);
    for (k, &a) in angles.iter().enumerate() {
        u = matmul(&embed_gate(&rx(a), k, q), &u);
    }
    for l in 0..w.layers() {
        for k in 0..q {
            u = matmul(&embed_gate(&rx(w.angle(l, k)), k, q), &u);
        }
        if q > 1 {
            for k in 0..q {
                u = matmul(&cnot(k, (k + 1) % q, q), &u);
            }
        }
    }
    u
}

fn z_expectations(amps: &[Complex64], q: usize) -> Vec<f64> {
    (0..q)
        .map(|k| {
            amps.iter()
                .enumerate()
                .map(|(idx, a)| if (idx >> (q - 1 - k)) & 1 == 0 { a.norm_sqr() } else { -a.norm_sqr() })
                .sum()
        })
        .collect()
}

#[test]
fn simulator_matches_dense_unitaries() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for instance in 0..100 {
        let q = rng.gen_range(1..=5);
        let layers = rng.gen_range(1..=6);
        let angles: Vec<f64> = (0..q).map(|_| rng.gen_range(-PI..PI)).collect();
        let w = CircuitWeights::random(layers, q, &mut rng).unwrap();

        let mut state = angle_embed(&angles, q).unwrap();
        entangler_layers(&mut state, &w).unwrap();

        let u = circuit_unitary(&angles, &w);
        let expected: Vec<Complex64> = u.iter().map(|row| row[0]).collect();
        for (a, e) in state.amplitudes().iter().zip(&expected) {
            assert!((a - e).norm() < 1e-10, "instance {instance}: {a} vs {e}");
        }
        let z = state.z_expectations();
        for (a, e) in z.iter().zip(z_expectations(&expected, q)) {
            assert!((a - e).abs() < 1e-10, "instance {instance}");
        }
    }
}

#[test]
fn layer_forward_matches_dense_unitaries() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..20 {
        let activations: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let w = CircuitWeights::random(6, 4, &mut rng).unwrap();
        let angles: Vec<f64> = activations.iter().map(|&a| input_angle(a)).collect();
        let u = circuit_unitary(&angles, &w);
        let col: Vec<Complex64> = u.iter().map(|row| row[0]).collect();
        let out = qlayer_forward(&activations, &w).unwrap();
        for (a, e) in out.iter().zip(z_expectations(&col, 4)) {
            assert!((a - e).abs() < 1e-10);
        }
    }
}

#[test]
fn norm_drift_over_ten_thousand_gates() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let q = 6;
    let mut state = StateVector::zero(q).unwrap();
    for _ in 0..10_000 {
        if rng.gen_bool(0.5) {
            state.apply_rx(rng.gen_range(0..q), rng.gen_range(0.0..2.0 * PI)).unwrap();
        } else {
            let c = rng.gen_range(0..q);
            let t = (c + rng.gen_range(1..q)) % q;
            state.apply_cnot(c, t).unwrap();
        }
    }
    assert!((state.norm_sqr() - 1.0).abs() < 1e-12, "{}", state.norm_sqr());
}

#[test]
fn full_circuits_preserve_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..100 {
        let angles: Vec<f64> = (0..4).map(|_| rng.gen_range(-PI..PI)).collect();
        let w = CircuitWeights::random(6, 4, &mut rng).unwrap();
        let mut state = angle_embed(&angles, 4).unwrap();
        entangler_layers(&mut state, &w).unwrap();
        assert!((state.norm_sqr() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn parameter_shift_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let h = 1e-5;
    for instance in 0..100 {
        let activations: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
        let w = CircuitWeights::random(6, 4, &mut rng).unwrap();
        let jac = qlayer_grad(&activations, &w).unwrap();

        for k in 0..4 {
            let mut plus = activations.clone();
            plus[k] += h;
            let mut minus = activations.clone();
            minus[k] -= h;
            let (fp, fm) = (qlayer_forward(&plus, &w).unwrap(), qlayer_forward(&minus, &w).unwrap());
            for i in 0..4 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                let err = (jac.d_inputs[i * 4 + k] - fd).abs();
                assert!(err < 1e-7, "instance {instance} input {k} out {i}: {err}");
            }
        }
        for p in 0..24 {
            let mut angles = w.angles().to_vec();
            angles[p] += h;
            let wp = CircuitWeights::new(6, 4, angles.clone()).unwrap();
            angles[p] -= 2.0 * h;
            let wm = CircuitWeights::new(6, 4, angles).unwrap();
            let (fp, fm) = (qlayer_forward(&activations, &wp).unwrap(), qlayer_forward(&activations, &wm).unwrap());
            for i in 0..4 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                let err = (jac.d_weights[i * 24 + p] - fd).abs();
                assert!(err < 1e-7, "instance {instance} weight {p} out {i}: {err}");
            }
        }
    }
}

#[test]
fn recorded_layer_backpropagates_through_the_tape() {
    let mut rng = ChaCha8Rng::seed_from_u64(26);
    let layer = QuantumLayer::new(3, 2).unwrap();
    let acts = Tensor::new(vec![4, 3], (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let w = Tensor::new(vec![2, 3], (0..6).map(|_| rng.gen_range(0.0..2.0 * PI)).collect()).unwrap();
    let mix = Tensor::new(vec![4, 3], (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let report = grad_check(
        |t, v| {
            let out = layer.record(t, v[0], v[1])?;
            let mix = t.constant(mix.clone());
            let p = t.mul(out, mix)?;
            Ok(t.sum(p))
        },
        &[acts, w],
        1e-5,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-7, "{report:?}");
    assert_eq!(report.compared, 18);
}

proptest! {
    #[test]
    fn cnot_is_an_involution(
        re in prop::collection::vec(-1.0f64..1.0, 8),
        im in prop::collection::vec(-1.0f64..1.0, 8),
        control in 0usize..3,
        offset in 1usize..3,
    ) {
        let amps: Vec<Complex64> = re.iter().zip(&im).map(|(&r, &i)| Complex64::new(r, i)).collect();
        let norm: f64 = amps.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let amps: Vec<Complex64> = amps.iter().map(|a| a / norm).collect();
        let mut s = StateVector::from_amplitudes(amps.clone()).unwrap();
        let target = (control + offset) % 3;
        s.apply_cnot(control, target).unwrap();
        s.apply_cnot(control, target).unwrap();
        for (a, b) in s.amplitudes().iter().zip(&amps) {
            prop_assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn opposite_rotations_cancel(theta in -10.0f64..10.0, qubit in 0usize..3, basis in 0usize..8) {
        let mut s = StateVector::basis(3, basis).unwrap();
        s.apply_rx(qubit, theta).unwrap();
        s.apply_rx(qubit, -theta).unwrap();
        for (k, a) in s.amplitudes().iter().enumerate() {
            let e = if k == basis { 1.0 } else { 0.0 };
            prop_assert!((a - Complex64::new(e, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn expectations_stay_in_range(
        acts in prop::collection::vec(-5.0f64..5.0, 4),
        angles in prop::collection::vec(0.0f64..6.3, 8),
    ) {
        let w = CircuitWeights::new(2, 4, angles).unwrap();
        for z in qlayer_forward(&acts, &w).unwrap() {
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&z));
        }
    }
}
