//! Reverse-mode gradients against central finite differences.

use proptest::prelude::*;
use qauction_core::autodiff::{grad_check, Tape, Tensor, Var};
use qauction_core::{AuctionNet, NetConfig, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-6;
const H: f64 = 1e-5;

fn random(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Contracts `x` with a fixed random weighting so every output entry matters.
fn project(tape: &mut Tape, x: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = random(tape.value(x).shape(), &mut rng);
    let w = tape.constant(w);
    let p = tape.mul(x, w)?;
    Ok(tape.sum(p))
}

#[test]
fn matmul_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..20 {
        let params = vec![random(&[3, 3], &mut rng), random(&[3, 3], &mut rng)];
        let report = grad_check(
            |t, v| {
                let y = t.matmul(v[0], v[1])?;
                project(t, y, trial)
            },
            &params,
            H,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "trial {trial}: {report:?}");
        assert_eq!(report.compared, 18);
    }
}

#[test]
fn tanh_and_sigmoid_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = vec![random(&[4, 5], &mut rng)];
    for (k, act) in ["tanh", "sigmoid"].iter().enumerate() {
        let report = grad_check(
            |t, v| {
                let y = if *act == "tanh" { t.tanh(v[0]) } else { t.sigmoid(v[0]) };
                project(t, y, k as u64)
            },
            &params,
            H,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "{act}: {report:?}");
    }
}

#[test]
fn column_softmax_vjp_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..10 {
        let params = vec![random(&[2, 4, 3], &mut rng)];
        let report = grad_check(
            |t, v| {
                let y = t.softmax_columns(v[0])?;
                project(t, y, 100 + trial)
            },
            &params,
            H,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "{report:?}");
    }
}

#[test]
fn affine_relu_sigmoid_composite() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..10 {
        let params = vec![random(&[6, 4], &mut rng), random(&[4, 5], &mut rng), random(&[1, 5], &mut rng)];
        let report = grad_check(
            |t, v| {
                let a = t.affine(v[0], v[1], v[2])?;
                let a = t.relu(a);
                let y = t.sigmoid(a);
                project(t, y, 200 + trial)
            },
            &params,
            H,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "{report:?}");
        assert!(report.compared > 0);
    }
}

#[test]
fn two_layer_tanh_network() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&[8, 3], &mut rng);
    for trial in 0..10 {
        let params = vec![
            random(&[3, 6], &mut rng),
            random(&[1, 6], &mut rng),
            random(&[6, 2], &mut rng),
            random(&[1, 2], &mut rng),
        ];
        let report = grad_check(
            |t, v| {
                let x = t.constant(x.clone());
                let a = t.affine(x, v[0], v[1])?;
                let a = t.tanh(a);
                let b = t.affine(a, v[2], v[3])?;
                let b = t.tanh(b);
                let sq = t.mul(b, b)?;
                let s = t.sum(sq);
                Ok(t.scale(s, 0.5))
            },
            &params,
            H,
        )
        .unwrap();
        assert!(report.max_rel_error < TOL, "trial {trial}: {report:?}");
        assert_eq!(report.skipped, 0);
    }
}

#[test]
fn gather_slice_reshape_and_reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let params = vec![random(&[3, 4], &mut rng)];
    let report = grad_check(
        |t, v| {
            let s = t.slice_cols(v[0], 1, 2)?;
            let g = t.gather(v[0], vec![0, 5, 5, 11], &[2, 2])?;
            let both = t.mul(s, s)?;
            let r = t.sum_rows(both)?;
            let l = t.sum_last(g);
            let l = t.reshape(l, &[1, 2])?;
            let y = t.sub(r, l)?;
            let y = t.mul(y, y)?;
            Ok(t.sum(y))
        },
        &params,
        H,
    )
    .unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
}

#[test]
fn lstm_encoder_on_a_two_by_two_instance() {
    let cfg = NetConfig {
        lstm_size: 3,
        hidden_size: 4,
        ..NetConfig::dla(2, 2)
    };
    let net = AuctionNet::new(cfg, 11).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let bids = Tensor::new(vec![3, 4], (0..12).map(|_| rng.gen::<f64>()).collect()).unwrap();
    let params: Vec<Tensor> = net.params()[..3].to_vec();
    let report = grad_check(
        |t, v| {
            let mut all = v.to_vec();
            for p in &net.params()[3..] {
                all.push(t.constant(p.clone()));
            }
            let b = t.constant(bids.clone());
            let h = net.encode_on_tape(t, &all, b)?;
            project(t, h, 300)
        },
        &params,
        H,
    )
    .unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
    assert_eq!(report.compared, params.iter().map(Tensor::len).sum::<usize>());
}

#[test]
fn full_dla_forward_on_a_two_by_two_instance() {
    let cfg = NetConfig {
        lstm_size: 3,
        hidden_size: 5,
        ..NetConfig::dla(2, 2)
    };
    let net = AuctionNet::new(cfg, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let bids = Tensor::new(vec![4, 4], (0..16).map(|_| rng.gen::<f64>()).collect()).unwrap();
    let report = grad_check(
        |t, v| {
            let b = t.constant(bids.clone());
            let out = net.forward_on_tape(t, v, b)?;
            let a = project(t, out.allocation, 400)?;
            let p = project(t, out.payments, 401)?;
            t.add(a, p)
        },
        net.params(),
        H,
    )
    .unwrap();
    assert!(report.max_rel_error < TOL, "{report:?}");
}

proptest! {
    #[test]
    fn softmax_columns_are_distributions(
        data in prop::collection::vec(-30.0f64..30.0, 24),
        batch in 1usize..3,
        cols in 1usize..4,
    ) {
        let x = Tensor::new(vec![batch, 4, cols], data[..batch * 4 * cols].to_vec()).unwrap();
        let mut t = Tape::new();
        let v = t.constant(x.clone());
        let s = t.softmax_columns(v).unwrap();
        let out = t.value(s);
        for b in 0..batch {
            for c in 0..cols {
                let sum: f64 = (0..4).map(|r| out.data()[b * 4 * cols + r * cols + c]).sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                for r in 0..4 {
                    let p = out.data()[b * 4 * cols + r * cols + c];
                    prop_assert!((0.0..=1.0).contains(&p));
                }
            }
        }
    }

    #[test]
    fn backward_of_sum_is_ones(rows in 1usize..5, cols in 1usize..5, fill in -5.0f64..5.0) {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::filled(&[rows, cols], fill));
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        prop_assert!(g.get(x).unwrap().data().iter().all(|&d| d == 1.0));
    }
}
