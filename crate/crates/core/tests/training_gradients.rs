//! End-to-end gradient of the regret-penalized loss on miniature networks.

use qauction_core::auction::{loss_gradients, loss_on_tape, training_loss, LagrangianState};
use qauction_core::autodiff::grad_check;
use qauction_core::{AuctionNet, BidMatrix, NetConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn miniature(variant_quantum: bool, seed: u64) -> AuctionNet {
    let cfg = if variant_quantum {
        NetConfig {
            lstm_size: 3,
            hidden_size: 4,
            qubits: 2,
            layers: 1,
            ..NetConfig::qdla(2, 2)
        }
    } else {
        NetConfig {
            lstm_size: 3,
            hidden_size: 4,
            ..NetConfig::dla(2, 2)
        }
    };
    AuctionNet::new(cfg, seed).unwrap()
}

fn batch(rng: &mut impl Rng, size: usize) -> (Vec<BidMatrix>, Vec<Vec<Vec<f64>>>) {
    let values: Vec<BidMatrix> = (0..size).map(|_| BidMatrix::random(2, 2, rng)).collect();
    let misreports = (0..size)
        .map(|_| (0..2).map(|_| (0..2).map(|_| rng.gen::<f64>()).collect()).collect())
        .collect();
    (values, misreports)
}

fn check(quantum: bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(if quantum { 31 } else { 32 });
    for trial in 0..3 {
        let net = miniature(quantum, 100 + trial);
        let (values, misreports) = batch(&mut rng, 6);
        let lag = LagrangianState {
            lambda: vec![2.0, 3.5],
            rho: 1.5,
        };
        let report = grad_check(
            |t, v| Ok(loss_on_tape(&net, t, v, &values, &misreports, &lag)?.loss),
            net.params(),
            1e-6,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-5, "quantum={quantum} trial {trial}: {report:?}");
        assert!(report.compared > report.skipped);
    }
}

#[test]
fn quantum_miniature_loss_gradient() {
    check(true);
}

#[test]
fn classical_miniature_loss_gradient() {
    check(false);
}

#[test]
fn gradient_entry_point_agrees_with_the_loss_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let net = miniature(true, 7);
    let (values, misreports) = batch(&mut rng, 4);
    let lag = LagrangianState::new(2, 5.0, 1.0).unwrap();
    let plain = training_loss(&net, &values, &misreports, &lag).unwrap();
    let (with_grad, grads) = loss_gradients(&net, &values, &misreports, &lag).unwrap();
    assert_eq!(plain, with_grad);
    assert_eq!(grads.len(), net.params().len());
    for (g, p) in grads.iter().zip(net.params()) {
        assert_eq!(g.shape(), p.shape());
        assert!(g.is_finite());
    }
}
