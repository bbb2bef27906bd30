//! Structural properties of the learned mechanism and the baselines,
//! checked against brute-force and Monte-Carlo oracles.

use proptest::prelude::*;
use qauction_core::auction::{
    buyer_utility, empirical_regret, evaluate, misreport_ascent, MisreportConfig, IR_TOLERANCE,
};
use qauction_core::baseline::{
    dsic_audit, regret_grid_oracle, revenue_oracle_mc, FirstPrice, GridSpec, Myerson, SecondPrice,
};
use qauction_core::rng::{stream, Purpose};
use qauction_core::{AuctionNet, BidMatrix, Mechanism, NetConfig};

fn small_net(quantum: bool, n: usize, m: usize, seed: u64) -> AuctionNet {
    let cfg = if quantum {
        NetConfig::qdla(n, m)
    } else {
        NetConfig {
            lstm_size: 8,
            hidden_size: 8,
            ..NetConfig::dla(n, m)
        }
    };
    AuctionNet::new(cfg, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn network_outcomes_are_feasible_and_individually_rational(
        seed in 0u64..1000,
        n in 1usize..4,
        m in 1usize..4,
        quantum in any::<bool>(),
        bids in prop::collection::vec(0.0f64..=1.0, 9),
    ) {
        let net = small_net(quantum, n, m, seed);
        let v = BidMatrix::new(n, m, bids[..n * m].to_vec()).unwrap();
        let o = net.run(&v).unwrap();
        prop_assert!(o.allocation.column_sum_error() < 1e-12);
        for row in 0..=n {
            for j in 0..m {
                let z = o.allocation.get(row, j);
                prop_assert!((0.0..=1.0).contains(&z));
            }
        }
        for i in 0..n {
            let p = o.payments.0[i];
            prop_assert!(p >= 0.0);
            prop_assert!(p <= o.allocation.allocated_value(&v, i) + IR_TOLERANCE);
            prop_assert!(buyer_utility(&v, &o, i) >= -IR_TOLERANCE);
        }
    }

    #[test]
    fn second_price_winner_pays_the_runner_up(bids in prop::collection::vec(0.0f64..=1.0, 3)) {
        let spa = SecondPrice::new(3, 1);
        let v = BidMatrix::new(3, 1, bids.clone()).unwrap();
        let o = spa.run(&v).unwrap();
        let mut sorted = bids.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assert!((o.payments.total() - sorted[1]).abs() < 1e-15);
        prop_assert!(o.allocation.column_sum_error() < 1e-15);
    }

    #[test]
    fn ascent_never_reports_negative_regret(seed in 0u64..200) {
        let net = small_net(false, 2, 2, seed);
        let mut rng = stream(seed, Purpose::Dataset, 0, 0);
        let values: Vec<BidMatrix> = (0..3).map(|_| BidMatrix::random(2, 2, &mut rng)).collect();
        let cfg = MisreportConfig { steps: 5, ..MisreportConfig::default() };
        let est = empirical_regret(&net, &values, &cfg, seed).unwrap();
        prop_assert!(est.rgt.iter().all(|&r| r >= 0.0));
    }
}

#[test]
fn structural_ir_on_many_random_forward_passes() {
    for (k, quantum) in [false, true].into_iter().enumerate() {
        let net = small_net(quantum, 3, 3, 5 + k as u64);
        let mut rng = stream(9, Purpose::Dataset, 0, k as u64);
        let values: Vec<BidMatrix> = (0..5_000).map(|_| BidMatrix::random(3, 3, &mut rng)).collect();
        let summary = evaluate(&net, &values, &MisreportConfig { steps: 1, ..MisreportConfig::default() }, 0).unwrap();
        assert_eq!(summary.ir_violations, 0);
        assert!(summary.max_column_error < 1e-12);
    }
}

#[test]
fn spa_revenue_matches_the_order_statistic() {
    let est = revenue_oracle_mc(&SecondPrice::new(3, 3), 1_000_000, 42).unwrap();
    assert!((est.mean - 1.5).abs() < 4.0 * est.std_error, "{est:?}");
    assert!((est.mean - 1.5).abs() < 0.005);
    let single = revenue_oracle_mc(&SecondPrice::new(2, 1), 1_000_000, 42).unwrap();
    assert!((single.mean - 1.0 / 3.0).abs() < 4.0 * single.std_error, "{single:?}");
}

#[test]
fn reserve_price_revenue_matches_the_analytic_value() {
    // E[rev] with reserve r = 1/2: n=3 gives 17/32 per item, n=2 gives 5/12.
    let three = revenue_oracle_mc(&Myerson::uniform(3, 1), 1_000_000, 7).unwrap();
    assert!((three.mean - 17.0 / 32.0).abs() < 4.0 * three.std_error, "{three:?}");
    let two = revenue_oracle_mc(&Myerson::uniform(2, 1), 1_000_000, 7).unwrap();
    assert!((two.mean - 5.0 / 12.0).abs() < 4.0 * two.std_error, "{two:?}");
}

#[test]
fn monte_carlo_error_shrinks_with_the_square_root() {
    let spa = SecondPrice::new(3, 3);
    let small = revenue_oracle_mc(&spa, 1_000, 3).unwrap();
    let large = revenue_oracle_mc(&spa, 100_000, 3).unwrap();
    let ratio = small.std_error / large.std_error;
    assert!((7.0..13.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn monte_carlo_is_seeded() {
    let spa = SecondPrice::new(2, 2);
    let a = revenue_oracle_mc(&spa, 10_000, 5).unwrap();
    let b = revenue_oracle_mc(&spa, 10_000, 5).unwrap();
    let c = revenue_oracle_mc(&spa, 10_000, 6).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.mean, c.mean);
}

#[test]
fn audit_separates_truthful_from_manipulable_auctions() {
    assert!(dsic_audit(&SecondPrice::new(3, 1), 200, 1).unwrap().passed);
    assert!(dsic_audit(&Myerson::uniform(2, 2), 200, 1).unwrap().passed);
    let fp = dsic_audit(&FirstPrice::new(3, 1), 200, 1).unwrap();
    assert!(!fp.passed);
    assert!(fp.worst_violation > 0.05);
    assert!(fp.worst_profile.is_some());
}

#[test]
fn ascent_and_grid_agree_on_a_smooth_network() {
    let net = small_net(false, 2, 1, 17);
    let grid = GridSpec::new(0.01, 1).unwrap();
    let mut rng = stream(17, Purpose::Dataset, 0, 0);
    for _ in 0..10 {
        let v = BidMatrix::random(2, 1, &mut rng);
        let oracle = regret_grid_oracle(&net, &v, &grid).unwrap();
        let est = empirical_regret(&net, std::slice::from_ref(&v), &MisreportConfig::default(), 3).unwrap();
        for (a, g) in est.rgt.iter().zip(&oracle) {
            assert!((a - g).abs() < 0.01, "ascent {a} grid {g}");
        }
    }
}

#[test]
fn first_price_ascent_falls_back_to_the_grid() {
    let fp = FirstPrice::new(3, 1);
    let v = BidMatrix::new(3, 1, vec![0.9, 0.5, 0.2]).unwrap();
    let best = misreport_ascent(&fp, &v, 0, 20, 0.1, 0).unwrap();
    assert!((best[0] - 0.5).abs() < 1e-12);
}
