//! Regret-penalized revenue maximization.
//!
//! The loss is `-revenue + sum_i lambda_i rgt_i + rho/2 sum_i rgt_i^2`, where
//! `rgt_i` is buyer `i`'s mean utility gain at the misreports found by the
//! ascent search. Multipliers grow by `rho * rgt` once per epoch.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::net::{allocated_value, AuctionNet};
use super::regret::{best_misreports, MisreportConfig, RegretEstimate, SampleStreams};
use super::types::{buyer_utility, BidMatrix, Mechanism};
use crate::autodiff::{AdamState, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Truthful utilities below `-IR_TOLERANCE` count as IR violations.
pub const IR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagrangianState {
    pub lambda: Vec<f64>,
    pub rho: f64,
}

impl LagrangianState {
    pub fn new(n_buyers: usize, lambda_init: f64, rho: f64) -> Result<Self> {
        if !(lambda_init.is_finite() && lambda_init >= 0.0) || !(rho.is_finite() && rho > 0.0) {
            return Err(Error::InvalidInput(format!("lambda_init={lambda_init}, rho={rho}")));
        }
        Ok(Self {
            lambda: vec![lambda_init; n_buyers],
            rho,
        })
    }

    /// `lambda_i += rho * rgt_i`.
    pub fn update(&mut self, rgt: &[f64]) {
        for (l, r) in self.lambda.iter_mut().zip(rgt) {
            *l += self.rho * r;
        }
    }

    pub fn mean_lambda(&self) -> f64 {
        self.lambda.iter().sum::<f64>() / self.lambda.len() as f64
    }
}

/// The scalar loss from its ingredients.
pub fn augmented_loss(revenue: f64, rgt: &[f64], lag: &LagrangianState) -> f64 {
    let linear: f64 = lag.lambda.iter().zip(rgt).map(|(l, r)| l * r).sum();
    let quad: f64 = rgt.iter().map(|r| r * r).sum();
    -revenue + linear + 0.5 * lag.rho * quad
}

#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub loss: Var,
    pub revenue: Var,
    /// `[1, n]`.
    pub rgt: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub loss: f64,
    pub revenue: f64,
    pub rgt: Vec<f64>,
}

/// Records the training loss for `values` with fixed `misreports[s][i]`.
pub fn loss_on_tape(
    net: &AuctionNet,
    tape: &mut Tape,
    params: &[Var],
    values: &[BidMatrix],
    misreports: &[Vec<Vec<f64>>],
    lag: &LagrangianState,
) -> Result<LossVars> {
    let (n, m) = (net.config().n_buyers, net.config().n_items);
    let b = values.len();
    if b == 0 || misreports.len() != b || lag.lambda.len() != n {
        return Err(Error::InvalidInput(format!(
            "loss over {b} profiles with {} misreport sets and {} multipliers",
            misreports.len(),
            lag.lambda.len()
        )));
    }
    let rows = b * (1 + n);
    let mut profiles: Vec<BidMatrix> = values.to_vec();
    for i in 0..n {
        for (v, mis) in values.iter().zip(misreports) {
            profiles.push(v.with_row(i, &mis[i]));
        }
    }
    let truth: Vec<f64> = (0..=n).flat_map(|_| values.iter().flat_map(|v| v.as_slice().iter().copied())).collect();

    let bids = tape.constant(net.bids_tensor(&profiles)?);
    let truth = tape.constant(Tensor::new(vec![rows, n * m], truth)?);
    let out = net.forward_on_tape(tape, params, bids)?;
    let value = allocated_value(tape, out.allocation, truth, n, m)?;
    let utility = tape.sub(value, out.payments)?;

    let paid = tape.gather(out.payments, (0..b * n).collect(), &[b, n])?;
    let paid = tape.sum(paid);
    let revenue = tape.scale(paid, 1.0 / b as f64);

    let u_truth = tape.gather(utility, (0..b * n).collect(), &[b, n])?;
    let mis_index: Vec<usize> = (0..b)
        .flat_map(|s| (0..n).map(move |i| ((1 + i) * b + s) * n + i))
        .collect();
    let u_mis = tape.gather(utility, mis_index, &[b, n])?;
    let gain = tape.sub(u_mis, u_truth)?;
    let gain = tape.relu(gain);
    let rgt = tape.sum_rows(gain)?;
    let rgt = tape.scale(rgt, 1.0 / b as f64);

    let lambda = tape.constant(Tensor::new(vec![1, n], lag.lambda.clone())?);
    let linear = tape.mul(lambda, rgt)?;
    let linear = tape.sum(linear);
    let sq = tape.mul(rgt, rgt)?;
    let sq = tape.sum(sq);
    let quad = tape.scale(sq, 0.5 * lag.rho);
    let neg_rev = tape.scale(revenue, -1.0);
    let loss = tape.add(neg_rev, linear)?;
    let loss = tape.add(loss, quad)?;
    Ok(LossVars { loss, revenue, rgt })
}

fn breakdown(tape: &Tape, vars: LossVars) -> LossBreakdown {
    LossBreakdown {
        loss: tape.value(vars.loss).data()[0],
        revenue: tape.value(vars.revenue).data()[0],
        rgt: tape.value(vars.rgt).data().to_vec(),
    }
}

pub fn training_loss(
    net: &AuctionNet,
    values: &[BidMatrix],
    misreports: &[Vec<Vec<f64>>],
    lag: &LagrangianState,
) -> Result<LossBreakdown> {
    let mut tape = Tape::new();
    let params = net.register(&mut tape, false);
    let vars = loss_on_tape(net, &mut tape, &params, values, misreports, lag)?;
    Ok(breakdown(&tape, vars))
}

/// Loss and its gradient with respect to every parameter.
pub fn loss_gradients(
    net: &AuctionNet,
    values: &[BidMatrix],
    misreports: &[Vec<Vec<f64>>],
    lag: &LagrangianState,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let params = net.register(&mut tape, true);
    let vars = loss_on_tape(net, &mut tape, &params, values, misreports, lag)?;
    let mut grads = tape.backward(vars.loss)?;
    let g = params
        .iter()
        .map(|&p| grads.take(p).expect("parameter gradient"))
        .collect();
    Ok((breakdown(&tape, vars), g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub misreport: MisreportConfig,
    pub lambda_init: f64,
    pub rho: f64,
    /// When false every `wallclock_s` is reported as 0 so metric rows are
    /// reproducible byte for byte.
    pub record_wallclock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 100,
            seed: 42,
            misreport: MisreportConfig::default(),
            lambda_init: 5.0,
            rho: 1.0,
            record_wallclock: true,
        }
    }
}

/// Test-set summary of a mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub revenue: f64,
    pub regret: RegretEstimate,
    pub ir_violations: usize,
    pub max_column_error: f64,
}

/// Revenue, ascent regret and IR violations over `values`.
pub fn evaluate(mech: &dyn Mechanism, values: &[BidMatrix], cfg: &MisreportConfig, seed: u64) -> Result<EvalSummary> {
    if values.is_empty() {
        return Err(Error::InvalidInput("evaluation over an empty dataset".into()));
    }
    let outcomes = mech.run_batch(values)?;
    let mut ir_violations = 0;
    let mut max_column_error: f64 = 0.0;
    let mut total = 0.0;
    for (v, o) in values.iter().zip(&outcomes) {
        total += o.payments.total();
        max_column_error = max_column_error.max(o.allocation.column_sum_error());
        ir_violations += (0..v.n_buyers())
            .filter(|&i| buyer_utility(v, o, i) < -IR_TOLERANCE)
            .count();
    }
    let ids: Vec<u64> = (0..values.len() as u64).collect();
    let samples = best_misreports(mech, values, cfg, SampleStreams::eval(seed), &ids)?;
    Ok(EvalSummary {
        revenue: total / values.len() as f64,
        regret: RegretEstimate::from_samples(mech.n_buyers(), samples)?,
        ir_violations,
        max_column_error,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub revenue_train: f64,
    pub revenue_test: f64,
    pub regret_test: Vec<f64>,
    pub ir_violations: usize,
    pub lambda_mean: f64,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: AuctionNet,
    pub metrics: Vec<EpochMetrics>,
    pub lagrangian: LagrangianState,
}

/// Mini-batch Adam on the augmented loss, evaluating on `test` after every
/// epoch. `on_epoch` sees each metrics row and the current network.
pub fn train(
    mut net: AuctionNet,
    train_set: &[BidMatrix],
    test_set: &[BidMatrix],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics, &AuctionNet),
) -> Result<TrainOutcome> {
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::InvalidInput("training needs non-empty train and test sets".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidInput("batch size must be >= 1".into()));
    }
    cfg.misreport.validate()?;
    for v in train_set.iter().chain(test_set) {
        net.check_profile(v)?;
    }
    let n = net.config().n_buyers;
    let mut lag = LagrangianState::new(n, cfg.lambda_init, cfg.rho)?;
    let mut adam = AdamState::new(net.config().lr, net.params());
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let started = Instant::now();

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, Purpose::Shuffle, epoch as u64, 0));
        let streams = SampleStreams {
            seed: cfg.seed,
            purpose: Purpose::TrainMisreport,
            epoch: epoch as u64,
        };
        let mut revenue_sum = 0.0;
        let mut rgt_sum = vec![0.0; n];
        let mut batches = 0usize;
        for (batch_no, idx) in order.chunks(cfg.batch_size).enumerate() {
            let values: Vec<BidMatrix> = idx.iter().map(|&k| train_set[k].clone()).collect();
            let ids: Vec<u64> = idx.iter().map(|&k| k as u64).collect();
            let found = best_misreports(&net, &values, &cfg.misreport, streams, &ids)?;
            let misreports: Vec<Vec<Vec<f64>>> = found.into_iter().map(|s| s.misreports).collect();
            let (parts, grads) = loss_gradients(&net, &values, &misreports, &lag)?;
            let diverged = |detail: String| Error::Diverged {
                epoch,
                batch: batch_no,
                detail,
            };
            if !parts.loss.is_finite() {
                return Err(diverged(format!("loss is {}", parts.loss)));
            }
            adam.step(net.params_mut(), &grads).map_err(|e| diverged(e.to_string()))?;
            revenue_sum += parts.revenue;
            for (s, r) in rgt_sum.iter_mut().zip(&parts.rgt) {
                *s += r;
            }
            batches += 1;
        }
        let rgt_epoch: Vec<f64> = rgt_sum.iter().map(|s| s / batches as f64).collect();
        lag.update(&rgt_epoch);

        let eval = evaluate(&net, test_set, &cfg.misreport, cfg.seed)?;
        let row = EpochMetrics {
            epoch,
            revenue_train: revenue_sum / batches as f64,
            revenue_test: eval.revenue,
            regret_test: eval.regret.rgt,
            ir_violations: eval.ir_violations,
            lambda_mean: lag.mean_lambda(),
            wallclock_s: if cfg.record_wallclock {
                started.elapsed().as_secs_f64()
            } else {
                0.0
            },
        };
        on_epoch(&row, &net);
        metrics.push(row);
    }
    Ok(TrainOutcome {
        net,
        metrics,
        lagrangian: lag,
    })
}
