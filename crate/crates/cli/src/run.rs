//! Experiment orchestration: training runs, evaluation and regret audits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use qauction_core::auction::{
    best_misreports, evaluate, train, Checkpoint, EpochMetrics, MechanismKind, MisreportConfig, SampleStreams,
};
use qauction_core::baseline::{grid_best_responses, GridSpec, UNIFORM_RESERVE};
use qauction_core::{AuctionNet, BidMatrix, Mechanism};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dataset::{read_dataset, shape_of, to_bids, DatasetRecord};
use crate::error::{HarnessError, Result};
use crate::ledger::{Ledger, Sale};
use crate::metrics::MetricsWriter;

/// Where a run reads and writes its files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunPaths {
    pub out_dir: PathBuf,
}

/// Overrides the default output directory.
pub const OUT_DIR_ENV: &str = "QAUCTION_OUT_DIR";

impl RunPaths {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self { out_dir: out_dir.into() }
    }

    /// `explicit`, else `$QAUCTION_OUT_DIR`, else `./runs`.
    pub fn resolve(explicit: Option<PathBuf>) -> Self {
        let dir = explicit
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"));
        Self::new(dir)
    }

    pub fn train_data(&self) -> PathBuf {
        self.out_dir.join("train.jsonl")
    }

    pub fn test_data(&self) -> PathBuf {
        self.out_dir.join("test.jsonl")
    }

    pub fn ledger(&self) -> PathBuf {
        self.out_dir.join("ledger.jsonl")
    }

    pub fn metrics(&self, label: &str) -> PathBuf {
        self.out_dir.join(format!("{label}-metrics.csv"))
    }

    pub fn checkpoint(&self, label: &str) -> PathBuf {
        self.out_dir.join(format!("{label}-checkpoint.json"))
    }
}

pub fn mechanism_label(kind: MechanismKind) -> &'static str {
    match kind {
        MechanismKind::Dla => "dla",
        MechanismKind::Qdla => "qdla",
        MechanismKind::Spa => "spa",
        MechanismKind::Myerson => "myerson",
    }
}

fn variant_label(cfg: &ExperimentConfig) -> &'static str {
    match cfg.variant {
        qauction_core::Variant::Dla => "dla",
        qauction_core::Variant::Qdla => "qdla",
    }
}

/// Writes the train and test datasets for `cfg`.
pub fn gen_data(cfg: &ExperimentConfig, paths: &RunPaths) -> Result<()> {
    use crate::dataset::{gen_dataset, Split};
    cfg.validate()?;
    gen_dataset(cfg.n, cfg.m, cfg.train_count, cfg.seed, Split::Train, &paths.train_data())?;
    gen_dataset(cfg.n, cfg.m, cfg.test_count, cfg.seed, Split::Test, &paths.test_data())?;
    Ok(())
}

fn load_for(cfg: &ExperimentConfig, path: &Path) -> Result<Vec<DatasetRecord>> {
    let records = read_dataset(path)?;
    match shape_of(&records) {
        None => Err(HarnessError::Validation(vec![format!("{} is empty", path.display())])),
        Some(s) if s != (cfg.n, cfg.m) => Err(HarnessError::Validation(vec![format!(
            "{} holds {}x{} profiles but the config asks for n={}, m={}",
            path.display(),
            s.0,
            s.1,
            cfg.n,
            cfg.m
        )])),
        Some(_) => Ok(records),
    }
}

/// Item-level sales from argmax-decoded allocations. An item is sold when
/// its most likely buyer outweighs the unsold slot; the price is that
/// buyer's payment split across its items in proportion to allocated value.
pub fn decode_sales(mech: &dyn Mechanism, records: &[DatasetRecord], label: &str) -> Result<Vec<(String, Sale)>> {
    let bids = to_bids(records)?;
    let outcomes = mech.run_batch(&bids)?;
    let (n, m) = (mech.n_buyers(), mech.n_items());
    let mut sales = Vec::new();
    for ((rec, b), o) in records.iter().zip(&bids).zip(&outcomes) {
        let z = &o.allocation;
        for j in 0..m {
            let mut winner = 0;
            for i in 1..n {
                if z.get(i, j) > z.get(winner, j) {
                    winner = i;
                }
            }
            if z.get(winner, j) <= z.unsold_mass(j) {
                continue;
            }
            let total = z.allocated_value(b, winner);
            let share = if total > 0.0 { z.get(winner, j) * b.get(winner, j) / total } else { 0.0 };
            sales.push((
                rec.lot_id.clone(),
                Sale {
                    item: j,
                    winner,
                    price: o.payments.0[winner] * share,
                    mechanism: label.to_string(),
                },
            ));
        }
    }
    Ok(sales)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub metrics: Vec<EpochMetrics>,
    pub metrics_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub net: AuctionNet,
    pub sales_recorded: usize,
}

/// Trains on the run's datasets, streaming one metrics row per epoch, then
/// saves the final checkpoint and records test-set sales in the ledger.
pub fn train_run(cfg: &ExperimentConfig, paths: &RunPaths) -> Result<RunSummary> {
    cfg.validate()?;
    let train_records = load_for(cfg, &paths.train_data())?;
    let test_records = load_for(cfg, &paths.test_data())?;
    let train_set = to_bids(&train_records)?;
    let test_set = to_bids(&test_records)?;

    let label = variant_label(cfg);
    let metrics_path = paths.metrics(label);
    let mut writer = MetricsWriter::create(&metrics_path, cfg.n)?;
    let net = AuctionNet::new(cfg.net_config(), cfg.seed)?;
    let mut write_err = None;
    let outcome = train(net, &train_set, &test_set, &cfg.train_config(), |row, _| {
        if write_err.is_none() {
            write_err = writer.push(row).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }

    let checkpoint_path = paths.checkpoint(label);
    let ckpt = Checkpoint::from_net(&outcome.net, cfg.seed, cfg.epochs, cfg.to_json());
    std::fs::write(&checkpoint_path, ckpt.to_json()? + "\n").map_err(|e| HarnessError::io(&checkpoint_path, e))?;

    let mut ledger = Ledger::open(&paths.ledger())?;
    ledger.mint(&test_records, &cfg.creator_id)?;
    let sales = decode_sales(&outcome.net, &test_records, label)?;
    let sales_recorded = ledger.record_sales(sales)?;

    Ok(RunSummary {
        metrics: outcome.metrics,
        metrics_path,
        checkpoint_path,
        net: outcome.net,
        sales_recorded,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(Checkpoint::from_json(&text)?)
}

/// Baseline pseudo-checkpoint by name (`spa` or `myerson`).
pub fn baseline_checkpoint(name: &str, n: usize, m: usize) -> Result<Checkpoint> {
    match name {
        "spa" => Ok(Checkpoint::spa(n, m)),
        "myerson" => Ok(Checkpoint::myerson(n, m, UNIFORM_RESERVE)),
        other => Err(HarnessError::Validation(vec![format!(
            "unknown baseline {other:?} (expected spa or myerson)"
        )])),
    }
}

/// Misreport search settings and seed recorded in a checkpoint, if any.
pub fn search_settings(ckpt: &Checkpoint) -> (MisreportConfig, u64) {
    match serde_json::from_value::<ExperimentConfig>(ckpt.config.clone()) {
        Ok(cfg) if !ckpt.config.is_null() => (cfg.misreport(), cfg.seed),
        _ => (MisreportConfig::default(), ckpt.seed),
    }
}

fn check_shape(ckpt: &Checkpoint, records: &[DatasetRecord]) -> Result<()> {
    let (n, m) = shape_of(records).unwrap_or((0, 0));
    if (n, m) != (ckpt.n_buyers, ckpt.n_items) {
        return Err(HarnessError::ShapeMismatch {
            checkpoint: format!("{}x{} (buyers x items)", ckpt.n_buyers, ckpt.n_items),
            dataset: format!("{n}x{m} (buyers x items)"),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mechanism: String,
    pub samples: usize,
    pub revenue: f64,
    /// Per-buyer ascent regret; absent when regret was skipped.
    pub regret: Option<Vec<f64>>,
    pub ir_violations: usize,
    pub max_column_error: f64,
}

/// Revenue, IR violations and (optionally) ascent regret of a checkpoint
/// over a dataset, with the search settings recorded in the checkpoint.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, records: &[DatasetRecord], with_regret: bool) -> Result<EvalReport> {
    check_shape(ckpt, records)?;
    let mech = ckpt.mechanism()?;
    let bids = to_bids(records)?;
    let (misreport, seed) = search_settings(ckpt);
    let mechanism = mechanism_label(ckpt.mechanism).to_string();
    if with_regret {
        let s = evaluate(mech.as_ref(), &bids, &misreport, seed)?;
        return Ok(EvalReport {
            mechanism,
            samples: bids.len(),
            revenue: s.revenue,
            regret: Some(s.regret.rgt),
            ir_violations: s.ir_violations,
            max_column_error: s.max_column_error,
        });
    }
    let outcomes = mech.run_batch(&bids)?;
    let mut report = EvalReport {
        mechanism,
        samples: bids.len(),
        revenue: 0.0,
        regret: None,
        ir_violations: 0,
        max_column_error: 0.0,
    };
    for (b, o) in bids.iter().zip(&outcomes) {
        report.revenue += o.payments.total();
        report.max_column_error = report.max_column_error.max(o.allocation.column_sum_error());
        report.ir_violations += (0..b.n_buyers())
            .filter(|&i| qauction_core::auction::buyer_utility(b, o, i) < -qauction_core::auction::IR_TOLERANCE)
            .count();
    }
    report.revenue /= bids.len().max(1) as f64;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub buyer: usize,
    pub ascent: f64,
    pub grid: f64,
    pub discrepancy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditTable {
    pub mechanism: String,
    pub profiles: usize,
    pub grid_step: f64,
    pub rows: Vec<AuditRow>,
    pub max_discrepancy: f64,
    pub worst_buyer: usize,
}

impl AuditTable {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "regret audit: {} on {} profiles, grid step {}",
            self.mechanism, self.profiles, self.grid_step
        );
        let _ = writeln!(s, "{:>5}  {:>12}  {:>12}  {:>12}", "buyer", "ascent", "grid", "|diff|");
        for r in &self.rows {
            let mark = if r.buyer == self.worst_buyer { " <- max" } else { "" };
            let _ = writeln!(
                s,
                "{:>5}  {:>12.6}  {:>12.6}  {:>12.6}{mark}",
                r.buyer, r.ascent, r.grid, r.discrepancy
            );
        }
        let _ = writeln!(s, "max discrepancy {:.6} (buyer {})", self.max_discrepancy, self.worst_buyer);
        s
    }
}

/// Ascent regret next to exhaustive grid regret on the first `limit`
/// profiles of a dataset.
pub fn regret_audit(
    ckpt: &Checkpoint,
    records: &[DatasetRecord],
    grid_step: f64,
    limit: Option<usize>,
) -> Result<AuditTable> {
    check_shape(ckpt, records)?;
    let grid = GridSpec::new(grid_step, ckpt.n_items)?;
    let mech = ckpt.mechanism()?;
    let take = limit.unwrap_or(records.len()).min(records.len());
    let bids: Vec<BidMatrix> = to_bids(&records[..take])?;
    if bids.is_empty() {
        return Err(HarnessError::Validation(vec!["regret audit over zero profiles".into()]));
    }
    let (misreport, seed) = search_settings(ckpt);
    let ids: Vec<u64> = (0..take as u64).collect();
    let ascent = best_misreports(mech.as_ref(), &bids, &misreport, SampleStreams::eval(seed), &ids)?;
    let exhaustive = grid_best_responses(mech.as_ref(), &bids, &grid)?;
    let n = ckpt.n_buyers;
    let mean = |samples: &[qauction_core::auction::SampleRegret], i: usize| {
        samples.iter().map(|s| s.gains()[i]).sum::<f64>() / samples.len() as f64
    };
    let rows: Vec<AuditRow> = (0..n)
        .map(|i| {
            let (a, g) = (mean(&ascent, i), mean(&exhaustive, i));
            AuditRow {
                buyer: i,
                ascent: a,
                grid: g,
                discrepancy: (a - g).abs(),
            }
        })
        .collect();
    let worst = rows
        .iter()
        .fold(&rows[0], |w, r| if r.discrepancy > w.discrepancy { r } else { w });
    Ok(AuditTable {
        mechanism: mechanism_label(ckpt.mechanism).to_string(),
        profiles: take,
        grid_step,
        max_discrepancy: worst.discrepancy,
        worst_buyer: worst.buyer,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, Split};

    #[test]
    fn spa_sales_go_to_the_highest_bidder() {
        let recs = vec![DatasetRecord {
            lot_id: "x".into(),
            valuations: vec![vec![0.9, 0.1], vec![0.4, 0.3]],
        }];
        let spa = qauction_core::baseline::SecondPrice::new(2, 2);
        let sales = decode_sales(&spa, &recs, "spa").unwrap();
        assert_eq!(sales.len(), 2);
        assert_eq!((sales[0].1.item, sales[0].1.winner), (0, 0));
        assert_eq!((sales[1].1.item, sales[1].1.winner), (1, 1));
        // buyer 0 pays 0.4 in total, all of it on item 0
        assert!((sales[0].1.price - 0.4).abs() < 1e-12);
        assert!((sales[1].1.price - 0.1).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_prints_both_shapes() {
        let recs = generate(2, 1, 3, 0, Split::Test);
        let err = evaluate_checkpoint(&Checkpoint::spa(3, 3), &recs, false).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("3x3") && msg.contains("2x1"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn spa_audit_has_zero_regret_in_both_columns() {
        let recs = generate(2, 2, 5, 0, Split::Test);
        let t = regret_audit(&Checkpoint::spa(2, 2), &recs, 0.1, None).unwrap();
        for r in &t.rows {
            assert_eq!((r.ascent, r.grid), (0.0, 0.0));
        }
        assert!(t.render().contains("max discrepancy 0.000000"));
    }

    #[test]
    fn out_dir_resolution_prefers_the_explicit_path() {
        assert_eq!(RunPaths::resolve(Some("a".into())).out_dir, PathBuf::from("a"));
    }
}
