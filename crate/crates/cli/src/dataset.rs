//! JSON-lines valuation datasets.
//!
//! Values come from `ChaCha20Rng::seed_from_u64(seed)` on stream
//! `(1 << 56) | (split << 32)`, drawn row-major per record with
//! `rand`'s 53-bit uniform `f64`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use qauction_core::rng::{stream, Purpose};
use qauction_core::BidMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn stream_epoch(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub lot_id: String,
    /// `n` rows of `m` values.
    pub valuations: Vec<Vec<f64>>,
}

impl DatasetRecord {
    pub fn bids(&self) -> qauction_core::Result<BidMatrix> {
        BidMatrix::from_rows(&self.valuations)
    }

    /// The exact JSON line (without newline) written for this record.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Deterministic records; lot ids are `<split>-<index>`.
pub fn generate(n: usize, m: usize, count: usize, seed: u64, split: Split) -> Vec<DatasetRecord> {
    let mut rng = stream(seed, Purpose::Dataset, split.stream_epoch(), 0);
    (0..count)
        .map(|k| DatasetRecord {
            lot_id: format!("{}-{k:06}", split.label()),
            valuations: BidMatrix::random(n, m, &mut rng).to_rows(),
        })
        .collect()
}

pub fn gen_dataset(n: usize, m: usize, count: usize, seed: u64, split: Split, path: &Path) -> Result<usize> {
    if count == 0 {
        return Err(HarnessError::Validation(vec!["count must be >= 1".into()]));
    }
    if n == 0 || m == 0 {
        return Err(HarnessError::Validation(vec![format!("dataset shape {n}x{m} is empty")]));
    }
    write_records(path, &generate(n, m, count, seed, split))?;
    Ok(count)
}

pub fn write_records(path: &Path, records: &[DatasetRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        writeln!(w, "{}", r.to_line()).map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Reads and validates a dataset: consistent shapes, values in `[0, 1]`,
/// unique lot ids. Blank lines are ignored.
pub fn read_dataset(path: &Path) -> Result<Vec<DatasetRecord>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut shape: Option<(usize, usize)> = None;
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| HarnessError::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            message,
        };
        let rec: DatasetRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let bids = rec.bids().map_err(|e| parse_err(e.to_string()))?;
        let s = (bids.n_buyers(), bids.n_items());
        let expected = *shape.get_or_insert(s);
        if expected != s {
            return Err(parse_err(format!(
                "record is {}x{}, earlier records are {}x{}",
                s.0, s.1, expected.0, expected.1
            )));
        }
        if !seen.insert(rec.lot_id.clone()) {
            return Err(parse_err(format!("duplicate lot_id {}", rec.lot_id)));
        }
        records.push(rec);
    }
    Ok(records)
}

pub fn to_bids(records: &[DatasetRecord]) -> Result<Vec<BidMatrix>> {
    records.iter().map(|r| r.bids().map_err(HarnessError::from)).collect()
}

/// `(n, m)` of a non-empty dataset.
pub fn shape_of(records: &[DatasetRecord]) -> Option<(usize, usize)> {
    records.first().map(|r| (r.valuations.len(), r.valuations[0].len()))
}
