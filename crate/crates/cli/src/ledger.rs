//! Append-only JSON-lines ledger of minted lots and their sales.
//!
//! A mint line carries the SHA-256 digest of the lot's dataset line. A sale
//! line repeats the lot's mint fields and adds the sale; it must reference
//! a lot minted earlier in the file.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{read_dataset, DatasetRecord};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sale {
    pub item: usize,
    pub winner: usize,
    pub price: f64,
    pub mechanism: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerEntry {
    pub lot_id: String,
    pub creator_id: String,
    pub mint_epoch: u64,
    pub content_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sale: Option<Sale>,
}

/// Hex SHA-256 of the record's dataset line.
pub fn content_digest(record: &DatasetRecord) -> String {
    hex::encode(Sha256::digest(record.to_line().as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MintSummary {
    pub added: usize,
    pub skipped: usize,
}

/// In-memory view of a ledger file; every write goes through `append`.
#[derive(Debug)]
pub struct Ledger {
    path: PathBuf,
    entries: Vec<LedgerEntry>,
    minted: HashMap<String, usize>,
}

impl Ledger {
    /// Loads `path`, or starts empty if it does not exist.
    pub fn open(path: &Path) -> Result<Self> {
        let mut ledger = Self {
            path: path.to_path_buf(),
            entries: Vec::new(),
            minted: HashMap::new(),
        };
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(ledger),
            Err(e) => return Err(HarnessError::io(path, e)),
        };
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
            let entry: LedgerEntry = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
            ledger.admit(&entry).map_err(parse_err)?;
            ledger.index(entry);
        }
        Ok(ledger)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn mint_entry(&self, lot_id: &str) -> Option<&LedgerEntry> {
        self.minted.get(lot_id).map(|&i| &self.entries[i])
    }

    pub fn sales(&self) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.iter().filter(|e| e.sale.is_some())
    }

    pub fn next_mint_epoch(&self) -> u64 {
        self.entries.iter().map(|e| e.mint_epoch).max().map_or(1, |e| e + 1)
    }

    fn admit(&self, entry: &LedgerEntry) -> std::result::Result<(), String> {
        match (&entry.sale, self.mint_entry(&entry.lot_id)) {
            (None, Some(_)) => Err(format!("lot {} minted twice", entry.lot_id)),
            (Some(_), None) => Err(format!("sale of unminted lot {}", entry.lot_id)),
            (Some(_), Some(m)) if m.content_digest != entry.content_digest => {
                Err(format!("sale of lot {} carries a different digest", entry.lot_id))
            }
            _ => Ok(()),
        }
    }

    fn index(&mut self, entry: LedgerEntry) {
        if entry.sale.is_none() {
            self.minted.insert(entry.lot_id.clone(), self.entries.len());
        }
        self.entries.push(entry);
    }

    /// Validates and appends entries, then writes them in one pass.
    pub fn append(&mut self, new: Vec<LedgerEntry>) -> Result<()> {
        if new.is_empty() {
            return Ok(());
        }
        let start = self.entries.len();
        for entry in new {
            if let Err(msg) = self.admit(&entry) {
                self.rollback(start);
                return Err(HarnessError::Ledger(msg));
            }
            self.index(entry);
        }
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| HarnessError::io(&self.path, e))?;
        let mut w = BufWriter::new(file);
        for e in &self.entries[start..] {
            let line = serde_json::to_string(e).expect("entry serializes");
            writeln!(w, "{line}").map_err(|err| HarnessError::io(&self.path, err))?;
        }
        w.flush().map_err(|e| HarnessError::io(&self.path, e))
    }

    fn rollback(&mut self, len: usize) {
        for e in self.entries.drain(len..) {
            if e.sale.is_none() {
                self.minted.remove(&e.lot_id);
            }
        }
    }

    /// Mints every record not yet on the ledger. A lot already present with
    /// a different digest is a corruption error and nothing is written.
    pub fn mint(&mut self, records: &[DatasetRecord], creator_id: &str) -> Result<MintSummary> {
        let epoch = self.next_mint_epoch();
        let mut fresh = Vec::new();
        let mut skipped = 0;
        for r in records {
            let digest = content_digest(r);
            match self.mint_entry(&r.lot_id) {
                Some(existing) if existing.content_digest != digest => {
                    return Err(HarnessError::Corruption {
                        lot_id: r.lot_id.clone(),
                        recorded: existing.content_digest.clone(),
                        actual: digest,
                    });
                }
                Some(_) => skipped += 1,
                None => fresh.push(LedgerEntry {
                    lot_id: r.lot_id.clone(),
                    creator_id: creator_id.to_string(),
                    mint_epoch: epoch,
                    content_digest: digest,
                    sale: None,
                }),
            }
        }
        let added = fresh.len();
        self.append(fresh)?;
        Ok(MintSummary { added, skipped })
    }

    /// Appends sales for minted lots.
    pub fn record_sales(&mut self, sales: Vec<(String, Sale)>) -> Result<usize> {
        let mut entries = Vec::with_capacity(sales.len());
        for (lot_id, sale) in sales {
            let mint = self
                .mint_entry(&lot_id)
                .ok_or_else(|| HarnessError::Ledger(format!("sale of unminted lot {lot_id}")))?;
            entries.push(LedgerEntry {
                sale: Some(sale),
                ..mint.clone()
            });
        }
        let count = entries.len();
        self.append(entries)?;
        Ok(count)
    }
}

/// Mints the lots of a dataset file into a ledger file.
pub fn mint_lots(dataset: &Path, ledger: &Path, creator_id: &str) -> Result<MintSummary> {
    let records = read_dataset(dataset)?;
    Ledger::open(ledger)?.mint(&records, creator_id)
}
