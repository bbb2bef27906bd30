//! Per-epoch metrics CSV.

use std::path::Path;

use qauction_core::auction::EpochMetrics;

use crate::error::{HarnessError, Result};

pub fn header(n_buyers: usize) -> Vec<String> {
    let mut h: Vec<String> = ["epoch", "revenue_train", "revenue_test"].map(String::from).to_vec();
    h.extend((0..n_buyers).map(|i| format!("regret_b{i}")));
    h.extend(["ir_violations", "lambda_mean", "wallclock_s"].map(String::from));
    h
}

fn record(row: &EpochMetrics) -> Vec<String> {
    let mut r = vec![row.epoch.to_string(), row.revenue_train.to_string(), row.revenue_test.to_string()];
    r.extend(row.regret_test.iter().map(f64::to_string));
    r.extend([row.ir_violations.to_string(), row.lambda_mean.to_string(), row.wallclock_s.to_string()]);
    r
}

/// Streams rows to a CSV file, flushing after each so partial runs leave
/// readable output.
pub struct MetricsWriter {
    path: std::path::PathBuf,
    inner: csv::Writer<std::fs::File>,
}

impl MetricsWriter {
    pub fn create(path: &Path, n_buyers: usize) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        }
        let file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            inner: csv::Writer::from_writer(file),
        };
        w.write(&header(n_buyers))?;
        Ok(w)
    }

    fn write(&mut self, fields: &[String]) -> Result<()> {
        self.inner
            .write_record(fields)
            .and_then(|_| self.inner.flush().map_err(csv::Error::from))
            .map_err(|e| HarnessError::io(&self.path, std::io::Error::other(e)))
    }

    pub fn push(&mut self, row: &EpochMetrics) -> Result<()> {
        self.write(&record(row))
    }
}

/// One parsed metrics row; `raw` keeps the original text of every field.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub revenue_train: f64,
    pub revenue_test: f64,
    pub regret: Vec<f64>,
    pub ir_violations: usize,
    pub lambda_mean: f64,
    pub wallclock_s: f64,
    pub raw: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub header: Vec<String>,
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn n_buyers(&self) -> usize {
        self.header.len() - 6
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

pub fn read_metrics(path: &Path) -> Result<MetricsTable> {
    let parse_err = |line: usize, message: String| HarnessError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| HarnessError::io(path, std::io::Error::other(e)))?;
    let mut records = reader.records();
    let header: Vec<String> = match records.next() {
        Some(Ok(r)) => r.iter().map(String::from).collect(),
        Some(Err(e)) => return Err(parse_err(1, e.to_string())),
        None => return Err(parse_err(1, "empty metrics file".into())),
    };
    let n = header.len().checked_sub(6).filter(|&n| n >= 1);
    match n {
        Some(n) if header == self::header(n) => {}
        _ => return Err(parse_err(1, format!("unexpected header {}", header.join(",")))),
    }
    let n = header.len() - 6;
    let mut rows = Vec::new();
    for rec in records {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line() as usize), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(parse_err(line, format!("{} fields, expected {}", rec.len(), header.len())));
        }
        let float = |k: usize| -> Result<f64> {
            rec[k]
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("column {}: not a number: {:?}", header[k], &rec[k])))
        };
        let int = |k: usize| -> Result<usize> {
            rec[k]
                .parse::<usize>()
                .map_err(|_| parse_err(line, format!("column {}: not an integer: {:?}", header[k], &rec[k])))
        };
        rows.push(MetricsRow {
            epoch: int(0)?,
            revenue_train: float(1)?,
            revenue_test: float(2)?,
            regret: (0..n).map(|i| float(3 + i)).collect::<Result<_>>()?,
            ir_violations: int(3 + n)?,
            lambda_mean: float(4 + n)?,
            wallclock_s: float(5 + n)?,
            raw: rec.iter().map(String::from).collect(),
        });
    }
    Ok(MetricsTable { header, rows })
}
