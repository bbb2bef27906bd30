use std::path::Path;

use qauction_core::auction::{MisreportConfig, NetConfig, TrainConfig, Variant, MAX_AGENTS};
use qauction_core::baseline::GridSpec;
use qauction_core::quantum::MAX_QUBITS;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Everything that determines an experiment. Output locations are not part
/// of it, so two runs in different directories record identical configs.
///
/// Architecture fields left unset take the defaults of the chosen variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub n: usize,
    pub m: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lstm_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qubits: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    pub lambda_init: f64,
    pub rho: f64,
    pub misreport_steps: usize,
    pub misreport_step_size: f64,
    pub random_start: bool,
    pub grid_step: f64,
    /// Write `wallclock_s = 0` so metrics files are reproducible.
    pub record_wallclock: bool,
    pub creator_id: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            variant: Variant::Dla,
            n: 3,
            m: 3,
            train_count: 7000,
            test_count: 3000,
            seed: train.seed,
            epochs: train.epochs,
            batch_size: train.batch_size,
            lr: None,
            lstm_size: None,
            hidden_size: None,
            qubits: None,
            layers: None,
            lambda_init: train.lambda_init,
            rho: train.rho,
            misreport_steps: train.misreport.steps,
            misreport_step_size: train.misreport.step_size,
            random_start: train.misreport.random_start,
            grid_step: train.misreport.fallback_grid_step,
            record_wallclock: true,
            creator_id: "market".into(),
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config; absent fields keep their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    pub fn net_config(&self) -> NetConfig {
        let base = match self.variant {
            Variant::Dla => NetConfig::dla(self.n, self.m),
            Variant::Qdla => NetConfig::qdla(self.n, self.m),
        };
        NetConfig {
            lr: self.lr.unwrap_or(base.lr),
            lstm_size: self.lstm_size.unwrap_or(base.lstm_size),
            hidden_size: self.hidden_size.unwrap_or(base.hidden_size),
            qubits: self.qubits.unwrap_or(base.qubits),
            layers: self.layers.unwrap_or(base.layers),
            ..base
        }
    }

    pub fn misreport(&self) -> MisreportConfig {
        MisreportConfig {
            steps: self.misreport_steps,
            step_size: self.misreport_step_size,
            random_start: self.random_start,
            fallback_grid_step: self.grid_step,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            misreport: self.misreport(),
            lambda_init: self.lambda_init,
            rho: self.rho,
            record_wallclock: self.record_wallclock,
        }
    }

    /// Checks every field and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                bad.push(msg);
            }
        };
        need((1..=MAX_AGENTS).contains(&self.n), format!("n = {} (expected 1..={MAX_AGENTS})", self.n));
        need((1..=MAX_AGENTS).contains(&self.m), format!("m = {} (expected 1..={MAX_AGENTS})", self.m));
        need(self.train_count >= 1, "train_count must be >= 1".into());
        need(self.test_count >= 1, "test_count must be >= 1".into());
        need(self.batch_size >= 1, "batch_size must be >= 1".into());
        let net = self.net_config();
        need(net.lr.is_finite() && net.lr > 0.0, format!("lr = {} (expected > 0)", net.lr));
        need(net.lstm_size >= 1, "lstm_size must be >= 1".into());
        need(net.hidden_size >= 1, "hidden_size must be >= 1".into());
        if self.variant == Variant::Qdla {
            need(
                (1..=MAX_QUBITS).contains(&net.qubits),
                format!("qubits = {} (expected 1..={MAX_QUBITS})", net.qubits),
            );
            need(net.layers >= 1, "layers must be >= 1".into());
        }
        need(
            self.lambda_init.is_finite() && self.lambda_init >= 0.0,
            format!("lambda_init = {} (expected >= 0)", self.lambda_init),
        );
        need(self.rho.is_finite() && self.rho > 0.0, format!("rho = {} (expected > 0)", self.rho));
        need(self.misreport_steps >= 1, "misreport_steps must be >= 1".into());
        need(
            self.misreport_step_size.is_finite() && self.misreport_step_size > 0.0,
            format!("misreport_step_size = {} (expected > 0)", self.misreport_step_size),
        );
        need(
            GridSpec::new(self.grid_step, 1).is_ok(),
            format!("grid_step = {} (expected 1/k for a positive integer k)", self.grid_step),
        );
        need(!self.creator_id.trim().is_empty(), "creator_id must not be empty".into());
        if bad.is_empty() {
            Ok(())
        } else {
            Err(HarnessError::Validation(bad))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_describe_the_reference_experiment() {
        let c = ExperimentConfig::default();
        assert_eq!((c.n, c.m, c.train_count, c.test_count), (3, 3, 7000, 3000));
        c.validate().unwrap();
        let net = c.net_config();
        assert_eq!((net.lstm_size, net.hidden_size, net.lr), (32, 32, 0.001));
        let q = ExperimentConfig {
            variant: Variant::Qdla,
            ..c
        };
        let net = q.net_config();
        assert_eq!((net.lstm_size, net.hidden_size, net.qubits, net.layers, net.lr), (4, 16, 4, 6, 0.01));
    }

    #[test]
    fn validation_lists_every_bad_field() {
        let c = ExperimentConfig {
            n: 0,
            batch_size: 0,
            rho: -1.0,
            grid_step: 0.3,
            lr: Some(f64::NAN),
            ..ExperimentConfig::default()
        };
        match c.validate() {
            Err(HarnessError::Validation(msgs)) => {
                assert_eq!(msgs.len(), 5, "{msgs:?}");
                for key in ["n =", "batch_size", "rho", "grid_step", "lr"] {
                    assert!(msgs.iter().any(|m| m.contains(key)), "{key} missing from {msgs:?}");
                }
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn partial_json_keeps_defaults_and_rejects_unknown_keys() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"variant": "qdla", "epochs": 3}"#).unwrap();
        let c = ExperimentConfig::load(&p).unwrap();
        assert_eq!(c.variant, Variant::Qdla);
        assert_eq!(c.epochs, 3);
        assert_eq!(c.train_count, 7000);

        std::fs::write(&p, "{\n  \"epochz\": 3\n}").unwrap();
        match ExperimentConfig::load(&p) {
            Err(HarnessError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
