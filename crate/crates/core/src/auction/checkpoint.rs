use serde::{Deserialize, Serialize};

use super::net::{AuctionNet, NetConfig, Variant};
use super::types::Mechanism;
use crate::autodiff::Tensor;
use crate::baseline::{Myerson, SecondPrice};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: &str = "qauction-ckpt-1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismKind {
    Dla,
    Qdla,
    Spa,
    Myerson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// A serialized mechanism: learned weights, or a baseline marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: String,
    pub mechanism: MechanismKind,
    pub n_buyers: usize,
    pub n_items: usize,
    pub seed: u64,
    pub epoch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<NetConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reserve: Option<f64>,
    /// Echo of the experiment configuration that produced the checkpoint.
    #[serde(default)]
    pub config: serde_json::Value,
    #[serde(default)]
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn from_net(net: &AuctionNet, seed: u64, epoch: usize, config: serde_json::Value) -> Self {
        let cfg = net.config().clone();
        Self {
            version: CHECKPOINT_VERSION.into(),
            mechanism: match cfg.variant {
                Variant::Dla => MechanismKind::Dla,
                Variant::Qdla => MechanismKind::Qdla,
            },
            n_buyers: cfg.n_buyers,
            n_items: cfg.n_items,
            seed,
            epoch,
            net: Some(cfg),
            reserve: None,
            config,
            params: net
                .param_names()
                .iter()
                .zip(net.params())
                .map(|(name, t)| ParamRecord {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Pseudo-checkpoint standing for the item-wise second-price auction.
    pub fn spa(n_buyers: usize, n_items: usize) -> Self {
        Self::baseline(MechanismKind::Spa, n_buyers, n_items, None)
    }

    pub fn myerson(n_buyers: usize, n_items: usize, reserve: f64) -> Self {
        Self::baseline(MechanismKind::Myerson, n_buyers, n_items, Some(reserve))
    }

    fn baseline(kind: MechanismKind, n_buyers: usize, n_items: usize, reserve: Option<f64>) -> Self {
        Self {
            version: CHECKPOINT_VERSION.into(),
            mechanism: kind,
            n_buyers,
            n_items,
            seed: 0,
            epoch: 0,
            net: None,
            reserve,
            config: serde_json::Value::Null,
            params: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Self = serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {:?}, expected {CHECKPOINT_VERSION:?}",
                ckpt.version
            )));
        }
        Ok(ckpt)
    }

    pub fn network(&self) -> Result<AuctionNet> {
        let cfg = self
            .net
            .clone()
            .ok_or_else(|| Error::Checkpoint(format!("{:?} checkpoint has no network", self.mechanism)))?;
        if cfg.n_buyers != self.n_buyers || cfg.n_items != self.n_items {
            return Err(Error::Checkpoint("network shape disagrees with checkpoint header".into()));
        }
        let named = self
            .params
            .iter()
            .map(|p| Ok((p.name.clone(), Tensor::new(p.shape.clone(), p.values.clone())?)))
            .collect::<Result<Vec<_>>>()?;
        AuctionNet::from_params(cfg, named)
    }

    pub fn mechanism(&self) -> Result<Box<dyn Mechanism>> {
        Ok(match self.mechanism {
            MechanismKind::Dla | MechanismKind::Qdla => Box::new(self.network()?),
            MechanismKind::Spa => Box::new(SecondPrice::new(self.n_buyers, self.n_items)),
            MechanismKind::Myerson => Box::new(Myerson::new(
                self.n_buyers,
                self.n_items,
                self.reserve.unwrap_or(crate::baseline::UNIFORM_RESERVE),
            )?),
        })
    }
}
