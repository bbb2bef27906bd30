//! Revenue-maximizing auctions learned under a regret penalty, with an
//! optional hybrid quantum hidden layer, plus the classical baselines and
//! oracles used to audit them.
//!
//! * [`autodiff`]: reverse-mode tape, Adam, gradient checking.
//! * [`quantum`]: statevector simulator and the parameter-shift layer.
//! * [`auction`]: bid encoder, mechanism network, regret search, training.
//! * [`baseline`]: second-price and reserve-price auctions, brute-force oracles.

pub mod auction;
pub mod autodiff;
pub mod baseline;
pub mod error;
pub mod quantum;
pub mod rng;

pub use auction::{AuctionNet, BidMatrix, Mechanism, NetConfig, Outcome, Variant};
pub use autodiff::{Tape, Tensor};
pub use error::{Error, Result};
