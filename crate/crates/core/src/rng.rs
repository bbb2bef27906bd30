//! Seeded random streams.
//!
//! Every random draw in the crate comes from ChaCha20 keyed by a 64-bit seed
//! (expanded with `SeedableRng::seed_from_u64`) and a 64-bit stream id.
//! ChaCha is counter based, so any (seed, stream) pair can be reproduced
//! independently of the order in which other streams were consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub use rand_chacha::ChaCha20Rng as StreamRng;

/// Stream namespaces. The tag occupies the top byte of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Dataset = 1,
    Init = 2,
    Shuffle = 3,
    TrainMisreport = 4,
    EvalMisreport = 5,
    MonteCarlo = 6,
    Audit = 7,
}

/// Builds the stream id for `purpose`, a 24-bit `epoch` and a 32-bit `index`.
pub fn stream_id(purpose: Purpose, epoch: u64, index: u64) -> u64 {
    ((purpose as u64) << 56) | ((epoch & 0xff_ffff) << 32) | (index & 0xffff_ffff)
}

pub fn stream(seed: u64, purpose: Purpose, epoch: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream_id(purpose, epoch, index));
    rng
}
