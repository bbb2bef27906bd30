//! Learned auction mechanisms, their regret, and training.

mod checkpoint;
mod net;
mod regret;
mod train;
mod types;

pub use checkpoint::{Checkpoint, MechanismKind, ParamRecord, CHECKPOINT_VERSION};
pub use net::{AuctionNet, NetConfig, NetOutput, Variant, MAX_AGENTS};
pub use regret::{
    best_misreports, empirical_regret, misreport_ascent, MisreportConfig, RegretEstimate, SampleRegret,
    SampleStreams,
};
pub use train::{
    augmented_loss, evaluate, loss_gradients, loss_on_tape, train, training_loss, EpochMetrics, EvalSummary,
    LagrangianState, LossBreakdown, LossVars, TrainConfig, TrainOutcome, IR_TOLERANCE,
};
pub use types::{
    buyer_utility, deviation_utilities, empirical_revenue, AllocationMatrix, BidMatrix, Deviation, DeviationEval,
    Mechanism, Outcome, PaymentVector,
};
