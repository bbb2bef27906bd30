//! Classical item-wise auctions and brute-force audit oracles.

mod mechanisms;
mod oracle;

pub use mechanisms::{
    myerson_itemwise, spa, FirstPrice, FreeAllocation, Myerson, SecondPrice, UNIFORM_RESERVE,
};
pub use oracle::{
    dsic_audit, grid_best_responses, regret_grid_oracle, revenue_oracle_mc, AuditReport, GridSpec,
    RevenueEstimate, AUDIT_GRID_STEP, AUDIT_TOLERANCE, MAX_GRID_POINTS,
};
