use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reported bids (or true values) of `n` buyers for `m` items, in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidMatrix {
    n: usize,
    m: usize,
    values: Vec<f64>,
}

impl BidMatrix {
    pub fn new(n: usize, m: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidInput(format!("bid matrix must be non-empty, got {n}x{m}")));
        }
        if values.len() != n * m {
            return Err(Error::Shape {
                op: "bid_matrix",
                detail: format!("{} values for {n}x{m}", values.len()),
            });
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("bid {bad} outside [0, 1]")));
        }
        Ok(Self { n, m, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Shape {
                op: "bid_matrix",
                detail: "ragged rows".into(),
            });
        }
        Self::new(n, m, rows.concat())
    }

    /// I.i.d. `U[0, 1)` entries, drawn row-major.
    pub fn random(n: usize, m: usize, rng: &mut impl Rng) -> Self {
        let values = (0..n * m).map(|_| rng.gen::<f64>()).collect();
        Self { n, m, values }
    }

    pub fn n_buyers(&self) -> usize {
        self.n
    }

    pub fn n_items(&self) -> usize {
        self.m
    }

    pub fn get(&self, buyer: usize, item: usize) -> f64 {
        self.values[buyer * self.m + item]
    }

    pub fn row(&self, buyer: usize) -> &[f64] {
        &self.values[buyer * self.m..(buyer + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.m).map(<[f64]>::to_vec).collect()
    }

    /// Copy with `buyer`'s row replaced by `row`, clamped into `[0, 1]`.
    pub fn with_row(&self, buyer: usize, row: &[f64]) -> Self {
        assert_eq!(row.len(), self.m, "misreport row length");
        let mut out = self.clone();
        for (dst, &v) in out.values[buyer * self.m..(buyer + 1) * self.m].iter_mut().zip(row) {
            *dst = v.clamp(0.0, 1.0);
        }
        out
    }
}

/// `(n + 1) x m` allocation probabilities; row `n` is the unsold slot.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationMatrix {
    n: usize,
    m: usize,
    z: Vec<f64>,
}

impl AllocationMatrix {
    pub fn new(n: usize, m: usize, z: Vec<f64>) -> Result<Self> {
        if z.len() != (n + 1) * m {
            return Err(Error::Shape {
                op: "allocation",
                detail: format!("{} entries for ({n}+1)x{m}", z.len()),
            });
        }
        Ok(Self { n, m, z })
    }

    /// Nothing sold.
    pub fn unsold(n: usize, m: usize) -> Self {
        let mut z = vec![0.0; (n + 1) * m];
        z[n * m..].fill(1.0);
        Self { n, m, z }
    }

    pub fn n_buyers(&self) -> usize {
        self.n
    }

    pub fn n_items(&self) -> usize {
        self.m
    }

    pub fn get(&self, row: usize, item: usize) -> f64 {
        self.z[row * self.m + item]
    }

    pub fn set(&mut self, row: usize, item: usize, p: f64) {
        self.z[row * self.m + item] = p;
    }

    pub fn unsold_mass(&self, item: usize) -> f64 {
        self.get(self.n, item)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.z
    }

    /// Largest `|column sum - 1|`.
    pub fn column_sum_error(&self) -> f64 {
        (0..self.m)
            .map(|j| ((0..=self.n).map(|i| self.get(i, j)).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `sum_j z[buyer][j] * values[buyer][j]`.
    pub fn allocated_value(&self, values: &BidMatrix, buyer: usize) -> f64 {
        (0..self.m).map(|j| self.get(buyer, j) * values.get(buyer, j)).sum()
    }
}

/// Per-buyer payments.
#[derive(Debug, Clone, PartialEq)]
pub struct PaymentVector(pub Vec<f64>);

impl PaymentVector {
    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Result of running a mechanism on one bid profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub allocation: AllocationMatrix,
    pub payments: PaymentVector,
}

/// `u_i = sum_j z[i][j] v[i][j] - p_i` for additive buyers.
pub fn buyer_utility(values: &BidMatrix, outcome: &Outcome, buyer: usize) -> f64 {
    outcome.allocation.allocated_value(values, buyer) - outcome.payments.0[buyer]
}

/// Mean total payment over a batch of outcomes.
pub fn empirical_revenue(outcomes: &[Outcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::InvalidInput("revenue of an empty batch".into()));
    }
    Ok(outcomes.iter().map(|o| o.payments.total()).sum::<f64>() / outcomes.len() as f64)
}

/// A unilateral deviation: `buyer` reports `reported` (other rows truthful)
/// while its true values are `values`.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation {
    pub reported: BidMatrix,
    pub buyer: usize,
    pub values: Vec<f64>,
}

/// Utility at a deviation together with its gradient with respect to the
/// deviating buyer's reported row.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationEval {
    pub utility: f64,
    pub gradient: Vec<f64>,
}

/// A direct-revelation auction: bids in, allocation and payments out.
pub trait Mechanism {
    fn name(&self) -> &str;

    fn n_buyers(&self) -> usize;

    fn n_items(&self) -> usize;

    fn run_batch(&self, profiles: &[BidMatrix]) -> Result<Vec<Outcome>>;

    fn run(&self, profile: &BidMatrix) -> Result<Outcome> {
        Ok(self.run_batch(std::slice::from_ref(profile))?.remove(0))
    }

    /// Gradient of each deviator's utility with respect to its reported row.
    /// `None` for mechanisms that are not differentiable.
    fn deviation_gradients(&self, _deviations: &[Deviation]) -> Option<Result<Vec<DeviationEval>>> {
        None
    }

    fn check_profile(&self, profile: &BidMatrix) -> Result<()> {
        if profile.n_buyers() != self.n_buyers() || profile.n_items() != self.n_items() {
            return Err(Error::Shape {
                op: "mechanism",
                detail: format!(
                    "{} expects {}x{} bids, got {}x{}",
                    self.name(),
                    self.n_buyers(),
                    self.n_items(),
                    profile.n_buyers(),
                    profile.n_items()
                ),
            });
        }
        Ok(())
    }
}

/// Utility of the deviator for each deviation, via `run_batch`.
pub fn deviation_utilities(mech: &dyn Mechanism, deviations: &[Deviation]) -> Result<Vec<f64>> {
    let profiles: Vec<BidMatrix> = deviations.iter().map(|d| d.reported.clone()).collect();
    let outcomes = mech.run_batch(&profiles)?;
    Ok(deviations
        .iter()
        .zip(&outcomes)
        .map(|(d, o)| {
            let value: f64 = (0..d.values.len()).map(|j| o.allocation.get(d.buyer, j) * d.values[j]).sum();
            value - o.payments.0[d.buyer]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome_all_to(buyer: usize, n: usize, m: usize, payments: Vec<f64>) -> Outcome {
        let mut z = AllocationMatrix::new(n, m, vec![0.0; (n + 1) * m]).unwrap();
        for j in 0..m {
            z.set(buyer, j, 1.0);
        }
        Outcome {
            allocation: z,
            payments: PaymentVector(payments),
        }
    }

    #[test]
    fn utility_examples() {
        let v = BidMatrix::from_rows(&[vec![0.2, 0.7], vec![0.5, 0.1]]).unwrap();
        let o = outcome_all_to(0, 2, 2, vec![0.0, 0.0]);
        assert!((buyer_utility(&v, &o, 0) - 0.9).abs() < 1e-15);
        assert_eq!(buyer_utility(&v, &o, 1), 0.0);
    }

    #[test]
    fn revenue_examples() {
        let o = Outcome {
            allocation: AllocationMatrix::unsold(3, 1),
            payments: PaymentVector(vec![0.2, 0.3, 0.1]),
        };
        assert!((empirical_revenue(std::slice::from_ref(&o)).unwrap() - 0.6).abs() < 1e-15);
        let zero = Outcome {
            allocation: AllocationMatrix::unsold(3, 1),
            payments: PaymentVector(vec![0.0; 3]),
        };
        assert_eq!(empirical_revenue(&[zero]).unwrap(), 0.0);
        assert!(empirical_revenue(&[]).is_err());
    }

    #[test]
    fn bid_matrix_validation_and_clamping() {
        assert!(BidMatrix::new(1, 2, vec![0.5, 1.2]).is_err());
        assert!(BidMatrix::new(1, 2, vec![0.5, f64::NAN]).is_err());
        assert!(BidMatrix::new(0, 2, vec![]).is_err());
        let b = BidMatrix::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        let d = b.with_row(1, &[-0.5, 1.5]);
        assert_eq!(d.row(1), &[0.0, 1.0]);
        assert_eq!(d.row(0), b.row(0));
    }

    #[test]
    fn unsold_allocation_is_column_stochastic() {
        let z = AllocationMatrix::unsold(3, 2);
        assert_eq!(z.column_sum_error(), 0.0);
        assert_eq!(z.unsold_mass(1), 1.0);
    }
}
