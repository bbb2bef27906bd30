use crate::auction::{AllocationMatrix, BidMatrix, Mechanism, Outcome, PaymentVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pricing {
    SecondPrice,
    FirstPrice,
}

/// Independent single-item auctions. The highest bid wins (ties go to the
/// lowest buyer index) provided it reaches `reserve`.
fn itemwise(bids: &BidMatrix, reserve: f64, pricing: Pricing) -> Outcome {
    let (n, m) = (bids.n_buyers(), bids.n_items());
    let mut z = AllocationMatrix::new(n, m, vec![0.0; (n + 1) * m]).expect("shape");
    let mut pay = vec![0.0; n];
    for j in 0..m {
        let mut winner = 0;
        for i in 1..n {
            if bids.get(i, j) > bids.get(winner, j) {
                winner = i;
            }
        }
        let top = bids.get(winner, j);
        if top < reserve {
            z.set(n, j, 1.0);
            continue;
        }
        let second = (0..n)
            .filter(|&i| i != winner)
            .map(|i| bids.get(i, j))
            .fold(0.0, f64::max);
        z.set(winner, j, 1.0);
        pay[winner] += match pricing {
            Pricing::SecondPrice => second.max(reserve),
            Pricing::FirstPrice => top,
        };
    }
    Outcome {
        allocation: z,
        payments: PaymentVector(pay),
    }
}

macro_rules! batch_impl {
    () => {
        fn n_buyers(&self) -> usize {
            self.n
        }

        fn n_items(&self) -> usize {
            self.m
        }

        fn run_batch(&self, profiles: &[BidMatrix]) -> Result<Vec<Outcome>> {
            profiles
                .iter()
                .map(|p| {
                    self.check_profile(p)?;
                    Ok(self.apply(p))
                })
                .collect()
        }
    };
}

/// Item-wise second-price auction without reserve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SecondPrice {
    n: usize,
    m: usize,
}

impl SecondPrice {
    pub fn new(n: usize, m: usize) -> Self {
        Self { n, m }
    }

    fn apply(&self, bids: &BidMatrix) -> Outcome {
        itemwise(bids, 0.0, Pricing::SecondPrice)
    }
}

impl Mechanism for SecondPrice {
    fn name(&self) -> &str {
        "spa"
    }
    batch_impl!();
}

/// Item-wise second-price auction with a reserve price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Myerson {
    n: usize,
    m: usize,
    reserve: f64,
}

/// Revenue-optimal reserve for `U[0, 1]` values: the root of `2v - 1`.
pub const UNIFORM_RESERVE: f64 = 0.5;

impl Myerson {
    pub fn new(n: usize, m: usize, reserve: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&reserve) {
            return Err(Error::InvalidInput(format!("reserve {reserve} outside [0, 1]")));
        }
        Ok(Self { n, m, reserve })
    }

    pub fn uniform(n: usize, m: usize) -> Self {
        Self {
            n,
            m,
            reserve: UNIFORM_RESERVE,
        }
    }

    pub fn reserve(&self) -> f64 {
        self.reserve
    }

    fn apply(&self, bids: &BidMatrix) -> Outcome {
        itemwise(bids, self.reserve, Pricing::SecondPrice)
    }
}

impl Mechanism for Myerson {
    fn name(&self) -> &str {
        "myerson"
    }
    batch_impl!();
}

/// Item-wise first-price auction; not truthful, used to exercise audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FirstPrice {
    n: usize,
    m: usize,
}

impl FirstPrice {
    pub fn new(n: usize, m: usize) -> Self {
        Self { n, m }
    }

    fn apply(&self, bids: &BidMatrix) -> Outcome {
        itemwise(bids, 0.0, Pricing::FirstPrice)
    }
}

impl Mechanism for FirstPrice {
    fn name(&self) -> &str {
        "first-price"
    }
    batch_impl!();
}

/// Gives every item to the highest bidder for free.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreeAllocation {
    n: usize,
    m: usize,
}

impl FreeAllocation {
    pub fn new(n: usize, m: usize) -> Self {
        Self { n, m }
    }

    fn apply(&self, bids: &BidMatrix) -> Outcome {
        let mut o = itemwise(bids, 0.0, Pricing::SecondPrice);
        o.payments.0.fill(0.0);
        o
    }
}

impl Mechanism for FreeAllocation {
    fn name(&self) -> &str {
        "free"
    }
    batch_impl!();
}

pub fn spa(bids: &BidMatrix) -> Outcome {
    itemwise(bids, 0.0, Pricing::SecondPrice)
}

pub fn myerson_itemwise(bids: &BidMatrix, reserve: f64) -> Result<Outcome> {
    Myerson::new(bids.n_buyers(), bids.n_items(), reserve)?;
    Ok(itemwise(bids, reserve, Pricing::SecondPrice))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(bids: &[f64]) -> BidMatrix {
        BidMatrix::new(bids.len(), 1, bids.to_vec()).unwrap()
    }

    #[test]
    fn second_price_single_item() {
        let o = spa(&col(&[0.9, 0.5, 0.2]));
        assert_eq!(o.allocation.get(0, 0), 1.0);
        assert_eq!(o.payments.0, vec![0.5, 0.0, 0.0]);
        assert_eq!(o.allocation.unsold_mass(0), 0.0);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let o = spa(&col(&[0.5, 0.5, 0.1]));
        assert_eq!(o.allocation.get(0, 0), 1.0);
        assert_eq!(o.allocation.get(1, 0), 0.0);
        assert_eq!(o.payments.0, vec![0.5, 0.0, 0.0]);
    }

    #[test]
    fn reserve_price_rules() {
        let o = myerson_itemwise(&col(&[0.4, 0.3]), 0.5).unwrap();
        assert_eq!(o.allocation.unsold_mass(0), 1.0);
        assert_eq!(o.payments.0, vec![0.0, 0.0]);

        let o = myerson_itemwise(&col(&[0.9, 0.3]), 0.5).unwrap();
        assert_eq!(o.payments.0, vec![0.5, 0.0]);

        let o = myerson_itemwise(&col(&[0.9, 0.7]), 0.5).unwrap();
        assert_eq!(o.payments.0, vec![0.7, 0.0]);

        assert!(myerson_itemwise(&col(&[0.9, 0.7]), 1.5).is_err());
        assert_eq!(Myerson::uniform(2, 1).reserve(), 0.5);
    }

    #[test]
    fn first_price_charges_own_bid() {
        let o = FirstPrice::new(3, 1).run(&col(&[0.9, 0.5, 0.2])).unwrap();
        assert_eq!(o.payments.0, vec![0.9, 0.0, 0.0]);
    }

    #[test]
    fn multi_item_payments_add_up() {
        let b = BidMatrix::from_rows(&[vec![0.9, 0.1], vec![0.5, 0.6], vec![0.2, 0.3]]).unwrap();
        let o = spa(&b);
        assert_eq!(o.payments.0, vec![0.5, 0.3, 0.0]);
        assert_eq!(o.allocation.column_sum_error(), 0.0);
    }

    #[test]
    fn wrong_shape_is_rejected() {
        assert!(SecondPrice::new(2, 2).run(&col(&[0.1, 0.2])).is_err());
    }
}
