//! Brute-force and Monte-Carlo yardsticks for auditing mechanisms.

use crate::auction::{deviation_utilities, BidMatrix, Deviation, Mechanism, SampleRegret};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Largest misreport grid the oracles will enumerate.
pub const MAX_GRID_POINTS: u128 = 10_000_000;

/// The misreport grid `{0, step, 2 step, ..., 1}^dims`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    divisions: usize,
    dims: usize,
}

impl GridSpec {
    /// `step` must divide 1 exactly (0.05, 0.1, 0.25, 1.0, ...).
    pub fn new(step: f64, dims: usize) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::InvalidInput(format!("grid step {step} outside (0, 1]")));
        }
        let divisions = (1.0 / step).round();
        if (divisions * step - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("grid step {step} does not divide 1")));
        }
        if dims == 0 {
            return Err(Error::InvalidInput("grid needs at least one dimension".into()));
        }
        let spec = Self {
            divisions: divisions as usize,
            dims,
        };
        let points = spec.point_count();
        if points > MAX_GRID_POINTS {
            return Err(Error::GridTooLarge {
                points,
                limit: MAX_GRID_POINTS,
            });
        }
        Ok(spec)
    }

    pub fn step(&self) -> f64 {
        1.0 / self.divisions as f64
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn point_count(&self) -> u128 {
        (self.divisions as u128 + 1).saturating_pow(self.dims as u32)
    }

    /// Coordinates of the `k`-th point, first axis varying slowest.
    pub fn point(&self, mut k: usize) -> Vec<f64> {
        let base = self.divisions + 1;
        let mut out = vec![0.0; self.dims];
        for slot in out.iter_mut().rev() {
            *slot = (k % base) as f64 / self.divisions as f64;
            k /= base;
        }
        out
    }

    pub fn points(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.point_count() as usize).map(|k| self.point(k))
    }
}

const DEVIATION_CHUNK: usize = 4096;

/// Exhaustive best responses over the grid, truthful report included.
pub fn grid_best_responses(mech: &dyn Mechanism, values: &[BidMatrix], grid: &GridSpec) -> Result<Vec<SampleRegret>> {
    let (n, m) = (mech.n_buyers(), mech.n_items());
    if grid.dims() != m {
        return Err(Error::Shape {
            op: "grid_oracle",
            detail: format!("{}-dimensional grid for {m} items", grid.dims()),
        });
    }
    let points: Vec<Vec<f64>> = grid.points().collect();
    let mut out = Vec::with_capacity(values.len());
    for v in values {
        mech.check_profile(v)?;
        let truthful: Vec<Deviation> = (0..n)
            .map(|i| Deviation {
                reported: v.clone(),
                buyer: i,
                values: v.row(i).to_vec(),
            })
            .collect();
        let truthful_utility = deviation_utilities(mech, &truthful)?;
        let mut best_utility = truthful_utility.clone();
        let mut misreports: Vec<Vec<f64>> = (0..n).map(|i| v.row(i).to_vec()).collect();
        for i in 0..n {
            for chunk in points.chunks(DEVIATION_CHUNK) {
                let devs: Vec<Deviation> = chunk
                    .iter()
                    .map(|x| Deviation {
                        reported: v.with_row(i, x),
                        buyer: i,
                        values: v.row(i).to_vec(),
                    })
                    .collect();
                for (x, u) in chunk.iter().zip(deviation_utilities(mech, &devs)?) {
                    if u > best_utility[i] {
                        best_utility[i] = u;
                        misreports[i].clone_from(x);
                    }
                }
            }
        }
        out.push(SampleRegret {
            truthful_utility,
            best_utility,
            misreports,
        });
    }
    Ok(out)
}

/// Per-buyer regret at one value profile: the best grid gain, clamped at 0.
pub fn regret_grid_oracle(mech: &dyn Mechanism, values: &BidMatrix, grid: &GridSpec) -> Result<Vec<f64>> {
    Ok(grid_best_responses(mech, std::slice::from_ref(values), grid)?
        .remove(0)
        .gains())
}

/// Monte-Carlo revenue under truthful bidding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RevenueEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Mean total payment over i.i.d. `U[0, 1)` value profiles.
pub fn revenue_oracle_mc(mech: &dyn Mechanism, samples: usize, seed: u64) -> Result<RevenueEstimate> {
    if samples == 0 {
        return Err(Error::InvalidInput("Monte-Carlo needs at least one sample".into()));
    }
    let (n, m) = (mech.n_buyers(), mech.n_items());
    let mut rng = rng::stream(seed, Purpose::MonteCarlo, 0, 0);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut remaining = samples;
    while remaining > 0 {
        let k = remaining.min(DEVIATION_CHUNK);
        let profiles: Vec<BidMatrix> = (0..k).map(|_| BidMatrix::random(n, m, &mut rng)).collect();
        for o in mech.run_batch(&profiles)? {
            let r = o.payments.total();
            sum += r;
            sum_sq += r * r;
        }
        remaining -= k;
    }
    let count = samples as f64;
    let mean = sum / count;
    let var = if samples > 1 {
        ((sum_sq - count * mean * mean) / (count - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(RevenueEstimate {
        mean,
        std_error: (var / count).sqrt(),
        samples,
    })
}

/// Result of a truthfulness audit.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub passed: bool,
    /// Largest utility gain any buyer obtained from a grid misreport.
    pub worst_violation: f64,
    pub worst_profile: Option<BidMatrix>,
    pub trials: usize,
}

/// Grid step used by [`dsic_audit`].
pub const AUDIT_GRID_STEP: f64 = 0.05;

/// Tolerance below which a gain counts as no violation.
pub const AUDIT_TOLERANCE: f64 = 1e-12;

/// Searches `trials` random profiles for profitable grid misreports.
pub fn dsic_audit(mech: &dyn Mechanism, trials: usize, seed: u64) -> Result<AuditReport> {
    if trials == 0 {
        return Err(Error::InvalidInput("audit needs at least one trial".into()));
    }
    let (n, m) = (mech.n_buyers(), mech.n_items());
    let grid = GridSpec::new(AUDIT_GRID_STEP, m)?;
    let mut report = AuditReport {
        passed: true,
        worst_violation: 0.0,
        worst_profile: None,
        trials,
    };
    for t in 0..trials {
        let mut rng = rng::stream(seed, Purpose::Audit, 0, t as u64);
        let v = BidMatrix::random(n, m, &mut rng);
        let gain = regret_grid_oracle(mech, &v, &grid)?.into_iter().fold(0.0, f64::max);
        if gain > report.worst_violation {
            report.worst_violation = gain;
            report.worst_profile = Some(v);
        }
    }
    report.passed = report.worst_violation <= AUDIT_TOLERANCE;
    Ok(report)
}
