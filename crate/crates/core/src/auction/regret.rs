//! Best-response search against a mechanism and the resulting regret.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::types::{BidMatrix, Deviation, Mechanism};
use crate::baseline::{grid_best_responses, GridSpec};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Misreport search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MisreportConfig {
    /// Projected gradient-ascent steps per start point.
    pub steps: usize,
    pub step_size: f64,
    /// Also start from a uniform-random report, besides the truthful one.
    pub random_start: bool,
    /// Grid used for mechanisms without gradients.
    pub fallback_grid_step: f64,
}

impl Default for MisreportConfig {
    fn default() -> Self {
        Self {
            steps: 20,
            step_size: 0.1,
            random_start: true,
            fallback_grid_step: 0.05,
        }
    }
}

impl MisreportConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidInput("misreport steps must be >= 1".into()));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::InvalidInput(format!("misreport step size {}", self.step_size)));
        }
        GridSpec::new(self.fallback_grid_step, 1)?;
        Ok(())
    }
}

/// Where per-sample random start points come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleStreams {
    pub seed: u64,
    pub purpose: Purpose,
    pub epoch: u64,
}

impl SampleStreams {
    pub fn eval(seed: u64) -> Self {
        Self {
            seed,
            purpose: Purpose::EvalMisreport,
            epoch: 0,
        }
    }
}

/// Best response of every buyer for one value profile.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRegret {
    pub truthful_utility: Vec<f64>,
    pub best_utility: Vec<f64>,
    /// Best report found per buyer (`n x m`).
    pub misreports: Vec<Vec<f64>>,
}

impl SampleRegret {
    /// `max(0, best - truthful)` per buyer.
    pub fn gains(&self) -> Vec<f64> {
        self.best_utility
            .iter()
            .zip(&self.truthful_utility)
            .map(|(b, t)| (b - t).max(0.0))
            .collect()
    }
}

/// Batch-mean regret per buyer and the per-sample search results.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretEstimate {
    pub rgt: Vec<f64>,
    pub samples: Vec<SampleRegret>,
}

impl RegretEstimate {
    pub fn from_samples(n: usize, samples: Vec<SampleRegret>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("regret of an empty batch".into()));
        }
        let mut rgt = vec![0.0; n];
        for s in &samples {
            for (r, g) in rgt.iter_mut().zip(s.gains()) {
                *r += g;
            }
        }
        for r in &mut rgt {
            *r /= samples.len() as f64;
        }
        Ok(Self { rgt, samples })
    }
}

/// Best misreports for every buyer of every profile.
///
/// Differentiable mechanisms get projected gradient ascent on the deviator's
/// utility from the truthful report and (optionally) a random report; the
/// result is the best point visited, the truthful report included. Other
/// mechanisms fall back to an exhaustive grid.
///
/// `sample_ids[k]` selects the random stream of `values[k]`.
pub fn best_misreports(
    mech: &dyn Mechanism,
    values: &[BidMatrix],
    cfg: &MisreportConfig,
    streams: SampleStreams,
    sample_ids: &[u64],
) -> Result<Vec<SampleRegret>> {
    cfg.validate()?;
    if sample_ids.len() != values.len() {
        return Err(Error::InvalidInput("one sample id per profile required".into()));
    }
    for v in values {
        mech.check_profile(v)?;
    }
    let probe = mech.deviation_gradients(&[]);
    if probe.is_none() {
        let grid = GridSpec::new(cfg.fallback_grid_step, mech.n_items())?;
        return grid_best_responses(mech, values, &grid);
    }

    let (n, m) = (mech.n_buyers(), mech.n_items());
    let starts = if cfg.random_start { 2 } else { 1 };
    // point layout: sample-major, then buyer, then start
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(values.len() * n * starts);
    for (v, &id) in values.iter().zip(sample_ids) {
        let mut rng = rng::stream(streams.seed, streams.purpose, streams.epoch, id);
        for i in 0..n {
            points.push(v.row(i).to_vec());
            if cfg.random_start {
                points.push((0..m).map(|_| rng.gen::<f64>()).collect());
            }
        }
    }
    let owner = |p: usize| (p / (n * starts), (p / starts) % n);

    let mut results: Vec<SampleRegret> = values
        .iter()
        .map(|_| SampleRegret {
            truthful_utility: vec![0.0; n],
            best_utility: vec![f64::NEG_INFINITY; n],
            misreports: vec![vec![0.0; m]; n],
        })
        .collect();

    for step in 0..=cfg.steps {
        let deviations: Vec<Deviation> = points
            .iter()
            .enumerate()
            .map(|(p, x)| {
                let (s, i) = owner(p);
                Deviation {
                    reported: values[s].with_row(i, x),
                    buyer: i,
                    values: values[s].row(i).to_vec(),
                }
            })
            .collect();
        let evals = mech
            .deviation_gradients(&deviations)
            .expect("differentiable mechanism")?;
        for (p, (x, e)) in points.iter_mut().zip(evals).enumerate() {
            let (s, i) = owner(p);
            let res = &mut results[s];
            if step == 0 && p % starts == 0 {
                res.truthful_utility[i] = e.utility;
            }
            if e.utility > res.best_utility[i] {
                res.best_utility[i] = e.utility;
                res.misreports[i].copy_from_slice(x);
            }
            if step < cfg.steps {
                for (xj, gj) in x.iter_mut().zip(&e.gradient) {
                    *xj = (*xj + cfg.step_size * gj).clamp(0.0, 1.0);
                }
            }
        }
    }
    Ok(results)
}

/// Best misreport row for a single buyer.
pub fn misreport_ascent(
    mech: &dyn Mechanism,
    values: &BidMatrix,
    buyer: usize,
    steps: usize,
    step_size: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if buyer >= values.n_buyers() {
        return Err(Error::InvalidInput(format!("buyer {buyer} out of range")));
    }
    let cfg = MisreportConfig {
        steps,
        step_size,
        ..MisreportConfig::default()
    };
    let mut res = best_misreports(mech, std::slice::from_ref(values), &cfg, SampleStreams::eval(seed), &[0])?;
    Ok(res.remove(0).misreports.swap_remove(buyer))
}

/// Mean over profiles of each buyer's best-response gain.
pub fn empirical_regret(
    mech: &dyn Mechanism,
    values: &[BidMatrix],
    cfg: &MisreportConfig,
    seed: u64,
) -> Result<RegretEstimate> {
    let ids: Vec<u64> = (0..values.len() as u64).collect();
    let samples = best_misreports(mech, values, cfg, SampleStreams::eval(seed), &ids)?;
    RegretEstimate::from_samples(mech.n_buyers(), samples)
}
