use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Outcome of comparing reverse-mode gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
    pub max_rel_error: f64,
    pub compared: usize,
    /// Components skipped because the perturbation crossed a relu kink.
    pub skipped: usize,
}

/// Checks `backward` against `(f(p + h) - f(p - h)) / 2h` for every
/// component of every parameter.
///
/// `program` receives a fresh tape and one trainable leaf per parameter and
/// must return a scalar node. Components whose perturbation changes the sign
/// pattern of any relu input are excluded.
pub fn grad_check<F>(program: F, params: &[Tensor], h: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&h) {
        return Err(Error::InvalidInput(format!("step {h} outside [1e-7, 1e-3]")));
    }
    let eval = |ps: &[Tensor]| -> Result<(f64, Vec<bool>)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = program(&mut tape, &vars)?;
        Ok((tape.value(out).data()[0], tape.relu_pattern()))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = program(&mut tape, &vars)?;
    let base_pattern = tape.relu_pattern();
    let grads = tape.backward(out)?;

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        compared: 0,
        skipped: 0,
    };
    let mut work: Vec<Tensor> = params.to_vec();
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).expect("leaf gradient").clone();
        for idx in 0..params[k].len() {
            let orig = params[k].data()[idx];
            work[k].data_mut()[idx] = orig + h;
            let (fp, pp) = eval(&work)?;
            work[k].data_mut()[idx] = orig - h;
            let (fm, pm) = eval(&work)?;
            work[k].data_mut()[idx] = orig;
            if pp != base_pattern || pm != base_pattern {
                report.skipped += 1;
                continue;
            }
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic.data()[idx];
            let rel = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            report.max_rel_error = report.max_rel_error.max(rel);
            report.compared += 1;
        }
    }
    Ok(report)
}
