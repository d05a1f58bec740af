use serde::Serialize;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// (parameter index, flat entry index) of the worst entry.
    pub worst_entry: (usize, usize),
    pub entries_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares analytic gradients against central differences for every
/// entry of every parameter.
///
/// `f` maps a parameter list to `(loss, gradients)`; gradients must have
/// the shapes of the parameters. The error for one entry is
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn gradient_check<F>(mut f: F, params: &[Tensor], tolerance: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor]) -> Result<(f64, Vec<Tensor>)>,
{
    let (loss, analytic) = f(params)?;
    if !loss.is_finite() {
        return Err(Error::NumericalInstability(format!("loss is {loss}")));
    }
    if analytic.len() != params.len() {
        return Err(Error::shape("gradient_check", &[params.len()], &[analytic.len()]));
    }

    let mut work = params.to_vec();
    let mut worst = (0.0f64, (0, 0));
    let mut count = 0;
    for pi in 0..params.len() {
        if analytic[pi].shape() != params[pi].shape() {
            return Err(Error::shape("gradient_check", params[pi].shape(), analytic[pi].shape()));
        }
        for ei in 0..params[pi].len() {
            let orig = params[pi].data()[ei];
            work[pi].data_mut()[ei] = orig + FD_STEP;
            let (plus, _) = f(&work)?;
            work[pi].data_mut()[ei] = orig - FD_STEP;
            let (minus, _) = f(&work)?;
            work[pi].data_mut()[ei] = orig;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[pi].data()[ei];
            if !numeric.is_finite() || !a.is_finite() {
                return Err(Error::NumericalInstability(format!(
                    "parameter {pi} entry {ei}: analytic {a}, numeric {numeric}"
                )));
            }
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if err > worst.0 {
                worst = (err, (pi, ei));
            }
            count += 1;
        }
    }
    Ok(GradCheckReport {
        max_relative_error: worst.0,
        worst_entry: worst.1,
        entries_checked: count,
        tolerance,
        passed: worst.0 < tolerance,
    })
}
