//! Time-averaged relative error between nodal trajectories.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Reference norms below this are treated as zero states and skipped.
pub const ZERO_REFERENCE_NORM: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorValue {
    pub value: f64,
    /// Set when the reference vanished at every time and the absolute error
    /// was averaged instead.
    pub absolute: bool,
    /// Number of time samples that entered the average.
    pub samples: usize,
}

/// `(1/n) Σ_n ‖u_model(t_n) − u_ref(t_n)‖₂ / ‖u_ref(t_n)‖₂` over the times
/// where the reference is nonzero. Columns are time samples.
pub fn error_metric(
    model: &DMatrix<f64>,
    model_times: &[f64],
    reference: &DMatrix<f64>,
    reference_times: &[f64],
) -> Result<ErrorValue> {
    if model_times.len() != reference_times.len()
        || model_times
            .iter()
            .zip(reference_times)
            .any(|(a, b)| (a - b).abs() > 1e-9 * b.abs().max(1.0))
    {
        return Err(Error::InvalidInput("model and reference time grids differ".into()));
    }
    if model.shape() != reference.shape() || model.ncols() != model_times.len() {
        return Err(Error::DimensionMismatch {
            context: "error metric trajectory shape",
            expected: reference.nrows() * reference.ncols(),
            got: model.nrows() * model.ncols(),
        });
    }

    let mut sum = 0.0;
    let mut samples = 0;
    for j in 0..reference.ncols() {
        let r = reference.column(j).norm();
        if r < ZERO_REFERENCE_NORM {
            continue;
        }
        sum += (model.column(j) - reference.column(j)).norm() / r;
        samples += 1;
    }
    let (value, absolute, samples) = if samples > 0 {
        (sum / samples as f64, false, samples)
    } else {
        let n = reference.ncols();
        let total: f64 = (0..n)
            .map(|j| (model.column(j) - reference.column(j)).norm())
            .sum();
        (if n > 0 { total / n as f64 } else { 0.0 }, true, n)
    };
    let value = if value.is_nan() { f64::INFINITY } else { value };
    Ok(ErrorValue {
        value,
        absolute,
        samples,
    })
}
