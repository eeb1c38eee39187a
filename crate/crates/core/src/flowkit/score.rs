use ndarray::{Array2, ArrayView2};

use crate::error::{MeamError, Result};

use super::field::VectorField;
use super::schedule::BOUNDARY_GUARD;

/// Score of the flow marginal recovered from the velocity field,
/// `(t v - x) / (1 - t)`.
///
/// Blows up as `t -> 1`, so times within [`BOUNDARY_GUARD`] of 1 are rejected.
pub fn analytical_score(
    field: &impl VectorField,
    x: ArrayView2<f64>,
    t: f64,
    s: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    if !(0.0..1.0 - BOUNDARY_GUARD).contains(&t) {
        return Err(MeamError::Domain(format!(
            "analytical score is unstable near t = 1; need t in [0, {}), got {t}",
            1.0 - BOUNDARY_GUARD
        )));
    }
    let v = field.eval(x, t, s)?;
    Ok((v * t - x) / (1.0 - t))
}
