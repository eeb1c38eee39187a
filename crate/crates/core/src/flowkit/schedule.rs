use crate::error::{shape_err, MeamError, Result};

/// Default lower clamp on `t` for the `1/t` drift and `g_t` near `t = 0`.
pub const DEFAULT_TIME_CLAMP: f64 = 0.05;

/// Distance from `t = 1` inside which [`super::analytical_score`] refuses to evaluate.
pub const BOUNDARY_GUARD: f64 = 1e-2;

/// Memoryless diffusion coefficient `g_t = sqrt(2 (1 - t) / t)`.
pub fn noise_schedule_g(t: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(MeamError::Domain(format!("g_t needs t in (0, 1], got {t}")));
    }
    Ok((2.0 * (1.0 - t) / t).sqrt())
}

pub fn clamp_time(t: f64, time_clamp: f64) -> f64 {
    t.max(time_clamp)
}

/// One draw from the independent linear path between noise and an action.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub x0: Vec<f64>,
    pub x1: Vec<f64>,
    pub t: f64,
    /// `(1 - t) x0 + t x1`.
    pub x_t: Vec<f64>,
    /// Conditional velocity `x1 - x0`.
    pub u_t: Vec<f64>,
}

pub fn sample_linear_path(x0: &[f64], x1: &[f64], t: f64) -> Result<PathSample> {
    if x0.len() != x1.len() {
        return Err(shape_err("linear path endpoints", x0.len(), x1.len()));
    }
    let x_t = x0.iter().zip(x1).map(|(a, b)| (1.0 - t) * a + t * b).collect();
    let u_t = x0.iter().zip(x1).map(|(a, b)| b - a).collect();
    Ok(PathSample {
        x0: x0.to_vec(),
        x1: x1.to_vec(),
        t,
        x_t,
        u_t,
    })
}
