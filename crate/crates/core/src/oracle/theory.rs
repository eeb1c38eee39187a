use crate::error::{MeamError, Result};

use super::density::GridDensity;

/// Log-density floor applied before taking logs of tabulated densities.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// Prior weight, entropy and reward temperatures of the local objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltParams {
    pub lambda: f64,
    pub eta: f64,
    pub beta: f64,
}

impl TiltParams {
    pub fn new(lambda: f64, eta: f64, beta: f64) -> Result<Self> {
        for (name, v) in [("lambda", lambda), ("eta", eta), ("beta", beta)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MeamError::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let p = Self { lambda, eta, beta };
        let delta = p.delta();
        assert!(delta > 0.0 && delta < 1.0, "prior exponent {delta} outside (0, 1)");
        Ok(p)
    }

    /// Exponent on the prior, `lambda eta / (1 + lambda eta)`.
    pub fn delta(&self) -> f64 {
        let le = self.lambda * self.eta;
        le / (1.0 + le)
    }

    /// Effective reward temperature `beta (1 + lambda eta) / eta`.
    pub fn kappa(&self) -> f64 {
        self.beta * (1.0 + self.lambda * self.eta) / self.eta
    }

    /// Coefficient on `log pi_prev` in the optimality condition, `1/eta - 1 + lambda`.
    pub fn prev_coeff(&self) -> f64 {
        1.0 / self.eta - 1.0 + self.lambda
    }
}

fn check_inputs(mix: &GridDensity, q: &[f64]) -> Result<()> {
    if q.len() != mix.len() {
        return Err(MeamError::Usage(format!("Q has {} values for a {}-point grid", q.len(), mix.len())));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(MeamError::Domain("Q values must be finite".into()));
    }
    Ok(())
}

/// Stationary policy `pi* ~ pi_mix^delta exp(Q / kappa)`.
pub fn tilted_closed_form(mix: &GridDensity, q: &[f64], p: &TiltParams) -> Result<GridDensity> {
    check_inputs(mix, q)?;
    let (delta, kappa) = (p.delta(), p.kappa());
    let logs: Vec<f64> = mix
        .log_mass(DENSITY_FLOOR)
        .iter()
        .zip(q)
        .map(|(lm, qv)| delta * lm + qv / kappa)
        .collect();
    GridDensity::from_log(mix.grid().to_vec(), &logs)
}

/// One application of the optimality map:
/// `log pi' = Q/beta - (1/eta - 1 + lambda) log pi + lambda log pi_mix - C`.
fn md_map(pi: &GridDensity, mix: &GridDensity, q: &[f64], p: &TiltParams) -> Result<GridDensity> {
    let k = p.prev_coeff();
    let logs: Vec<f64> = pi
        .log_mass(DENSITY_FLOOR)
        .iter()
        .zip(mix.log_mass(DENSITY_FLOOR))
        .zip(q)
        .map(|((lp, lm), qv)| qv / p.beta - k * lp + p.lambda * lm)
        .collect();
    GridDensity::from_log(mix.grid().to_vec(), &logs)
}

fn log_gap(a: &GridDensity, b: &GridDensity) -> f64 {
    a.log_mass(DENSITY_FLOOR)
        .iter()
        .zip(b.log_mass(DENSITY_FLOOR))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Largest log-space change when `pi` is pushed through the optimality map.
/// Zero exactly at a stationary policy.
pub fn optimality_residual(pi: &GridDensity, mix: &GridDensity, q: &[f64], p: &TiltParams) -> Result<f64> {
    check_inputs(mix, q)?;
    Ok(log_gap(&md_map(pi, mix, q, p)?, pi))
}

fn damped_step(pi: &GridDensity, mapped: &GridDensity, d: f64) -> Result<GridDensity> {
    let logs: Vec<f64> = pi
        .log_mass(DENSITY_FLOOR)
        .iter()
        .zip(mapped.log_mass(DENSITY_FLOOR))
        .map(|(a, b)| (1.0 - d) * a + d * b)
        .collect();
    GridDensity::from_log(pi.grid().to_vec(), &logs)
}

/// Options shared by the fixed-point solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// Log-space averaging weight in `(0, 1]`; `None` picks a contraction-safe value.
    pub damping: Option<f64>,
    pub max_iters: usize,
    /// Stop when the largest log-space update falls below this.
    pub tol: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            damping: None,
            max_iters: 10_000,
            tol: 1e-13,
        }
    }
}

fn resolve_damping(opt: &FixedPointOptions, auto: f64) -> Result<f64> {
    let d = opt.damping.unwrap_or(auto);
    if !(d > 0.0 && d <= 1.0) {
        return Err(MeamError::Config(format!("damping must lie in (0, 1], got {d}")));
    }
    Ok(d)
}

fn iterate(
    start: GridDensity,
    d: f64,
    opt: &FixedPointOptions,
    map: impl Fn(&GridDensity) -> Result<GridDensity>,
) -> Result<(GridDensity, usize)> {
    let mut pi = start;
    let mut residual = f64::INFINITY;
    for it in 0..opt.max_iters {
        let mapped = map(&pi)?;
        residual = log_gap(&mapped, &pi);
        if residual < opt.tol {
            return Ok((pi, it));
        }
        pi = damped_step(&pi, &mapped, d)?;
    }
    Err(MeamError::Convergence {
        iterations: opt.max_iters,
        residual,
    })
}

/// Iterates the mirror-descent optimality condition to its fixed point.
///
/// The undamped map multiplies log-space errors by `-(1/eta - 1 + lambda)`;
/// the default damping `0.9 / (1 + 1/eta - 1 + lambda)` keeps the averaged map a
/// contraction with factor 0.1. Starts from `init` or from `pi_mix`.
/// Returns the density and the number of iterations used.
pub fn md_fixed_point(
    mix: &GridDensity,
    q: &[f64],
    p: &TiltParams,
    opt: &FixedPointOptions,
    init: Option<&GridDensity>,
) -> Result<(GridDensity, usize)> {
    check_inputs(mix, q)?;
    let d = resolve_damping(opt, (0.9 / (1.0 + p.prev_coeff())).min(1.0))?;
    let start = init.cloned().unwrap_or_else(|| mix.clone());
    iterate(start, d, opt, |pi| md_map(pi, mix, q, p))
}

/// Row-normalized Gaussian smoothing matrix on the grid, in trapezoid measure.
struct Smoother {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Smoother {
    fn new(density: &GridDensity, sigma: f64) -> Self {
        let grid = density.grid();
        let h = density.h();
        let n = grid.len();
        let reach = ((8.0 * sigma / h).ceil() as usize).min(n);
        let rows = (0..n)
            .map(|i| {
                let lo = i.saturating_sub(reach);
                let hi = (i + reach).min(n - 1);
                let mut row: Vec<(usize, f64)> = (lo..=hi)
                    .map(|j| {
                        let w = if j == 0 || j + 1 == n { 0.5 } else { 1.0 };
                        let dx = (grid[i] - grid[j]) / sigma;
                        (j, w * (-0.5 * dx * dx).exp())
                    })
                    .collect();
                let z: f64 = row.iter().map(|(_, k)| k).sum();
                for e in &mut row {
                    e.1 /= z;
                }
                row
            })
            .collect();
        Self { rows }
    }

    fn apply(&self, mass: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(j, k)| k * mass[j]).sum()).collect()
    }
}

/// Gaussian-smoothed density `pi * N(0, sigma^2)` on the grid. The kernel is
/// renormalized over the grid at each point, so no mass leaks through `+-1`.
pub fn smooth_density(pi: &GridDensity, sigma: f64) -> Result<GridDensity> {
    if !(sigma > 0.0) {
        return Err(MeamError::Domain(format!("smoothing width must be positive, got {sigma}")));
    }
    let sm = Smoother::new(pi, sigma);
    GridDensity::from_unnormalized(pi.grid().to_vec(), sm.apply(pi.mass()))
}

fn smoothed_map(pi: &GridDensity, mix: &GridDensity, q: &[f64], p: &TiltParams, sm: &Smoother) -> Result<GridDensity> {
    let inv = 1.0 / (p.lambda * p.eta);
    let smoothed = sm.apply(pi.mass());
    let logs: Vec<f64> = mix
        .log_mass(DENSITY_FLOOR)
        .iter()
        .zip(q)
        .zip(&smoothed)
        .map(|((lm, qv), s)| lm + qv / (p.lambda * p.beta) - inv * s.max(DENSITY_FLOOR).ln())
        .collect();
    GridDensity::from_log(mix.grid().to_vec(), &logs)
}

fn check_sigma(mix: &GridDensity, sigma_min: f64) -> Result<()> {
    if !(sigma_min > 0.0) {
        return Err(MeamError::Domain(format!("sigma_min must be positive, got {sigma_min}")));
    }
    if 2.0 * sigma_min < 5.0 * mix.h() {
        return Err(MeamError::Usage(format!(
            "grid too coarse: kernel width 2 sigma = {} covers fewer than 5 cells of {}",
            2.0 * sigma_min,
            mix.h()
        )));
    }
    Ok(())
}

/// Solves `pi ~ pi_mix exp(Q / (lambda beta)) (pi * N(0, sigma_min^2))^(-1/(lambda eta))`
/// by damped log-space iteration from `pi_mix`.
pub fn smoothed_fixed_point(
    mix: &GridDensity,
    q: &[f64],
    p: &TiltParams,
    sigma_min: f64,
    opt: &FixedPointOptions,
) -> Result<(GridDensity, usize)> {
    check_inputs(mix, q)?;
    check_sigma(mix, sigma_min)?;
    let l = 1.0 / (p.lambda * p.eta);
    let d = resolve_damping(opt, 2.0 / (2.0 + l))?;
    let sm = Smoother::new(mix, sigma_min);
    iterate(mix.clone(), d, opt, |pi| smoothed_map(pi, mix, q, p, &sm))
}

/// Log-space residual of the smoothed implicit equation at `pi`.
pub fn smoothed_residual(pi: &GridDensity, mix: &GridDensity, q: &[f64], p: &TiltParams, sigma_min: f64) -> Result<f64> {
    check_inputs(mix, q)?;
    check_sigma(mix, sigma_min)?;
    let sm = Smoother::new(mix, sigma_min);
    Ok(log_gap(&smoothed_map(pi, mix, q, p, &sm)?, pi))
}
