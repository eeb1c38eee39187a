use rand::Rng;

use crate::error::Result;
use crate::rng::seeded;

use super::density::{tv_distance, GridDensity};
use super::theory::{
    md_fixed_point, optimality_residual, smoothed_fixed_point, smoothed_residual, tilted_closed_form,
    FixedPointOptions, TiltParams,
};
use super::{knn_entropy, prop1_gradient_identity};

/// One line of the theory verification table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    /// Human-readable pass condition, e.g. `< 1e-12`.
    pub condition: String,
    pub passed: bool,
}

impl CheckResult {
    fn below(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            condition: format!("< {bound:e}"),
            passed: value < bound,
        }
    }

    fn near(name: &str, value: f64, target: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            condition: format!("{target} +- {tol}"),
            passed: (value - target).abs() <= tol,
        }
    }
}

/// Truncated Gaussian prior and a bump-shaped critic used by several checks.
pub(crate) fn reference_problem(points: usize) -> Result<(GridDensity, Vec<f64>)> {
    let mix = GridDensity::from_fn(points, |x| (-0.5 * (x / 0.3).powi(2)).exp())?;
    let q = mix.grid().iter().map(|&x| (-0.5 * ((x - 0.6) / 0.1).powi(2)).exp()).collect();
    Ok((mix, q))
}

/// Random mixture prior and random bump critic on a `points` grid.
pub(crate) fn random_problem<R: Rng + ?Sized>(rng: &mut R, points: usize) -> Result<(GridDensity, Vec<f64>)> {
    let comps: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..=3))
        .map(|_| (rng.gen_range(0.2..1.0), rng.gen_range(-0.8..0.8), rng.gen_range(0.1..0.4)))
        .collect();
    let mix = GridDensity::from_fn(points, |x| {
        comps.iter().map(|&(w, m, s)| w * (-0.5 * ((x - m) / s).powi(2)).exp()).sum()
    })?;
    let bumps: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..=3))
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-0.9..0.9), rng.gen_range(0.05..0.5)))
        .collect();
    let q = mix
        .grid()
        .iter()
        .map(|&x| bumps.iter().map(|&(a, m, s)| a * (-0.5 * ((x - m) / s).powi(2)).exp()).sum())
        .collect();
    Ok((mix, q))
}

/// Worst TV between the iterated and closed-form stationary policies, and the
/// worst optimality residual of the closed form, over `configs` random problems.
pub fn fixed_point_sweep(seed: u64, configs: usize, points: usize) -> Result<(f64, f64)> {
    let mut rng = seeded(seed);
    let lambdas = [0.5, 0.8, 1.0];
    let etas = [0.1, 1.0, 10.0];
    let betas = [0.2, 1.0, 5.0];
    let mut worst_tv = 0.0f64;
    let mut worst_res = 0.0f64;
    for c in 0..configs {
        let (mix, q) = random_problem(&mut rng, points)?;
        let p = TiltParams::new(lambdas[c % 3], etas[(c / 3) % 3], betas[(c + c / 3) % 3])?;
        let closed = tilted_closed_form(&mix, &q, &p)?;
        let (fp, _) = md_fixed_point(&mix, &q, &p, &FixedPointOptions::default(), None)?;
        worst_tv = worst_tv.max(tv_distance(&fp, &closed)?);
        worst_res = worst_res.max(optimality_residual(&closed, &mix, &q, &p)?);
    }
    Ok((worst_tv, worst_res))
}

/// Runs every theory check. Deterministic for a given seed.
pub fn run_theory_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut rng = seeded(seed);

    let dev = prop1_gradient_identity(&mut rng, 1000, 8, None)?;
    out.push(CheckResult::below("gradient_identity_interpolated", dev, 1e-12));
    let dev1 = prop1_gradient_identity(&mut rng, 100, 8, Some(1.0))?;
    out.push(CheckResult::below("gradient_identity_lambda_one", dev1, 1e-12));

    let (tv, res) = fixed_point_sweep(seed, 9, 201)?;
    out.push(CheckResult::below("fixed_point_tv", tv, 1e-8));
    out.push(CheckResult::below("closed_form_residual", res, 1e-10));

    let p = TiltParams::new(1.0, 1.0, 1.0)?;
    let opt = FixedPointOptions::default();
    let (mix, q) = reference_problem(201)?;
    let (smooth, _) = smoothed_fixed_point(&mix, &q, &p, 0.1, &opt)?;
    out.push(CheckResult::below(
        "smoothed_self_consistency",
        smoothed_residual(&smooth, &mix, &q, &p, 0.1)?,
        1e-8,
    ));
    let (mix, q) = reference_problem(801)?;
    let (smooth, _) = smoothed_fixed_point(&mix, &q, &p, 0.01, &opt)?;
    let closed = tilted_closed_form(&mix, &q, &p)?;
    out.push(CheckResult::below("smoothed_small_sigma_tv", tv_distance(&smooth, &closed)?, 0.05));

    let uni = GridDensity::uniform(2001)?;
    let tri = GridDensity::from_fn(2001, |x| 1.0 - x.abs())?;
    out.push(CheckResult::near("tv_uniform_triangle", tv_distance(&uni, &tri)?, 0.25, 1e-3));
    let left = GridDensity::from_fn(201, |x| if x < -0.1 { 1.0 } else { 0.0 })?;
    let right = GridDensity::from_fn(201, |x| if x > 0.1 { 1.0 } else { 0.0 })?;
    out.push(CheckResult::near("tv_disjoint", tv_distance(&left, &right)?, 1.0, 1e-12));

    let gauss = crate::rng::randn(&mut rng, 10_000, 1);
    let h_gauss = knn_entropy(gauss.view(), 3)?;
    out.push(CheckResult::near("knn_entropy_gaussian", h_gauss, 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln(), 0.05));
    let unif = ndarray::Array2::from_shape_simple_fn((10_000, 1), || rng.gen::<f64>());
    out.push(CheckResult::near("knn_entropy_uniform", knn_entropy(unif.view(), 3)?, 0.0, 0.05));
    Ok(out)
}
