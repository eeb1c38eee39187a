//! Brute-force numerical checks of the stationary-policy theory on 1D grids,
//! plus sample-based diagnostics.

mod density;
mod suite;
mod theory;

use ndarray::ArrayView2;
use rand::Rng;
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{MeamError, Result};

pub use density::{action_grid, tv_distance, GridDensity};
pub use suite::{run_theory_suite, fixed_point_sweep, CheckResult};
pub use theory::{
    md_fixed_point, optimality_residual, smooth_density, smoothed_fixed_point, smoothed_residual, tilted_closed_form,
    FixedPointOptions, TiltParams, DENSITY_FLOOR,
};

/// Largest deviation between the gradients of the two-term KL penalty and
/// of the single penalty toward the interpolated reference, over random
/// draws in `dim` dimensions:
/// `(1-l)(v - v_prev) + l (v - v_mix)` versus `v - (l v_mix + (1-l) v_prev)`.
///
/// `lambda = None` draws `l` uniformly from `(0, 1)` per trial.
pub fn prop1_gradient_identity<R: Rng + ?Sized>(rng: &mut R, trials: usize, dim: usize, lambda: Option<f64>) -> Result<f64> {
    if trials == 0 {
        return Err(MeamError::Usage("prop1_gradient_identity needs at least one trial".into()));
    }
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let l = lambda.unwrap_or_else(|| rng.gen_range(f64::EPSILON..1.0));
        for _ in 0..dim {
            let (vk, vm, vp): (f64, f64, f64) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            let split = (1.0 - l) * (vk - vp) + l * (vk - vm);
            let merged = vk - (l * vm + (1.0 - l) * vp);
            worst = worst.max((split - merged).abs());
        }
    }
    Ok(worst)
}

/// Kozachenko-Leonenko differential-entropy estimate (nats) from the
/// distance of each sample to its `k`-th nearest neighbour.
pub fn knn_entropy(samples: ArrayView2<f64>, k: usize) -> Result<f64> {
    let (n, d) = samples.dim();
    if k == 0 || n <= k {
        return Err(MeamError::Usage(format!("knn_entropy needs n > k >= 1, got n = {n}, k = {k}")));
    }
    if d == 0 {
        return Err(MeamError::Usage("knn_entropy needs at least one dimension".into()));
    }
    let radii = if d == 1 {
        kth_distances_1d(samples.column(0).to_vec(), k)
    } else {
        kth_distances(samples, k)
    };
    let sum_log: f64 = radii.iter().map(|r| r.max(1e-12).ln()).sum();
    let df = d as f64;
    let ln_unit_ball = 0.5 * df * std::f64::consts::PI.ln() - ln_gamma(0.5 * df + 1.0);
    Ok(digamma(n as f64) - digamma(k as f64) + ln_unit_ball + df * sum_log / n as f64)
}

/// k-th neighbour distances in 1D via a sorted sweep.
fn kth_distances_1d(values: Vec<f64>, k: usize) -> Vec<f64> {
    let mut x = values;
    x.sort_by(f64::total_cmp);
    let n = x.len();
    (0..n)
        .map(|i| {
            // Merge the left and right neighbour sequences, k steps.
            let (mut l, mut r) = (i, i);
            let mut dist = 0.0;
            for _ in 0..k {
                let dl = if l > 0 { x[i] - x[l - 1] } else { f64::INFINITY };
                let dr = if r + 1 < n { x[r + 1] - x[i] } else { f64::INFINITY };
                if dl <= dr {
                    l -= 1;
                    dist = dl;
                } else {
                    r += 1;
                    dist = dr;
                }
            }
            dist
        })
        .collect()
}

fn kth_distances(samples: ArrayView2<f64>, k: usize) -> Vec<f64> {
    let n = samples.nrows();
    let mut best = vec![f64::INFINITY; k];
    (0..n)
        .map(|i| {
            best.fill(f64::INFINITY);
            let xi = samples.row(i);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d2: f64 = xi.iter().zip(samples.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 < best[k - 1] {
                    let pos = best.partition_point(|&b| b <= d2);
                    best.insert(pos, d2);
                    best.pop();
                }
            }
            best[k - 1].sqrt()
        })
        .collect()
}

#[cfg(test)]
mod tests;
