//! Central finite-difference checks for [`NetParams`] gradients.

use ndarray::Array2;
use rand::Rng;

use crate::error::Result;

use super::net::NetParams;

/// Relative error with a small absolute floor so that two near-zero
/// derivatives compare equal.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn scalar_objective(net: &NetParams, x: &[f64], cot: &[f64]) -> Result<f64> {
    let y = net.predict_one(x)?;
    Ok(y.iter().zip(cot).map(|(a, b)| a * b).sum())
}

/// Max relative error between tape parameter gradients of `<c, f(x)>` (random
/// `c`) and central differences with step `h`.
pub fn check_param_grads<R: Rng + ?Sized>(net: &NetParams, x: &[f64], rng: &mut R, h: f64) -> Result<f64> {
    let cot: Vec<f64> = (0..net.out_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let xin = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row");
    let (_, tape) = net.forward(xin.view())?;
    let c = Array2::from_shape_vec((1, cot.len()), cot.clone()).expect("row");
    let grads = tape.grad_params(c.view())?;
    let analytic: Vec<f64> = grads.slices().iter().flat_map(|s| s.iter().copied()).collect();

    let mut probe = net.clone();
    let mut worst = 0.0f64;
    let mut k = 0;
    let n_slices = probe.params().len();
    for s in 0..n_slices {
        let len = probe.params()[s].len();
        for j in 0..len {
            let orig = probe.params()[s][j];
            probe.params_mut()[s][j] = orig + h;
            let plus = scalar_objective(&probe, x, &cot)?;
            probe.params_mut()[s][j] = orig - h;
            let minus = scalar_objective(&probe, x, &cot)?;
            probe.params_mut()[s][j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(rel_err(analytic[k], numeric));
            k += 1;
        }
    }
    Ok(worst)
}

/// Same as [`check_param_grads`] but for the input gradient.
pub fn check_input_grads<R: Rng + ?Sized>(net: &NetParams, x: &[f64], rng: &mut R, h: f64) -> Result<f64> {
    let cot: Vec<f64> = (0..net.out_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let xin = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row");
    let (_, tape) = net.forward(xin.view())?;
    let c = Array2::from_shape_vec((1, cot.len()), cot.clone()).expect("row");
    let analytic = tape.grad_input(c.view())?;
    let mut worst = 0.0f64;
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let plus = scalar_objective(net, &probe, &cot)?;
        probe[j] = x[j] - h;
        let minus = scalar_objective(net, &probe, &cot)?;
        probe[j] = x[j];
        worst = worst.max(rel_err(analytic[[0, j]], (plus - minus) / (2.0 * h)));
    }
    Ok(worst)
}
