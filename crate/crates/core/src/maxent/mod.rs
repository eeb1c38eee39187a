//! Noise-conditional denoiser used to estimate the policy score at a noise floor.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::adjoint::NegScore;
use crate::diffcore::{Activation, GradTape, NetGrads, NetParams};
use crate::error::{MeamError, Result};
use crate::flowkit::assemble_input;
use crate::rng::randn;

/// Log-uniform noise range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    sigma_min: f64,
    sigma_max: f64,
}

impl NoiseSpec {
    /// Requires `0 < sigma_min <= sigma_max`; equal bounds give a fixed level.
    pub fn new(sigma_min: f64, sigma_max: f64) -> Result<Self> {
        if !(sigma_min > 0.0 && sigma_min.is_finite() && sigma_max >= sigma_min && sigma_max.is_finite()) {
            return Err(MeamError::Config(format!(
                "noise range must satisfy 0 < sigma_min <= sigma_max, got [{sigma_min}, {sigma_max}]"
            )));
        }
        Ok(Self { sigma_min, sigma_max })
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }
}

/// `exp(U(ln sigma_min, ln sigma_max))`, clamped to the range against rounding.
pub fn sample_sigma<R: Rng + ?Sized>(spec: &NoiseSpec, rng: &mut R) -> f64 {
    if spec.sigma_min == spec.sigma_max {
        return spec.sigma_min;
    }
    let (lo, hi) = (spec.sigma_min.ln(), spec.sigma_max.ln());
    (lo + (hi - lo) * rng.gen::<f64>()).exp().clamp(spec.sigma_min, spec.sigma_max)
}

/// Predicts the noise `z` from `(a + sigma z, sigma, s)`; sigma enters as `ln sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreNet {
    net: NetParams,
    action_dim: usize,
    state_dim: usize,
}

impl ScoreNet {
    pub fn new(net: NetParams, action_dim: usize, state_dim: usize) -> Result<Self> {
        if net.in_dim() != action_dim + 1 + state_dim || net.out_dim() != action_dim {
            return Err(MeamError::Config(format!(
                "score net must map {} -> {} (got {} -> {})",
                action_dim + 1 + state_dim,
                action_dim,
                net.in_dim(),
                net.out_dim()
            )));
        }
        Ok(Self {
            net,
            action_dim,
            state_dim,
        })
    }

    pub fn mlp<R: Rng + ?Sized>(
        action_dim: usize,
        state_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![action_dim + 1 + state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        Self::new(NetParams::mlp(&sizes, activation, rng)?, action_dim, state_dim)
    }

    pub fn net(&self) -> &NetParams {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut NetParams {
        &mut self.net
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn forward_rows(
        &self,
        x: ArrayView2<f64>,
        sigma: &Array1<f64>,
        s: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, GradTape<'_>)> {
        let log_sigma = sigma.mapv(f64::ln);
        let input = assemble_input(x, log_sigma.view(), s, self.action_dim, self.state_dim)?;
        self.net.forward(input.view())
    }

    /// Raw network output `S(x, sigma | s)` at a shared noise level.
    pub fn predict(&self, x: ArrayView2<f64>, sigma: f64, s: ArrayView2<f64>) -> Result<Array2<f64>> {
        let log_sigma = Array1::from_elem(x.nrows(), sigma.ln());
        let input = assemble_input(x, log_sigma.view(), s, self.action_dim, self.state_dim)?;
        self.net.predict(input.view())
    }
}

#[derive(Debug, Clone)]
pub struct ScoreOutput {
    /// Batch mean of `||S(a + sigma z, sigma | s) - z||^2`.
    pub loss: f64,
    pub grads: NetGrads,
}

/// Denoising loss with one log-uniform sigma and one noise draw per row.
///
/// Each row is evaluated twice, with `z` and `-z` at the same sigma. The pair
/// has the same expectation as independent draws, but the noise term of the
/// gradient cancels to first order in sigma, which matters at small sigma
/// where the signal `E[z | a + sigma z]` is itself O(sigma).
pub fn score_loss<R: Rng + ?Sized>(
    net: &ScoreNet,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<ScoreOutput> {
    let n = actions.nrows();
    if n == 0 {
        return Err(MeamError::Usage("score_loss on an empty batch".into()));
    }
    let sigma = Array1::from_shape_simple_fn(n, || sample_sigma(spec, rng));
    let z = randn(rng, n, actions.ncols());
    let neg_z = -&z;
    let states2 = concatenate![Axis(0), states, states];
    let actions2 = concatenate![Axis(0), actions, actions];
    let sigma2 = concatenate![Axis(0), sigma, sigma];
    let z2 = concatenate![Axis(0), z, neg_z];
    score_loss_with(net, states2.view(), actions2.view(), sigma2.view(), z2.view())
}

/// [`score_loss`] with explicit noise levels and draws.
pub fn score_loss_with(
    net: &ScoreNet,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    sigma: ndarray::ArrayView1<f64>,
    z: ArrayView2<f64>,
) -> Result<ScoreOutput> {
    let n = actions.nrows();
    if n == 0 {
        return Err(MeamError::Usage("score_loss on an empty batch".into()));
    }
    if z.dim() != actions.dim() || sigma.len() != n {
        return Err(crate::error::shape_err(
            "denoising noise",
            format!("{:?}", actions.dim()),
            format!("{:?} / {}", z.dim(), sigma.len()),
        ));
    }
    let sigma = sigma.to_owned();
    let noisy = &actions + &(&z * &sigma.view().insert_axis(Axis(1)));
    let (pred, tape) = net.forward_rows(noisy.view(), &sigma, states)?;
    let resid = pred - z;
    let loss = resid.map(|r| r * r).sum_axis(Axis(1)).mean().expect("non-empty");
    let grads = tape.grad_params((resid * (2.0 / n as f64)).view())?;
    Ok(ScoreOutput { loss, grads })
}

/// Negative-score estimate `S(x1, sigma_min | s) / sigma_min`.
pub fn query_score(net: &ScoreNet, x1: ArrayView2<f64>, s: ArrayView2<f64>, sigma_min: f64) -> Result<Array2<f64>> {
    if !(sigma_min > 0.0) {
        return Err(MeamError::Domain(format!("score query needs sigma_min > 0, got {sigma_min}")));
    }
    let out = net.predict(x1, sigma_min, s)? / sigma_min;
    if let Some(r) = out.outer_iter().position(|row| row.iter().any(|v| !v.is_finite())) {
        return Err(MeamError::Training {
            step: 0,
            msg: format!("non-finite score at row {r}, input {:?}", x1.slice(s![r, ..]).to_vec()),
        });
    }
    Ok(out)
}

impl NegScore for ScoreNet {
    fn neg_score(&self, x: ArrayView2<f64>, s: ArrayView2<f64>, sigma: f64) -> Result<Array2<f64>> {
        query_score(self, x, s, sigma)
    }
}
