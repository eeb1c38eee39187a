//! Reward-tilting of a flow by adjoint matching: reference-field mixing,
//! the terminal condition, the backward adjoint solve and the regression loss.

mod loss;
mod solve;

use ndarray::{Array1, Array2, ArrayView2, Zip};

use crate::error::{MeamError, Result};
use crate::flowkit::VectorField;

pub use loss::{am_loss, control_cost, path_kl, AmOutput};
pub use solve::{solve_lean_adjoint, AdjointPath};

/// Strengths of the three terms in the local fine-tuning objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltKnobs {
    /// Weight of the mixture prior against the previous iterate, in `(0, 1]`.
    pub lambda: f64,
    /// Reward scale `1/beta`.
    pub inv_beta: f64,
    /// Entropy scale `1/eta`.
    pub inv_eta: f64,
}

impl TiltKnobs {
    pub fn new(lambda: f64, inv_beta: f64, inv_eta: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(MeamError::Config(format!("lambda must lie in (0, 1], got {lambda}")));
        }
        for (name, v) in [("inv_beta", inv_beta), ("inv_eta", inv_eta)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MeamError::Config(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(Self {
            lambda,
            inv_beta,
            inv_eta,
        })
    }
}

/// Gradient of a critic with respect to its action input.
pub trait ActionCritic {
    /// Returns `Q(s, a)` per row and `dQ/da`.
    fn q_and_grad(&self, s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)>;
}

/// Estimate of the negative score `-grad log pi(x | s)` at a fixed noise level.
pub trait NegScore {
    fn neg_score(&self, x: ArrayView2<f64>, s: ArrayView2<f64>, sigma: f64) -> Result<Array2<f64>>;
}

/// `lambda * v_mix + (1 - lambda) * v_prev`, evaluated on the fly.
#[derive(Debug, Clone, Copy)]
pub struct RefField<A, B> {
    mix: A,
    prev: B,
    lambda: f64,
}

pub fn interpolate_ref<A: VectorField, B: VectorField>(mix: A, prev: B, lambda: f64) -> Result<RefField<A, B>> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(MeamError::Config(format!("lambda must lie in (0, 1], got {lambda}")));
    }
    if mix.action_dim() != prev.action_dim() {
        return Err(crate::error::shape_err("reference fields", mix.action_dim(), prev.action_dim()));
    }
    Ok(RefField { mix, prev, lambda })
}

impl<A, B> RefField<A, B> {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

fn blend(a: Array2<f64>, b: Array2<f64>, lambda: f64) -> Array2<f64> {
    let mut out = a;
    Zip::from(&mut out).and(&b).for_each(|o, &p| *o = lambda * *o + (1.0 - lambda) * p);
    out
}

impl<A: VectorField, B: VectorField> VectorField for RefField<A, B> {
    fn action_dim(&self) -> usize {
        self.mix.action_dim()
    }

    fn eval(&self, x: ArrayView2<f64>, t: f64, s: ArrayView2<f64>) -> Result<Array2<f64>> {
        let a = self.mix.eval(x, t, s)?;
        if self.lambda == 1.0 {
            return Ok(a);
        }
        Ok(blend(a, self.prev.eval(x, t, s)?, self.lambda))
    }

    fn vjp_x(&self, x: ArrayView2<f64>, t: f64, s: ArrayView2<f64>, cot: ArrayView2<f64>) -> Result<Array2<f64>> {
        let a = self.mix.vjp_x(x, t, s, cot)?;
        if self.lambda == 1.0 {
            return Ok(a);
        }
        Ok(blend(a, self.prev.vjp_x(x, t, s, cot)?, self.lambda))
    }
}

/// Terminal adjoint `-(1/beta) dQ/da - (1/eta) S(x1, sigma_min) / sigma_min`.
///
/// The critic gradient is taken at `x1` clipped to `[-1, 1]`; the score is
/// queried at the raw terminal point. The score model is not called when
/// `inv_eta == 0`.
pub fn terminal_adjoint<C: ActionCritic + ?Sized, S: NegScore + ?Sized>(
    x1: ArrayView2<f64>,
    s: ArrayView2<f64>,
    critic: &C,
    score: &S,
    knobs: &TiltKnobs,
    sigma_min: f64,
) -> Result<Array2<f64>> {
    let clipped = x1.mapv(|v| v.clamp(-1.0, 1.0));
    let (q, grad_q) = critic.q_and_grad(s, clipped.view())?;
    if grad_q.dim() != x1.dim() {
        return Err(crate::error::shape_err(
            "critic action gradient",
            format!("{:?}", x1.dim()),
            format!("{:?}", grad_q.dim()),
        ));
    }
    let mut y = grad_q * (-knobs.inv_beta);
    let mut score_norm = 0.0;
    if knobs.inv_eta != 0.0 {
        let ns = score.neg_score(x1, s, sigma_min)?;
        score_norm = ns.iter().map(|v| v * v).sum::<f64>().sqrt();
        y.scaled_add(-knobs.inv_eta, &ns);
    }
    if let Some(row) = y.outer_iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(MeamError::Training {
            step: 0,
            msg: format!(
                "non-finite terminal adjoint at row {row}: Q = {}, score norm = {score_norm}",
                q.get(row).copied().unwrap_or(f64::NAN)
            ),
        });
    }
    Ok(y)
}
