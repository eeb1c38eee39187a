//! Gaussian expansion actor that proposes critic-improved actions around
//! dataset actions, and the batch mixing that feeds them to the base flow.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::adjoint::ActionCritic;
use crate::diffcore::{Activation, AdamConfig, AdamState, NetGrads, NetParams};
use crate::error::{shape_err, MeamError, Result};
use crate::rng::randn;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Diagonal Gaussian `pi(a | s, a_data)` with a network over `[s, a_data]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionActor {
    net: NetParams,
    state_dim: usize,
    action_dim: usize,
}

/// Mean, bounded log-std, and `d log_std / d raw`.
struct Head {
    mu: Array2<f64>,
    log_std: Array2<f64>,
    slope: Array2<f64>,
}

/// Smooth map of a raw network output onto `(LOG_STD_MIN, LOG_STD_MAX)`.
pub fn squash_log_std(raw: f64) -> f64 {
    LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (raw.tanh() + 1.0)
}

impl ExpansionActor {
    pub fn new(net: NetParams, state_dim: usize, action_dim: usize) -> Result<Self> {
        if net.in_dim() != state_dim + action_dim || net.out_dim() != 2 * action_dim {
            return Err(MeamError::Config(format!(
                "expansion actor must map {} -> {} (got {} -> {})",
                state_dim + action_dim,
                2 * action_dim,
                net.in_dim(),
                net.out_dim()
            )));
        }
        Ok(Self {
            net,
            state_dim,
            action_dim,
        })
    }

    pub fn mlp<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_dim);
        Self::new(NetParams::mlp(&sizes, activation, rng)?, state_dim, action_dim)
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

    fn input(&self, s: ArrayView2<f64>, a_data: ArrayView2<f64>) -> Result<Array2<f64>> {
        if s.ncols() != self.state_dim || a_data.ncols() != self.action_dim || s.nrows() != a_data.nrows() {
            return Err(shape_err(
                "actor input",
                format!("n x {} and n x {}", self.state_dim, self.action_dim),
                format!("{:?} and {:?}", s.dim(), a_data.dim()),
            ));
        }
        Ok(concatenate![Axis(1), s, a_data])
    }

    fn split(&self, out: &Array2<f64>) -> Head {
        let d = self.action_dim;
        let mu = out.slice(s![.., ..d]).to_owned();
        let raw = out.slice(s![.., d..]);
        let half = 0.5 * (LOG_STD_MAX - LOG_STD_MIN);
        let th = raw.mapv(f64::tanh);
        let log_std = th.mapv(|t| LOG_STD_MIN + half * (t + 1.0));
        let slope = th.mapv(|t| half * (1.0 - t * t));
        Head { mu, log_std, slope }
    }

    /// Mean and bounded log-std.
    pub fn mean_log_std(&self, s: ArrayView2<f64>, a_data: ArrayView2<f64>) -> Result<(Array2<f64>, Array2<f64>)> {
        let out = self.net.predict(self.input(s, a_data)?.view())?;
        let head = self.split(&out);
        Ok((head.mu, head.log_std))
    }
}

fn gaussian_log_density(z: &Array2<f64>, log_std: &Array2<f64>) -> Array1<f64> {
    let d = z.ncols() as f64;
    (z.mapv(|v| -0.5 * v * v) - log_std).sum_axis(Axis(1)) - d * HALF_LN_2PI
}

/// Reparameterized draw `a = mu + exp(log_std) z` with its log-density.
pub fn actor_sample<R: Rng + ?Sized>(
    actor: &ExpansionActor,
    s: ArrayView2<f64>,
    a_data: ArrayView2<f64>,
    rng: &mut R,
) -> Result<(Array2<f64>, Array1<f64>)> {
    let (mu, log_std) = actor.mean_log_std(s, a_data)?;
    let z = randn(rng, mu.nrows(), mu.ncols());
    let a = &mu + &(log_std.mapv(f64::exp) * &z);
    Ok((a, gaussian_log_density(&z, &log_std)))
}

/// Log-density of given actions under the actor.
pub fn actor_log_prob(actor: &ExpansionActor, s: ArrayView2<f64>, a_data: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<Array1<f64>> {
    let (mu, log_std) = actor.mean_log_std(s, a_data)?;
    let z = (&a - &mu) / log_std.mapv(f64::exp);
    Ok(gaussian_log_density(&z, &log_std))
}

/// Entropy temperature optimized in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct DualTemp {
    log_alpha: f64,
    target: f64,
    adam: AdamState,
}

impl DualTemp {
    /// Target mean log-density `-d_a / 2`.
    pub fn new(action_dim: usize, init_alpha: f64, config: AdamConfig) -> Result<Self> {
        if !(init_alpha > 0.0 && init_alpha.is_finite()) {
            return Err(MeamError::Config(format!("initial alpha must be positive, got {init_alpha}")));
        }
        Ok(Self {
            log_alpha: init_alpha.ln(),
            target: -(action_dim as f64) / 2.0,
            adam: AdamState::new(1, config),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    /// Restores a saved temperature; optimizer moments are not touched.
    pub fn set_log_alpha(&mut self, log_alpha: f64) {
        self.log_alpha = log_alpha;
    }

    /// `dL/dalpha` for `L(alpha) = alpha (target - E[log pi])`.
    pub fn alpha_grad(&self, mean_log_pi: f64) -> f64 {
        self.target - mean_log_pi
    }

    /// One Adam step on `log alpha` given the batch mean log-density.
    pub fn update(&mut self, mean_log_pi: f64) -> Result<()> {
        let g = self.alpha() * self.alpha_grad(mean_log_pi);
        let mut p = [self.log_alpha];
        self.adam.step_flat(&mut p, &[g])?;
        self.log_alpha = p[0];
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ActorOutput {
    /// Batch mean of `-Q(s, a) + alpha log pi(a)`.
    pub loss: f64,
    pub grads: NetGrads,
    pub mean_log_pi: f64,
    /// `dL(alpha)/dalpha` at the sampled actions.
    pub alpha_grad: f64,
}

/// Soft actor objective with the critic held fixed.
pub fn actor_loss<C: ActionCritic + ?Sized, R: Rng + ?Sized>(
    actor: &ExpansionActor,
    critic: &C,
    dual: &DualTemp,
    s: ArrayView2<f64>,
    a_data: ArrayView2<f64>,
    rng: &mut R,
) -> Result<ActorOutput> {
    let n = s.nrows();
    if n == 0 {
        return Err(MeamError::Usage("actor_loss on an empty batch".into()));
    }
    let z = randn(rng, n, actor.action_dim);
    actor_loss_with(actor, critic, dual, s, a_data, z.view())
}

/// [`actor_loss`] with explicit standard-normal draws.
pub fn actor_loss_with<C: ActionCritic + ?Sized>(
    actor: &ExpansionActor,
    critic: &C,
    dual: &DualTemp,
    s: ArrayView2<f64>,
    a_data: ArrayView2<f64>,
    z: ArrayView2<f64>,
) -> Result<ActorOutput> {
    let n = s.nrows();
    if n == 0 {
        return Err(MeamError::Usage("actor_loss on an empty batch".into()));
    }
    let input = actor.input(s, a_data)?;
    let (out, tape) = actor.net.forward(input.view())?;
    let head = actor.split(&out);
    let std = head.log_std.mapv(f64::exp);
    let a = &head.mu + &(&std * &z);
    let log_pi = gaussian_log_density(&z.to_owned(), &head.log_std);
    let (q, grad_q) = critic.q_and_grad(s, a.view())?;
    let alpha = dual.alpha();
    let mean_log_pi = log_pi.mean().expect("non-empty");
    let loss = (-&q + &(&log_pi * alpha)).mean().expect("non-empty");
    if !loss.is_finite() {
        return Err(MeamError::Training {
            step: 0,
            msg: format!("non-finite actor loss (mean Q {}, mean log pi {mean_log_pi})", q.mean().unwrap_or(f64::NAN)),
        });
    }
    let inv_n = 1.0 / n as f64;
    // log pi under the reparameterization depends on log_std only (-1 per entry).
    let d_mu = &grad_q * -inv_n;
    let d_log_std = (&grad_q * &std * z).mapv(|v| -v * inv_n) - alpha * inv_n;
    let d_raw = d_log_std * &head.slope;
    let cot = concatenate![Axis(1), d_mu, d_raw];
    let grads = tape.grad_params(cot.view())?;
    if !grads.is_finite() {
        return Err(MeamError::Training {
            step: 0,
            msg: "non-finite actor gradient".into(),
        });
    }
    Ok(ActorOutput {
        loss,
        grads,
        mean_log_pi,
        alpha_grad: dual.alpha_grad(mean_log_pi),
    })
}

/// Synthetic target `clip(mu, -1, 1)`, or a clipped sample when `stochastic`
/// carries an rng.
pub fn make_target<R: Rng + ?Sized>(
    actor: &ExpansionActor,
    s: ArrayView2<f64>,
    a_data: ArrayView2<f64>,
    stochastic: Option<&mut R>,
) -> Result<Array2<f64>> {
    let a = match stochastic {
        None => actor.mean_log_std(s, a_data)?.0,
        Some(rng) => actor_sample(actor, s, a_data, rng)?.0,
    };
    Ok(a.mapv(|v| v.clamp(-1.0, 1.0)))
}

/// Actions after mixing, with the per-row replacement decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedActions {
    pub actions: Array2<f64>,
    pub replaced: Vec<bool>,
}

impl MixedActions {
    pub fn replaced_fraction(&self) -> f64 {
        if self.replaced.is_empty() {
            return 0.0;
        }
        self.replaced.iter().filter(|&&r| r).count() as f64 / self.replaced.len() as f64
    }
}

/// Replaces each action row independently with probability `epsilon` by
/// [`make_target`]. States are read, never modified. With `epsilon == 0`
/// the actor is not evaluated and the actions are returned as is.
pub fn mix_batch<R: Rng + ?Sized>(
    s: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    actor: &ExpansionActor,
    epsilon: f64,
    stochastic: bool,
    rng: &mut R,
) -> Result<MixedActions> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(MeamError::Config(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    let n = actions.nrows();
    let replaced: Vec<bool> = (0..n).map(|_| epsilon > 0.0 && rng.gen::<f64>() < epsilon).collect();
    let mut out = actions.to_owned();
    let rows: Vec<usize> = (0..n).filter(|&i| replaced[i]).collect();
    if !rows.is_empty() {
        let sub_s = s.select(Axis(0), &rows);
        let sub_a = actions.select(Axis(0), &rows);
        let targets = if stochastic {
            make_target(actor, sub_s.view(), sub_a.view(), Some(rng))?
        } else {
            make_target::<R>(actor, sub_s.view(), sub_a.view(), None)?
        };
        for (k, &i) in rows.iter().enumerate() {
            out.row_mut(i).assign(&targets.row(k));
        }
    }
    Ok(MixedActions { actions: out, replaced })
}

#[cfg(test)]
mod tests;
