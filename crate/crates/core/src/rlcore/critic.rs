use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::adjoint::ActionCritic;
use crate::diffcore::{Activation, AdamState, NetParams};
use crate::envs::Dataset;
use crate::error::{shape_err, MeamError, Result};
use crate::flowkit::{sample_ode_terminal, VectorField};
use crate::rng::randn;

/// Ensemble of `Q(s, a)` networks with a shared architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticEnsemble {
    members: Vec<NetParams>,
    state_dim: usize,
    action_dim: usize,
}

impl CriticEnsemble {
    pub fn new(members: Vec<NetParams>, state_dim: usize, action_dim: usize) -> Result<Self> {
        if members.len() < 2 {
            return Err(MeamError::Config(format!("critic ensemble needs at least 2 members, got {}", members.len())));
        }
        let first = &members[0];
        if first.in_dim() != state_dim + action_dim || first.out_dim() != 1 {
            return Err(MeamError::Config(format!(
                "critic members must map {} -> 1 (got {} -> {})",
                state_dim + action_dim,
                first.in_dim(),
                first.out_dim()
            )));
        }
        if members.iter().any(|m| !m.same_shape(first)) {
            return Err(MeamError::Config("critic members differ in architecture".into()));
        }
        Ok(Self {
            members,
            state_dim,
            action_dim,
        })
    }

    pub fn mlp<R: Rng + ?Sized>(
        size: usize,
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let members = (0..size)
            .map(|_| NetParams::mlp(&sizes, activation, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(members, state_dim, action_dim)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[NetParams] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [NetParams] {
        &mut self.members
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn same_shape(&self, other: &CriticEnsemble) -> bool {
        self.len() == other.len() && self.members.iter().zip(&other.members).all(|(a, b)| a.same_shape(b))
    }

    fn input(&self, s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<Array2<f64>> {
        if s.ncols() != self.state_dim || a.ncols() != self.action_dim || s.nrows() != a.nrows() {
            return Err(shape_err(
                "critic input",
                format!("n x {} and n x {}", self.state_dim, self.action_dim),
                format!("{:?} and {:?}", s.dim(), a.dim()),
            ));
        }
        Ok(concatenate![Axis(1), s, a])
    }

    /// `E x B` matrix of member predictions.
    pub fn predict_all(&self, s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<Array2<f64>> {
        let x = self.input(s, a)?;
        let mut out = Array2::zeros((self.len(), x.nrows()));
        for (e, m) in self.members.iter().enumerate() {
            out.row_mut(e).assign(&m.predict(x.view())?.column(0));
        }
        Ok(out)
    }

    pub fn predict_mean(&self, s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.predict_all(s, a)?.mean_axis(Axis(0)).expect("non-empty ensemble"))
    }
}

/// Ensemble-mean value and action gradient.
impl ActionCritic for CriticEnsemble {
    fn q_and_grad(&self, s: ArrayView2<f64>, a: ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
        let x = self.input(s, a)?;
        let n = x.nrows();
        let inv_e = 1.0 / self.len() as f64;
        let cot = Array2::from_elem((n, 1), inv_e);
        let mut q = Array1::zeros(n);
        let mut grad = Array2::zeros((n, self.action_dim));
        for m in &self.members {
            let (out, tape) = m.forward(x.view())?;
            q.scaled_add(inv_e, &out.column(0));
            let gx = tape.grad_input(cot.view())?;
            grad += &gx.slice(s![.., self.state_dim..]);
        }
        Ok((q, grad))
    }
}

/// `r + gamma (1 - done) [c min_e Q_e + (1 - c) mean_e Q_e]` from an `E x B`
/// matrix of next-state values.
pub fn td_target_from_values(
    rewards: ArrayView1<f64>,
    dones: ArrayView1<f64>,
    next_q: ArrayView2<f64>,
    gamma: f64,
    pessimism: f64,
) -> Result<Array1<f64>> {
    let n = rewards.len();
    if dones.len() != n || next_q.ncols() != n || next_q.nrows() == 0 {
        return Err(shape_err(
            "td target inputs",
            format!("E x {n}"),
            format!("{:?} with {} done flags", next_q.dim(), dones.len()),
        ));
    }
    let e = next_q.nrows() as f64;
    Ok(Array1::from_shape_fn(n, |j| {
        if dones[j] != 0.0 {
            return rewards[j];
        }
        let col = next_q.column(j);
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let mean = col.sum() / e;
        rewards[j] + gamma * (pessimism * min + (1.0 - pessimism) * mean)
    }))
}

/// Range of discounted returns reachable with rewards in `[r_min, r_max]`:
/// `[min(r_min, r_min / (1 - gamma)), max(r_max, r_max / (1 - gamma))]`.
pub fn value_bounds(rewards: ArrayView1<f64>, gamma: f64) -> Result<(f64, f64)> {
    if rewards.is_empty() {
        return Err(MeamError::Usage("value bounds from an empty reward set".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(MeamError::Config(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    let lo = rewards.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let h = 1.0 / (1.0 - gamma);
    Ok((lo.min(lo * h), hi.max(hi * h)))
}

/// TD targets with next actions from a deterministic ODE solve of `policy`
/// at `s'`, clipped to `[-1, 1]`. Targets are clamped to `bounds` if given.
#[allow(clippy::too_many_arguments)]
pub fn td_target<R: Rng + ?Sized>(
    target: &CriticEnsemble,
    policy: &impl VectorField,
    batch: &Dataset,
    gamma: f64,
    pessimism: f64,
    flow_steps: usize,
    bounds: Option<(f64, f64)>,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let n = batch.len();
    let x0 = randn(rng, n, batch.d_a);
    let next_a = sample_ode_terminal(policy, batch.next_states.view(), x0.view(), flow_steps)?.mapv(|v| v.clamp(-1.0, 1.0));
    let next_q = target.predict_all(batch.next_states.view(), next_a.view())?;
    let y = td_target_from_values(batch.rewards.view(), batch.dones.view(), next_q.view(), gamma, pessimism)?;
    Ok(match bounds {
        Some((lo, hi)) => y.mapv(|v| v.clamp(lo, hi)),
        None => y,
    })
}

/// Losses reported by [`critic_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct CriticOutput {
    /// Mean squared TD error per member, before the update.
    pub member_losses: Vec<f64>,
    pub loss: f64,
    /// Ensemble-mean prediction on the batch, before the update.
    pub q_mean: f64,
}

/// One Adam step per member toward the shared targets `y`.
pub fn critic_step(
    critic: &mut CriticEnsemble,
    adams: &mut [AdamState],
    s: ArrayView2<f64>,
    a: ArrayView2<f64>,
    y: ArrayView1<f64>,
) -> Result<CriticOutput> {
    if adams.len() != critic.len() {
        return Err(shape_err("critic optimizers", critic.len(), adams.len()));
    }
    let x = critic.input(s, a)?;
    let n = x.nrows();
    if n == 0 || y.len() != n {
        return Err(shape_err("critic targets", n, y.len()));
    }
    let mut member_losses = Vec::with_capacity(critic.len());
    let mut q_sum = 0.0;
    for (m, adam) in critic.members.iter_mut().zip(adams.iter_mut()) {
        let (out, tape) = m.forward(x.view())?;
        let resid = &out.column(0) - &y;
        let loss = resid.iter().map(|r| r * r).sum::<f64>() / n as f64;
        if !loss.is_finite() {
            return Err(MeamError::Training {
                step: 0,
                msg: format!("non-finite critic loss (member {})", member_losses.len()),
            });
        }
        q_sum += out.sum();
        let cot = (resid * (2.0 / n as f64)).insert_axis(Axis(1));
        let grads = tape.grad_params(cot.view())?;
        drop(tape);
        adam.step(m, &grads)?;
        member_losses.push(loss);
    }
    let loss = member_losses.iter().sum::<f64>() / member_losses.len() as f64;
    Ok(CriticOutput {
        member_losses,
        loss,
        q_mean: q_sum / (n * critic.len()) as f64,
    })
}

/// `target <- (1 - rate) target + rate online`, member by member.
pub fn polyak_update(online: &NetParams, target: &mut NetParams, rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(MeamError::Usage(format!("polyak rate must lie in [0, 1], got {rate}")));
    }
    target.polyak_from(online, rate)
}

pub fn polyak_update_ensemble(online: &CriticEnsemble, target: &mut CriticEnsemble, rate: f64) -> Result<()> {
    if !online.same_shape(target) {
        return Err(MeamError::Usage("target ensemble does not match the online ensemble".into()));
    }
    for (o, t) in online.members.iter().zip(target.members.iter_mut()) {
        polyak_update(o, t, rate)?;
    }
    Ok(())
}
