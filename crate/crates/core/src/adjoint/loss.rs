use ndarray::{s, Array1, Array2, Axis};

use crate::diffcore::NetGrads;
use crate::error::{shape_err, MeamError, Result};
use crate::flowkit::{clamp_time, noise_schedule_g, Dynamics, Trajectory, VectorField, VectorFieldNet, DEFAULT_TIME_CLAMP};

use super::solve::AdjointPath;

#[derive(Debug, Clone)]
pub struct AmOutput {
    /// Batch mean of the time-summed regression residual.
    pub loss: f64,
    pub grads: NetGrads,
}

fn loss_clamp(traj: &Trajectory) -> f64 {
    match traj.dynamics {
        Dynamics::MemorylessSde { time_clamp } => time_clamp,
        Dynamics::Ode => DEFAULT_TIME_CLAMP,
    }
}

/// `(t~_i, g(t~_i))` for the left endpoints `i = 0..N-1`.
fn grid_schedule(traj: &Trajectory) -> Result<Vec<(f64, f64)>> {
    let c = loss_clamp(traj);
    traj.times[..traj.num_steps()]
        .iter()
        .map(|&t| {
            let tc = clamp_time(t, c);
            Ok((tc, noise_schedule_g(tc)?))
        })
        .collect()
}

/// Adjoint-matching regression of `fine` onto `reference` shifted by the adjoint.
///
/// Term `i` pairs the fields at `(x_i, t~_i)` with the adjoint at the end of
/// the same step, `y_{i+1}`:
/// `sum_i || (2/g_i)(v_fine - v_ref) + g_i y_{i+1} ||^2 dt`, averaged over rows.
/// The adjoint path is data here; gradients reach only `fine`.
pub fn am_loss(
    fine: &VectorFieldNet,
    reference: &impl VectorField,
    traj: &Trajectory,
    adj: &AdjointPath,
) -> Result<AmOutput> {
    if adj.times != traj.times || adj.states.len() != traj.states.len() {
        return Err(MeamError::Usage("adjoint path and trajectory use different grids".into()));
    }
    let n = traj.num_steps();
    let b = traj.batch_size();
    let d = fine.action_dim();
    if b == 0 {
        return Err(MeamError::Usage("am_loss on an empty batch".into()));
    }
    if adj.states[n].dim() != (b, d) {
        return Err(shape_err("adjoint states", format!("{b}x{d}"), format!("{:?}", adj.states[n].dim())));
    }
    let dt = traj.dt();
    let sched = grid_schedule(traj)?;

    // All grid points go through the fine net in one stacked batch.
    let mut xs = Array2::zeros((n * b, d));
    let mut ts = Array1::zeros(n * b);
    let mut cond = Array2::zeros((n * b, traj.cond.ncols()));
    for (i, &(tc, _)) in sched.iter().enumerate() {
        xs.slice_mut(s![i * b..(i + 1) * b, ..]).assign(&traj.states[i]);
        ts.slice_mut(s![i * b..(i + 1) * b]).fill(tc);
        cond.slice_mut(s![i * b..(i + 1) * b, ..]).assign(&traj.cond);
    }
    let (v_fine, tape) = fine.forward_rows(xs.view(), ts.view(), cond.view())?;

    let mut total = 0.0;
    let mut cot = Array2::zeros((n * b, d));
    for (i, &(tc, g)) in sched.iter().enumerate() {
        let v_ref = reference.eval(traj.states[i].view(), tc, traj.cond.view())?;
        let vf = v_fine.slice(s![i * b..(i + 1) * b, ..]);
        let resid = (&vf - &v_ref) * (2.0 / g) + &(&adj.states[i + 1] * g);
        total += resid.iter().map(|r| r * r).sum::<f64>() * dt;
        // d/dv_fine of ||r||^2 dt / B is 2 r (2/g) dt / B.
        cot.slice_mut(s![i * b..(i + 1) * b, ..])
            .assign(&(resid * (4.0 * dt / (g * b as f64))));
    }
    let grads = tape.grad_params(cot.view())?;
    Ok(AmOutput {
        loss: total / b as f64,
        grads,
    })
}

fn field_gap(a: &impl VectorField, b: &impl VectorField, traj: &Trajectory) -> Result<Vec<(f64, Array1<f64>)>> {
    grid_schedule(traj)?
        .into_iter()
        .enumerate()
        .map(|(i, (tc, g))| {
            let x = traj.states[i].view();
            let diff = a.eval(x, tc, traj.cond.view())? - b.eval(x, tc, traj.cond.view())?;
            Ok((g, diff.map(|v| v * v).sum_axis(Axis(1))))
        })
        .collect()
}

/// Path KL between the SDEs driven by `a` and `b`, in its quadratic form
/// `sum_i (2/g_i^2) ||v_a - v_b||^2 dt`, averaged over rows.
pub fn path_kl(a: &impl VectorField, b: &impl VectorField, traj: &Trajectory) -> Result<f64> {
    let dt = traj.dt();
    let mut total = 0.0;
    for (g, sq) in field_gap(a, b, traj)? {
        total += 2.0 / (g * g) * sq.sum() * dt;
    }
    Ok(total / traj.batch_size() as f64)
}

/// Control cost `1/2 sum_i ||u_i||^2 dt` with `u = (2/g)(v_a - v_b)`.
pub fn control_cost(a: &impl VectorField, b: &impl VectorField, traj: &Trajectory) -> Result<f64> {
    let dt = traj.dt();
    let mut total = 0.0;
    for (g, sq) in field_gap(a, b, traj)? {
        let u2 = (2.0 / g) * (2.0 / g);
        total += 0.5 * u2 * sq.sum() * dt;
    }
    Ok(total / traj.batch_size() as f64)
}
