use ndarray::Array2;

use crate::error::{shape_err, MeamError, Result};
use crate::flowkit::{clamp_time, Dynamics, Trajectory, VectorField};

/// Adjoint states aligned with a [`Trajectory`]; `states[N]` is the terminal condition.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointPath {
    pub times: Vec<f64>,
    pub states: Vec<Array2<f64>>,
}

/// Backward pass of the discrete sampler that produced `traj`.
///
/// Each step applies the transposed Jacobian of one forward step, so the
/// result is the exact gradient of a terminal functional with respect to
/// every intermediate state. For ODE paths the step Jacobian is
/// `I + dt * dv/dx`; for memoryless SDE paths it is
/// `I + dt * (2 dv/dx - I / t)` at the clamped time. Products are formed as
/// vector-Jacobian products; no Jacobian is materialized.
pub fn solve_lean_adjoint(traj: &Trajectory, field: &impl VectorField, y1: Array2<f64>) -> Result<AdjointPath> {
    let n = traj.num_steps();
    if y1.dim() != traj.terminal().dim() {
        return Err(shape_err(
            "terminal adjoint",
            format!("{:?}", traj.terminal().dim()),
            format!("{:?}", y1.dim()),
        ));
    }
    let dt = traj.dt();
    let s = traj.cond.view();
    let mut states = vec![Array2::zeros((0, 0)); n + 1];
    states[n] = y1;
    for i in (0..n).rev() {
        let y_next = &states[i + 1];
        let x = traj.states[i].view();
        let y = match traj.dynamics {
            Dynamics::Ode => {
                let jt_y = field.vjp_x(x, traj.times[i], s, y_next.view())?;
                y_next + &(jt_y * dt)
            }
            Dynamics::MemorylessSde { time_clamp } => {
                let tc = clamp_time(traj.times[i], time_clamp);
                let jt_y = field.vjp_x(x, tc, s, y_next.view())?;
                y_next * (1.0 - dt / tc) + &(jt_y * (2.0 * dt))
            }
        };
        if y.iter().any(|v| !v.is_finite()) {
            return Err(MeamError::Integration {
                step: i,
                msg: "non-finite adjoint state".into(),
            });
        }
        states[i] = y;
    }
    Ok(AdjointPath {
        times: traj.times.clone(),
        states,
    })
}
