use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{shape_err, MeamError, Result};
use crate::rng::randn;

use super::field::VectorField;
use super::schedule::{clamp_time, noise_schedule_g};

/// How a trajectory was generated. The adjoint solver and the matching loss
/// need this to differentiate the same discrete map that produced the states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dynamics {
    /// Explicit Euler on `dx = v dt`.
    Ode,
    /// Euler-Maruyama on `dx = (2v - x/t) dt + g_t dW`, with drift and
    /// diffusion evaluated at `max(t, time_clamp)`.
    MemorylessSde { time_clamp: f64 },
}

/// A batch of time-indexed latent action paths on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `t_i = i / N`, `i = 0..=N`.
    pub times: Vec<f64>,
    /// `states[i]` is the `batch x d_a` matrix at `times[i]`.
    pub states: Vec<Array2<f64>>,
    /// Standard-normal draws used at each SDE step (empty for ODE paths).
    pub noise: Vec<Array2<f64>>,
    /// Conditioning states, `batch x d_s`.
    pub cond: Array2<f64>,
    pub dynamics: Dynamics,
}

impl Trajectory {
    pub fn num_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.num_steps() as f64
    }

    pub fn terminal(&self) -> &Array2<f64> {
        self.states.last().expect("trajectory has at least two states")
    }

    pub fn batch_size(&self) -> usize {
        self.states[0].nrows()
    }
}

pub fn uniform_grid(num_steps: usize) -> Vec<f64> {
    (0..=num_steps).map(|i| i as f64 / num_steps as f64).collect()
}

fn check_start(field: &impl VectorField, s: &ArrayView2<f64>, x0: &ArrayView2<f64>, num_steps: usize) -> Result<()> {
    if num_steps == 0 {
        return Err(MeamError::Usage("num_steps must be at least 1".into()));
    }
    if x0.ncols() != field.action_dim() {
        return Err(shape_err("initial noise", field.action_dim(), x0.ncols()));
    }
    if s.nrows() != x0.nrows() {
        return Err(shape_err("conditioning batch", x0.nrows(), s.nrows()));
    }
    Ok(())
}

fn ensure_finite(x: &Array2<f64>, step: usize) -> Result<()> {
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(MeamError::Integration {
            step,
            msg: format!("non-finite state value {v}"),
        });
    }
    Ok(())
}

/// Deterministic sampling: explicit Euler from `t = 0` to `t = 1`.
pub fn integrate_ode(
    field: &impl VectorField,
    s: ArrayView2<f64>,
    x0: ArrayView2<f64>,
    num_steps: usize,
) -> Result<Trajectory> {
    check_start(field, &s, &x0, num_steps)?;
    let times = uniform_grid(num_steps);
    let dt = 1.0 / num_steps as f64;
    let mut states = Vec::with_capacity(num_steps + 1);
    states.push(x0.to_owned());
    for (i, &t) in times[..num_steps].iter().enumerate() {
        let x = &states[i];
        let v = field.eval(x.view(), t, s)?;
        let next = x + &(v * dt);
        ensure_finite(&next, i)?;
        states.push(next);
    }
    Ok(Trajectory {
        times,
        states,
        noise: Vec::new(),
        cond: s.to_owned(),
        dynamics: Dynamics::Ode,
    })
}

/// Terminal samples only; same arithmetic as [`integrate_ode`] without
/// keeping intermediate states.
pub fn sample_ode_terminal(
    field: &impl VectorField,
    s: ArrayView2<f64>,
    x0: ArrayView2<f64>,
    num_steps: usize,
) -> Result<Array2<f64>> {
    check_start(field, &s, &x0, num_steps)?;
    let dt = 1.0 / num_steps as f64;
    let mut x = x0.to_owned();
    for i in 0..num_steps {
        let v = field.eval(x.view(), i as f64 / num_steps as f64, s)?;
        x.scaled_add(dt, &v);
        ensure_finite(&x, i)?;
    }
    Ok(x)
}

/// Euler-Maruyama sampling of the memoryless SDE driven by `field`.
pub fn sample_memoryless_sde<R: Rng + ?Sized>(
    field: &impl VectorField,
    s: ArrayView2<f64>,
    x0: ArrayView2<f64>,
    num_steps: usize,
    time_clamp: f64,
    rng: &mut R,
) -> Result<Trajectory> {
    check_start(field, &s, &x0, num_steps)?;
    if !(time_clamp > 0.0 && time_clamp < 1.0) {
        return Err(MeamError::Config(format!("time clamp must lie in (0, 1), got {time_clamp}")));
    }
    let times = uniform_grid(num_steps);
    let dt = 1.0 / num_steps as f64;
    let sqrt_dt = dt.sqrt();
    let mut states = Vec::with_capacity(num_steps + 1);
    let mut noise = Vec::with_capacity(num_steps);
    states.push(x0.to_owned());
    for (i, &t) in times[..num_steps].iter().enumerate() {
        let tc = clamp_time(t, time_clamp);
        let g = noise_schedule_g(tc)?;
        let x = &states[i];
        let v = field.eval(x.view(), tc, s)?;
        let z = randn(rng, x.nrows(), x.ncols());
        let mut next = x.clone();
        ndarray::Zip::from(&mut next)
            .and(&v)
            .and(&z)
            .for_each(|xn, &vi, &zi| *xn += (2.0 * vi - *xn / tc) * dt + g * sqrt_dt * zi);
        ensure_finite(&next, i)?;
        states.push(next);
        noise.push(z);
    }
    Ok(Trajectory {
        times,
        states,
        noise,
        cond: s.to_owned(),
        dynamics: Dynamics::MemorylessSde { time_clamp },
    })
}
