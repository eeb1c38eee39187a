use ndarray::{s, Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::diffcore::{Activation, GradTape, NetParams};
use crate::error::{shape_err, MeamError, Result};

/// A state-conditioned time-dependent vector field over actions.
///
/// Batched: rows of `x` and `s` are samples, and all rows share the time `t`.
pub trait VectorField {
    fn action_dim(&self) -> usize;

    fn eval(&self, x: ArrayView2<f64>, t: f64, s: ArrayView2<f64>) -> Result<Array2<f64>>;

    /// Row-wise `(d v / d x)^T c`.
    fn vjp_x(&self, x: ArrayView2<f64>, t: f64, s: ArrayView2<f64>, cot: ArrayView2<f64>) -> Result<Array2<f64>>;
}

impl<F: VectorField + ?Sized> VectorField for &F {
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }

    fn eval(&self, x: ArrayView2<f64>, t: f64, s: ArrayView2<f64>) -> Result<Array2<f64>> {
        (**self).eval(x, t, s)
    }

    fn vjp_x(&self, x: ArrayView2<f64>, t: f64, s: ArrayView2<f64>, cot: ArrayView2<f64>) -> Result<Array2<f64>> {
        (**self).vjp_x(x, t, s, cot)
    }
}

/// Neural vector field `v(x_t, t | s)` with raw input `[x_t, t, s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldNet {
    net: NetParams,
    action_dim: usize,
    state_dim: usize,
}

impl VectorFieldNet {
    pub fn new(net: NetParams, action_dim: usize, state_dim: usize) -> Result<Self> {
        if net.in_dim() != action_dim + 1 + state_dim || net.out_dim() != action_dim {
            return Err(MeamError::Config(format!(
                "vector field net must map {} -> {} (got {} -> {})",
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

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Forward pass with a per-row time, recording a tape (used by training losses).
    pub fn forward_rows(
        &self,
        x: ArrayView2<f64>,
        t: ArrayView1<f64>,
        s: ArrayView2<f64>,
    ) -> Result<(Array2<f64>, GradTape<'_>)> {
        let input = assemble_input(x, t, s, self.action_dim, self.state_dim)?;
        self.net.forward(input.view())
    }

    fn input_const_t(&self, x: ArrayView2<f64>, t: f64, s: ArrayView2<f64>) -> Result<Array2<f64>> {
        let times = ndarray::Array1::from_elem(x.nrows(), t);
        assemble_input(x, times.view(), s, self.action_dim, self.state_dim)
    }
}

impl VectorField for VectorFieldNet {
    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn eval(&self, x: ArrayView2<f64>, t: f64, s: ArrayView2<f64>) -> Result<Array2<f64>> {
        let input = self.input_const_t(x, t, s)?;
        self.net.predict(input.view())
    }

    fn vjp_x(&self, x: ArrayView2<f64>, t: f64, s: ArrayView2<f64>, cot: ArrayView2<f64>) -> Result<Array2<f64>> {
        let input = self.input_const_t(x, t, s)?;
        let (_, tape) = self.net.forward(input.view())?;
        let g = tape.grad_input(cot)?;
        Ok(g.slice(s![.., ..self.action_dim]).to_owned())
    }
}

/// Concatenates `[x | scalar column | s]` row by row.
pub(crate) fn assemble_input(
    x: ArrayView2<f64>,
    scalar: ArrayView1<f64>,
    s: ArrayView2<f64>,
    action_dim: usize,
    state_dim: usize,
) -> Result<Array2<f64>> {
    let rows = x.nrows();
    if x.ncols() != action_dim {
        return Err(shape_err("action batch", format!("{action_dim} columns"), x.ncols()));
    }
    if s.ncols() != state_dim || s.nrows() != rows {
        return Err(shape_err(
            "state batch",
            format!("{rows}x{state_dim}"),
            format!("{}x{}", s.nrows(), s.ncols()),
        ));
    }
    if scalar.len() != rows {
        return Err(shape_err("time/noise column", rows, scalar.len()));
    }
    let mut input = Array2::zeros((rows, action_dim + 1 + state_dim));
    input.slice_mut(s![.., ..action_dim]).assign(&x);
    input.column_mut(action_dim).assign(&scalar);
    input.slice_mut(s![.., action_dim + 1..]).assign(&s);
    Ok(input)
}

/// State-independent field `v(x, t) = A(t) x + b(t)` given by a closure
/// returning `(A(t), b(t))`. Handy for closed-form references.
#[derive(Clone)]
pub struct AffineField<F> {
    dim: usize,
    coeffs: F,
}

impl<F> AffineField<F>
where
    F: Fn(f64) -> (Array2<f64>, ndarray::Array1<f64>),
{
    pub fn new(dim: usize, coeffs: F) -> Self {
        Self { dim, coeffs }
    }
}

impl<F> VectorField for AffineField<F>
where
    F: Fn(f64) -> (Array2<f64>, ndarray::Array1<f64>),
{
    fn action_dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: ArrayView2<f64>, t: f64, _s: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim {
            return Err(shape_err("action batch", self.dim, x.ncols()));
        }
        let (a, b) = (self.coeffs)(t);
        Ok(x.dot(&a.t()) + &b)
    }

    fn vjp_x(&self, x: ArrayView2<f64>, t: f64, _s: ArrayView2<f64>, cot: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim || cot.dim() != x.dim() {
            return Err(shape_err("cotangent", format!("{:?}", x.dim()), format!("{:?}", cot.dim())));
        }
        let (a, _) = (self.coeffs)(t);
        Ok(cot.dot(&a))
    }
}
