use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::diffcore::NetGrads;
use crate::error::{shape_err, MeamError, Result};
use crate::rng::randn;

use super::field::VectorFieldNet;

/// Conditional flow-matching loss and its parameter gradients.
#[derive(Debug, Clone)]
pub struct CfmOutput {
    /// Batch mean of `||v(x_t, t | s) - (a - x0)||^2`.
    pub loss: f64,
    pub grads: NetGrads,
}

/// Draws `t ~ U(0, 1)` and `x0 ~ N(0, I)` per row, then evaluates
/// [`cfm_loss_with`].
pub fn cfm_loss<R: Rng + ?Sized>(
    field: &VectorFieldNet,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    rng: &mut R,
) -> Result<CfmOutput> {
    let n = actions.nrows();
    if n == 0 {
        return Err(MeamError::Usage("cfm_loss on an empty batch".into()));
    }
    let x0 = randn(rng, n, actions.ncols());
    let t = Array1::from_shape_simple_fn(n, || rng.gen::<f64>());
    cfm_loss_with(field, states, actions, x0.view(), t.view())
}

/// Flow-matching loss for explicit base noise and times.
pub fn cfm_loss_with(
    field: &VectorFieldNet,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    x0: ArrayView2<f64>,
    t: ArrayView1<f64>,
) -> Result<CfmOutput> {
    let n = actions.nrows();
    if n == 0 {
        return Err(MeamError::Usage("cfm_loss on an empty batch".into()));
    }
    if x0.dim() != actions.dim() {
        return Err(shape_err("cfm base noise", format!("{:?}", actions.dim()), format!("{:?}", x0.dim())));
    }
    let mut x_t = Array2::zeros(actions.dim());
    let mut target = Array2::zeros(actions.dim());
    for (i, (mut xr, mut ur)) in x_t.outer_iter_mut().zip(target.outer_iter_mut()).enumerate() {
        let ti = t[i];
        Zip::from(&mut xr)
            .and(&mut ur)
            .and(x0.row(i))
            .and(actions.row(i))
            .for_each(|xv, uv, &a0, &a1| {
                *xv = (1.0 - ti) * a0 + ti * a1;
                *uv = a1 - a0;
            });
    }
    let (v, tape) = field.forward_rows(x_t.view(), t, states)?;
    let resid = &v - &target;
    let loss = resid.map(|r| r * r).sum_axis(Axis(1)).mean().expect("non-empty");
    let cot = resid * (2.0 / n as f64);
    let grads = tape.grad_params(cot.view())?;
    Ok(CfmOutput { loss, grads })
}
