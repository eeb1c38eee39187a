use ndarray::{Array2, ArrayView2};
use rand::Rng;

use super::Env;
use crate::error::{shape_err, MeamError, Result};

/// Success and return statistics over evaluation episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalStats {
    pub episodes: usize,
    pub success_rate: f64,
    /// Bootstrap 95% interval for the success rate.
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean_return: f64,
    pub return_std: f64,
}

/// Percentile bootstrap interval for the mean of `values`.
pub fn bootstrap_ci<R: Rng + ?Sized>(values: &[f64], resamples: usize, level: f64, rng: &mut R) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let pick = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (pick(tail), pick(1.0 - tail))
}

/// Runs `n_episodes` in lockstep. `policy` maps a batch of states of the
/// still-running episodes to actions; actions are clipped by the env.
pub fn eval_policy<R, P>(env: &dyn Env, mut policy: P, n_episodes: usize, rng: &mut R) -> Result<EvalStats>
where
    R: Rng + ?Sized,
    P: FnMut(ArrayView2<f64>) -> Result<Array2<f64>>,
{
    if n_episodes == 0 {
        return Err(MeamError::Usage("eval_policy needs at least one episode".into()));
    }
    let d_s = env.state_dim();
    let mut states: Vec<Vec<f64>> = (0..n_episodes).map(|_| env.reset(&mut &mut *rng)).collect();
    let mut active: Vec<usize> = (0..n_episodes).collect();
    let mut success = vec![0.0; n_episodes];
    let mut returns = vec![0.0; n_episodes];
    for _ in 0..env.horizon() {
        if active.is_empty() {
            break;
        }
        let batch = Array2::from_shape_fn((active.len(), d_s), |(i, j)| states[active[i]][j]);
        let actions = policy(batch.view())?;
        if actions.dim() != (active.len(), env.action_dim()) {
            return Err(shape_err(
                "policy actions",
                format!("({}, {})", active.len(), env.action_dim()),
                format!("{:?}", actions.dim()),
            ));
        }
        let mut still = Vec::with_capacity(active.len());
        for (row, &ep) in active.iter().enumerate() {
            let a = actions.row(row).to_vec();
            let st = env.step(&states[ep], &a);
            returns[ep] += st.reward;
            if st.success {
                success[ep] = 1.0;
            }
            states[ep] = st.next_state;
            if !st.done {
                still.push(ep);
            }
        }
        active = still;
    }
    let n = n_episodes as f64;
    let success_rate = success.iter().sum::<f64>() / n;
    let mean_return = returns.iter().sum::<f64>() / n;
    let return_std = (returns.iter().map(|r| (r - mean_return).powi(2)).sum::<f64>() / n).sqrt();
    let (ci_lo, ci_hi) = bootstrap_ci(&success, 1000, 0.95, rng);
    Ok(EvalStats {
        episodes: n_episodes,
        success_rate,
        ci_lo,
        ci_hi,
        mean_return,
        return_std,
    })
}
