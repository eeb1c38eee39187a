use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;

use crate::envs::{Dataset, Env, EvalStats};
use crate::error::{MeamError, Result};
use crate::rng::stream;

use super::critic::value_bounds;
use super::state::{tag, MeamState, StepMetrics};

/// Fixed column order of the metrics CSV.
pub const METRICS_HEADER: &str =
    "step,cfm_loss,am_loss,critic_loss,score_loss,q_mean,alpha,actor_logpi,eval_success,eval_ci_lo,eval_ci_hi";

/// One line of the metrics CSV. Evaluation columns are NaN on steps
/// without an evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub train: StepMetrics,
    pub eval_success: f64,
    pub eval_ci_lo: f64,
    pub eval_ci_hi: f64,
}

impl MetricsRow {
    pub fn new(train: StepMetrics, eval: Option<&EvalStats>) -> Self {
        let (s, lo, hi) = eval.map_or((f64::NAN, f64::NAN, f64::NAN), |e| (e.success_rate, e.ci_lo, e.ci_hi));
        Self {
            train,
            eval_success: s,
            eval_ci_lo: lo,
            eval_ci_hi: hi,
        }
    }

    pub fn to_csv(&self) -> String {
        let t = &self.train;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            t.step,
            t.cfm_loss,
            t.am_loss,
            t.critic_loss,
            t.score_loss,
            t.q_mean,
            t.alpha,
            t.actor_logpi,
            self.eval_success,
            self.eval_ci_lo,
            self.eval_ci_hi
        )
    }

    pub fn parse(line: &str) -> Result<Self> {
        let v = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| MeamError::Format(format!("metrics row '{line}': {e}")))?;
        if v.len() != 11 {
            return Err(MeamError::Format(format!("metrics row has {} columns, expected 11", v.len())));
        }
        Ok(Self {
            train: StepMetrics {
                step: v[0] as u64,
                cfm_loss: v[1],
                am_loss: v[2],
                critic_loss: v[3],
                score_loss: v[4],
                q_mean: v[5],
                alpha: v[6],
                actor_logpi: v[7],
            },
            eval_success: v[8],
            eval_ci_lo: v[9],
            eval_ci_hi: v[10],
        })
    }
}

/// Reads a metrics CSV, checking the header and step order.
pub fn read_metrics(text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        return Err(MeamError::Format("metrics file does not start with the expected header".into()));
    }
    let rows = lines.filter(|l| !l.is_empty()).map(MetricsRow::parse).collect::<Result<Vec<_>>>()?;
    if rows.windows(2).any(|w| w[1].train.step <= w[0].train.step) {
        return Err(MeamError::Format("metrics steps are not strictly increasing".into()));
    }
    Ok(rows)
}

/// Where a run writes its artifacts.
struct RunDir {
    metrics: Option<BufWriter<File>>,
    root: Option<std::path::PathBuf>,
}

impl RunDir {
    fn open(out: Option<&Path>, state: &MeamState) -> Result<Self> {
        let Some(root) = out else {
            return Ok(Self { metrics: None, root: None });
        };
        fs::create_dir_all(root.join("checkpoints"))?;
        fs::write(root.join("config.txt"), state.config.to_text())?;
        let mut w = BufWriter::new(File::create(root.join("metrics.csv"))?);
        writeln!(w, "{METRICS_HEADER}")?;
        Ok(Self {
            metrics: Some(w),
            root: Some(root.to_path_buf()),
        })
    }

    fn row(&mut self, row: &MetricsRow) -> Result<()> {
        if let Some(w) = &mut self.metrics {
            writeln!(w, "{}", row.to_csv())?;
        }
        Ok(())
    }

    fn checkpoint(&mut self, state: &MeamState, name: &str) -> Result<()> {
        if let Some(root) = &self.root {
            state.save(root.join("checkpoints").join(name))?;
        }
        if let Some(w) = &mut self.metrics {
            w.flush()?;
        }
        Ok(())
    }
}

fn maybe_eval(state: &MeamState, env: Option<&dyn Env>, last: bool) -> Result<Option<EvalStats>> {
    match env {
        Some(env) if last || state.step.is_multiple_of(state.config.eval_every) => Ok(Some(state.evaluate(env, state.config.eval_episodes)?)),
        _ => Ok(None),
    }
}

/// Offline training for `steps` steps. With `out`, writes `config.txt`,
/// `metrics.csv` and checkpoints every `checkpoint_every` steps plus a final
/// one under `checkpoints/final`.
pub fn train_offline(
    state: &mut MeamState,
    data: &Dataset,
    env: Option<&dyn Env>,
    steps: u64,
    out: Option<&Path>,
) -> Result<Vec<MetricsRow>> {
    let mut dir = RunDir::open(out, state)?;
    let mut rows = Vec::with_capacity(steps as usize);
    for i in 0..steps {
        let m = state.train_step(data)?;
        let eval = maybe_eval(state, env, i + 1 == steps)?;
        let row = MetricsRow::new(m, eval.as_ref());
        dir.row(&row)?;
        rows.push(row);
        if state.step.is_multiple_of(state.config.checkpoint_every) {
            dir.checkpoint(state, &format!("step_{:07}", state.step))?;
        }
    }
    dir.checkpoint(state, "final")?;
    Ok(rows)
}

/// Draws half the batch from the offline data and half from the online
/// buffer while the buffer is smaller than the offline data, then uniformly
/// from their union.
pub fn mixed_batch<R: Rng + ?Sized>(offline: &Dataset, buffer: &Dataset, size: usize, rng: &mut R) -> Result<Dataset> {
    if offline.is_empty() {
        return Err(MeamError::Usage("offline dataset is empty".into()));
    }
    if buffer.is_empty() {
        let idx: Vec<usize> = (0..size).map(|_| rng.gen_range(0..offline.len())).collect();
        return Ok(offline.gather(&idx));
    }
    if buffer.len() >= offline.len() {
        let total = offline.len() + buffer.len();
        let idx: Vec<usize> = (0..size).map(|_| rng.gen_range(0..total)).collect();
        let (a, b): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| i < offline.len());
        let b: Vec<usize> = b.iter().map(|i| i - offline.len()).collect();
        return offline.gather(&a).concat(&buffer.gather(&b));
    }
    let half = size / 2;
    let a: Vec<usize> = (0..size - half).map(|_| rng.gen_range(0..offline.len())).collect();
    let b: Vec<usize> = (0..half).map(|_| rng.gen_range(0..buffer.len())).collect();
    offline.gather(&a).concat(&buffer.gather(&b))
}

/// Result of online fine-tuning.
#[derive(Debug, Clone)]
pub struct OnlineRun {
    /// Evaluation of the starting weights.
    pub initial: EvalStats,
    /// Evaluation after the last update (equal to `initial` for zero steps).
    pub last: EvalStats,
    pub rows: Vec<MetricsRow>,
    /// Every transition collected online.
    pub buffer: Dataset,
}

/// Online fine-tuning: one environment step with an SDE-sampled action,
/// then one training step, `steps` times.
pub fn finetune_online(
    state: &mut MeamState,
    offline: &Dataset,
    env: &dyn Env,
    steps: u64,
    out: Option<&Path>,
) -> Result<OnlineRun> {
    let c = state.config.clone();
    if env.state_dim() != c.d_s || env.action_dim() != c.d_a {
        return Err(MeamError::Config(format!("environment {} does not match the config dims", env.name())));
    }
    let initial = state.evaluate(env, c.eval_episodes)?;
    state.set_value_bounds(offline)?;
    let mut dir = RunDir::open(out, state)?;
    let mut buffer = Dataset::empty(c.d_s, c.d_a, c.seed);
    let mut obs = env.reset(&mut stream(state.seed, state.step, tag::RESET));
    let mut ep_len = 0;
    let mut rows = Vec::with_capacity(steps as usize);
    let mut last = initial.clone();
    for i in 0..steps {
        let s = ndarray::Array2::from_shape_vec((1, c.d_s), obs.clone()).expect("state width");
        let a = state.act_sde(s.view(), &mut stream(state.seed, state.step, tag::EXPLORE))?;
        let a = a.row(0).to_vec();
        let st = env.step(&obs, &a);
        ep_len += 1;
        let end = st.done || ep_len >= env.horizon();
        buffer.push(&obs, &a, st.reward, &st.next_state, end)?;
        if let Some((lo, hi)) = state.value_bounds {
            let (r_lo, r_hi) = value_bounds(ndarray::aview1(&[st.reward]), c.gamma)?;
            state.value_bounds = Some((lo.min(r_lo), hi.max(r_hi)));
        }
        if end {
            obs = env.reset(&mut stream(state.seed, state.step, tag::RESET));
            ep_len = 0;
        } else {
            obs = st.next_state;
        }
        let batch = mixed_batch(offline, &buffer, c.batch_size, &mut stream(state.seed, state.step, tag::BATCH))?;
        let anchor_idx = state.batch_indices(offline.len(), c.score_batch, tag::ANCHOR_IDX)?;
        let anchors = offline.gather(&anchor_idx).states;
        let m = state.train_on_batch(&batch, anchors.view())?;
        let eval = maybe_eval(state, Some(env), i + 1 == steps)?;
        if let Some(e) = &eval {
            last = e.clone();
        }
        let row = MetricsRow::new(m, eval.as_ref());
        dir.row(&row)?;
        rows.push(row);
        if state.step.is_multiple_of(c.checkpoint_every) {
            dir.checkpoint(state, &format!("step_{:07}", state.step))?;
        }
    }
    dir.checkpoint(state, "final")?;
    Ok(OnlineRun {
        initial,
        last,
        rows,
        buffer,
    })
}
