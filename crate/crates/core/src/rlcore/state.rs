use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::adjoint::{am_loss, interpolate_ref, solve_lean_adjoint, terminal_adjoint, AdjointPath, TiltKnobs};
use crate::config::MeamConfig;
use crate::diffcore::{load_net, save_net, AdamState, NetParams};
use crate::envs::{eval_policy, Dataset, Env, EvalStats};
use crate::error::{MeamError, Result};
use crate::expansion::{actor_loss, mix_batch, DualTemp, ExpansionActor};
use crate::flowkit::{cfm_loss, integrate_ode, sample_memoryless_sde, sample_ode_terminal, Trajectory, VectorFieldNet};
use crate::maxent::{score_loss, NoiseSpec, ScoreNet};
use crate::rng::{randn, stream, MeamRng};

use super::critic::{critic_step, polyak_update, polyak_update_ensemble, td_target, value_bounds, CriticEnsemble};

/// Stream tags; each stochastic component draws from its own stream.
pub(crate) mod tag {
    pub const INIT: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const TD: u64 = 3;
    pub const ACTOR: u64 = 4;
    pub const MIX: u64 = 5;
    pub const CFM: u64 = 6;
    pub const ANCHOR_IDX: u64 = 7;
    pub const ANCHOR: u64 = 8;
    pub const SCORE: u64 = 9;
    pub const ADJOINT: u64 = 10;
    pub const EVAL: u64 = 11;
    pub const EXPLORE: u64 = 12;
    pub const RESET: u64 = 13;
}

/// Per-step training metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub cfm_loss: f64,
    pub am_loss: f64,
    pub critic_loss: f64,
    pub score_loss: f64,
    pub q_mean: f64,
    pub alpha: f64,
    pub actor_logpi: f64,
}

/// Everything a training run mutates.
#[derive(Debug, Clone)]
pub struct MeamState {
    pub config: MeamConfig,
    /// Mixture prior, trained by flow matching on the mixed batch.
    pub base: VectorFieldNet,
    /// Policy being tilted by adjoint matching.
    pub fine: VectorFieldNet,
    /// Slow copy of `fine`; the previous iterate and the score anchor policy.
    pub target: VectorFieldNet,
    pub critic: CriticEnsemble,
    pub critic_target: CriticEnsemble,
    pub actor: ExpansionActor,
    pub dual: DualTemp,
    pub score: ScoreNet,
    /// Slow copy of `score`, used for queries.
    pub score_ema: ScoreNet,
    pub adam_base: AdamState,
    pub adam_fine: AdamState,
    pub adam_critic: Vec<AdamState>,
    pub adam_actor: AdamState,
    pub adam_score: AdamState,
    pub step: u64,
    pub seed: u64,
    /// TD-target clamp, refreshed from the data by [`MeamState::train_step`]
    /// when `clip_td_targets` is set.
    pub value_bounds: Option<(f64, f64)>,
}

fn at_step(step: u64, stage: &str) -> impl Fn(MeamError) -> MeamError + '_ {
    move |e| match e {
        MeamError::Training { msg, .. } => MeamError::Training {
            step,
            msg: format!("{stage}: {msg}"),
        },
        other => MeamError::Training {
            step,
            msg: format!("{stage}: {other}"),
        },
    }
}

impl MeamState {
    pub fn new(config: &MeamConfig) -> Result<Self> {
        config.validate()?;
        let c = config;
        let hidden = c.hidden();
        let mut rng = stream(c.seed, 0, tag::INIT);
        let base = VectorFieldNet::mlp(c.d_a, c.d_s, &hidden, c.activation, &mut rng)?;
        let critic = CriticEnsemble::mlp(c.ensemble_size, c.d_s, c.d_a, &hidden, c.activation, &mut rng)?;
        let actor = ExpansionActor::mlp(c.d_s, c.d_a, &hidden, c.activation, &mut rng)?;
        let score = ScoreNet::mlp(c.d_a, c.d_s, &hidden, c.activation, &mut rng)?;
        let adam = c.adam();
        Ok(Self {
            config: c.clone(),
            adam_base: AdamState::for_net(base.net(), adam),
            adam_fine: AdamState::for_net(base.net(), adam),
            adam_critic: critic.members().iter().map(|m| AdamState::for_net(m, adam)).collect(),
            adam_actor: AdamState::for_net(actor.net(), adam),
            adam_score: AdamState::for_net(score.net(), adam),
            dual: DualTemp::new(c.d_a, c.init_alpha, adam)?,
            fine: base.clone(),
            target: base.clone(),
            base,
            critic_target: critic.clone(),
            critic,
            actor,
            score_ema: score.clone(),
            score,
            step: 0,
            seed: c.seed,
            value_bounds: None,
        })
    }

    pub fn knobs(&self) -> Result<TiltKnobs> {
        TiltKnobs::new(self.config.lambda, self.config.inv_beta, self.config.inv_eta)
    }

    fn rng(&self, tag: u64) -> MeamRng {
        stream(self.seed, self.step, tag)
    }

    /// Uniform batch indices with replacement for the current step.
    pub fn batch_indices(&self, len: usize, size: usize, tag: u64) -> Result<Vec<usize>> {
        if len == 0 {
            return Err(MeamError::Usage("cannot sample from an empty dataset".into()));
        }
        let mut rng = self.rng(tag);
        Ok((0..size).map(|_| rng.gen_range(0..len)).collect())
    }

    fn check_dims(&self, data: &Dataset) -> Result<()> {
        if data.d_s != self.config.d_s || data.d_a != self.config.d_a {
            return Err(MeamError::Config(format!(
                "dataset dims (d_s={}, d_a={}) do not match config (d_s={}, d_a={})",
                data.d_s, data.d_a, self.config.d_s, self.config.d_a
            )));
        }
        Ok(())
    }

    /// One full training step on a batch drawn uniformly from `data`.
    pub fn train_step(&mut self, data: &Dataset) -> Result<StepMetrics> {
        self.check_dims(data)?;
        self.set_value_bounds(data)?;
        let idx = self.batch_indices(data.len(), self.config.batch_size, tag::BATCH)?;
        let batch = data.gather(&idx);
        let anchor_idx = self.batch_indices(data.len(), self.config.score_batch, tag::ANCHOR_IDX)?;
        let anchor_states = data.gather(&anchor_idx).states;
        self.train_on_batch(&batch, anchor_states.view())
    }

    /// Sets [`MeamState::value_bounds`] from the rewards in `data`, or clears
    /// it when clipping is off.
    pub fn set_value_bounds(&mut self, data: &Dataset) -> Result<()> {
        self.value_bounds = if self.config.clip_td_targets {
            Some(value_bounds(data.rewards.view(), self.config.gamma)?)
        } else {
            None
        };
        Ok(())
    }

    /// Forward trajectory and lean adjoint that feed the matching loss.
    pub fn adjoint_inputs(&self, s: ArrayView2<f64>) -> Result<(Trajectory, AdjointPath)> {
        let c = &self.config;
        let knobs = self.knobs()?;
        let reference = interpolate_ref(&self.base, &self.target, c.lambda)?;
        let mut rng = self.rng(tag::ADJOINT);
        let x0 = randn(&mut rng, s.nrows(), c.d_a);
        let traj = if c.ode_rollout {
            integrate_ode(&reference, s, x0.view(), c.flow_steps)?
        } else {
            sample_memoryless_sde(&reference, s, x0.view(), c.flow_steps, c.time_clamp, &mut rng)?
        };
        let y1 = terminal_adjoint(traj.terminal().view(), s, &self.critic, &self.score_ema, &knobs, c.sigma_min)?;
        let adj = solve_lean_adjoint(&traj, &reference, y1)?;
        Ok((traj, adj))
    }

    /// Critic and actor, mixture prior, score, adjoint matching, targets.
    pub fn train_on_batch(&mut self, batch: &Dataset, anchor_states: ArrayView2<f64>) -> Result<StepMetrics> {
        let step = self.step;
        let c = self.config.clone();
        let s = batch.states.view();
        let a = batch.actions.view();

        // 1. Critic toward pessimistic TD targets, then the expansion actor.
        let y = td_target(
            &self.critic_target,
            &self.fine,
            batch,
            c.gamma,
            c.pessimism,
            c.flow_steps,
            self.value_bounds,
            &mut self.rng(tag::TD),
        )
        .map_err(at_step(step, "td target"))?;
        let crit = critic_step(&mut self.critic, &mut self.adam_critic, s, a, y.view()).map_err(at_step(step, "critic"))?;
        let act = actor_loss(&self.actor, &self.critic, &self.dual, s, a, &mut self.rng(tag::ACTOR))
            .map_err(at_step(step, "actor"))?;
        self.adam_actor
            .step(self.actor.net_mut(), &act.grads)
            .map_err(at_step(step, "actor"))?;
        self.dual.update(act.mean_log_pi).map_err(at_step(step, "temperature"))?;

        // 2. Mixture prior on dataset actions with an epsilon share of actor targets.
        let mixed = mix_batch(s, a, &self.actor, c.epsilon, c.stochastic_targets, &mut self.rng(tag::MIX))
            .map_err(at_step(step, "mix batch"))?;
        let cfm = cfm_loss(&self.base, s, mixed.actions.view(), &mut self.rng(tag::CFM)).map_err(at_step(step, "cfm"))?;
        self.adam_base.step(self.base.net_mut(), &cfm.grads).map_err(at_step(step, "cfm"))?;

        // 3. Score model on samples of the anchor policy.
        let mut anchor_rng = self.rng(tag::ANCHOR);
        let x0 = randn(&mut anchor_rng, anchor_states.nrows(), c.d_a);
        let anchors = sample_ode_terminal(&self.target, anchor_states, x0.view(), c.flow_steps).map_err(at_step(step, "anchors"))?;
        let spec = NoiseSpec::new(c.sigma_min, c.sigma_max)?;
        let sc = score_loss(&self.score, anchor_states, anchors.view(), &spec, &mut self.rng(tag::SCORE))
            .map_err(at_step(step, "score"))?;
        self.adam_score.step(self.score.net_mut(), &sc.grads).map_err(at_step(step, "score"))?;
        polyak_update(self.score.net(), self.score_ema.net_mut(), c.score_ema_rate)?;

        // 4. Adjoint matching of the fine flow.
        let (traj, adj) = self.adjoint_inputs(s).map_err(at_step(step, "adjoint"))?;
        let reference = interpolate_ref(&self.base, &self.target, c.lambda)?;
        let am = am_loss(&self.fine, &reference, &traj, &adj).map_err(at_step(step, "adjoint matching"))?;
        if !am.loss.is_finite() || !am.grads.is_finite() {
            return Err(MeamError::Training {
                step,
                msg: format!("non-finite adjoint matching loss {}", am.loss),
            });
        }
        self.adam_fine.step(self.fine.net_mut(), &am.grads).map_err(at_step(step, "adjoint matching"))?;

        // 5. Slow targets.
        polyak_update_ensemble(&self.critic, &mut self.critic_target, c.target_rate)?;
        polyak_update(self.fine.net(), self.target.net_mut(), c.target_rate)?;

        self.step += 1;
        Ok(StepMetrics {
            step: self.step,
            cfm_loss: cfm.loss,
            am_loss: am.loss,
            critic_loss: crit.loss,
            score_loss: sc.loss,
            q_mean: crit.q_mean,
            alpha: self.dual.alpha(),
            actor_logpi: act.mean_log_pi,
        })
    }

    /// Deterministic-ODE actions from the fine flow, clipped.
    pub fn act_ode<R: Rng + ?Sized>(&self, s: ArrayView2<f64>, rng: &mut R) -> Result<Array2<f64>> {
        let x0 = randn(rng, s.nrows(), self.config.d_a);
        Ok(sample_ode_terminal(&self.fine, s, x0.view(), self.config.flow_steps)?.mapv(|v| v.clamp(-1.0, 1.0)))
    }

    /// Memoryless-SDE actions from the fine flow, clipped.
    pub fn act_sde<R: Rng + ?Sized>(&self, s: ArrayView2<f64>, rng: &mut R) -> Result<Array2<f64>> {
        let x0 = randn(rng, s.nrows(), self.config.d_a);
        let traj = sample_memoryless_sde(&self.fine, s, x0.view(), self.config.flow_steps, self.config.time_clamp, rng)?;
        Ok(traj.terminal().mapv(|v| v.clamp(-1.0, 1.0)))
    }

    /// ODE-policy evaluation. Uses a fixed stream, so repeated calls on the
    /// same weights agree.
    pub fn evaluate(&self, env: &dyn Env, episodes: usize) -> Result<EvalStats> {
        let mut policy_rng = stream(self.seed, 0, tag::EVAL);
        let mut env_rng = stream(self.seed, 1, tag::EVAL);
        eval_policy(env, |s| self.act_ode(s, &mut policy_rng), episodes, &mut env_rng)
    }
}

/// Checkpoint directory format marker.
pub const STATE_MAGIC: &str = "meam-state v1";

impl MeamState {
    /// Writes one file per network plus the resolved config and counters.
    /// Optimizer moments are not saved.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.txt"), self.config.to_text())?;
        fs::write(
            dir.join("state.txt"),
            format!(
                "{STATE_MAGIC}\nstep = {}\nseed = {}\nlog_alpha = {}\n",
                self.step,
                self.seed,
                self.dual.log_alpha()
            ),
        )?;
        for (name, net) in self.named_nets() {
            save_net(net, &dir.join(format!("{name}.net")))?;
        }
        Ok(())
    }

    fn named_nets(&self) -> Vec<(String, &NetParams)> {
        let mut v = vec![
            ("base".to_string(), self.base.net()),
            ("fine".to_string(), self.fine.net()),
            ("target".to_string(), self.target.net()),
            ("actor".to_string(), self.actor.net()),
            ("score".to_string(), self.score.net()),
            ("score_ema".to_string(), self.score_ema.net()),
        ];
        for (e, m) in self.critic.members().iter().enumerate() {
            v.push((format!("critic_{e}"), m));
        }
        for (e, m) in self.critic_target.members().iter().enumerate() {
            v.push((format!("critic_target_{e}"), m));
        }
        v
    }

    /// Restores a checkpoint written by [`MeamState::save`]. Adam moments
    /// start fresh.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let config = MeamConfig::load(dir.join("config.txt"))?;
        let meta = fs::read_to_string(dir.join("state.txt"))?;
        let mut lines = meta.lines();
        match lines.next() {
            Some(STATE_MAGIC) => {}
            other => {
                return Err(MeamError::Format(format!(
                    "checkpoint version mismatch: expected '{STATE_MAGIC}', found '{}'",
                    other.unwrap_or("")
                )))
            }
        }
        let mut step = None;
        let mut seed = None;
        let mut log_alpha = None;
        for line in lines {
            let Some((k, v)) = line.split_once('=') else { continue };
            let v = v.trim();
            let bad = || MeamError::Format(format!("state.txt: bad value '{v}' for {}", k.trim()));
            match k.trim() {
                "step" => step = Some(v.parse::<u64>().map_err(|_| bad())?),
                "seed" => seed = Some(v.parse::<u64>().map_err(|_| bad())?),
                "log_alpha" => log_alpha = Some(v.parse::<f64>().map_err(|_| bad())?),
                _ => return Err(MeamError::Format(format!("state.txt: unknown key '{}'", k.trim()))),
            }
        }
        let missing = |k: &str| MeamError::Format(format!("state.txt lacks {k}"));
        let mut st = MeamState::new(&config)?;
        st.step = step.ok_or_else(|| missing("step"))?;
        st.seed = seed.ok_or_else(|| missing("seed"))?;
        st.dual.set_log_alpha(log_alpha.ok_or_else(|| missing("log_alpha"))?);
        let net = |name: &str| load_net(&dir.join(format!("{name}.net")));
        let (ds, da) = (config.d_s, config.d_a);
        st.base = VectorFieldNet::new(net("base")?, da, ds)?;
        st.fine = VectorFieldNet::new(net("fine")?, da, ds)?;
        st.target = VectorFieldNet::new(net("target")?, da, ds)?;
        st.actor = ExpansionActor::new(net("actor")?, ds, da)?;
        st.score = ScoreNet::new(net("score")?, da, ds)?;
        st.score_ema = ScoreNet::new(net("score_ema")?, da, ds)?;
        let members = |prefix: &str| {
            (0..config.ensemble_size)
                .map(|e| net(&format!("{prefix}_{e}")))
                .collect::<Result<Vec<_>>>()
        };
        st.critic = CriticEnsemble::new(members("critic")?, ds, da)?;
        st.critic_target = CriticEnsemble::new(members("critic_target")?, ds, da)?;
        let fresh = MeamState::new(&config)?;
        if !(st.base.net().same_shape(fresh.base.net())
            && st.critic.same_shape(&fresh.critic)
            && st.actor.net().same_shape(fresh.actor.net())
            && st.score.net().same_shape(fresh.score.net()))
        {
            return Err(MeamError::Format("checkpoint networks do not match the saved config".into()));
        }
        Ok(st)
    }

    /// Swaps in a new config for continued training, keeping the weights,
    /// step counter and temperature. Optimizer moments restart. The
    /// environment and network shapes must not change.
    pub fn reconfigure(&mut self, config: &MeamConfig) -> Result<()> {
        config.validate()?;
        let old = &self.config;
        let mut diffs = Vec::new();
        if config.env != old.env {
            diffs.push(format!("env ({} vs {})", old.env, config.env));
        }
        let shape = |c: &MeamConfig| (c.d_s, c.d_a, c.hidden_width, c.hidden_depth, c.ensemble_size, c.activation);
        if shape(config) != shape(old) {
            diffs.push("network shape (d_s, d_a, hidden_width, hidden_depth, ensemble_size, activation)".into());
        }
        if !diffs.is_empty() {
            return Err(MeamError::Config(format!("config does not match the checkpoint: {}", diffs.join(", "))));
        }
        let adam = config.adam();
        let log_alpha = self.dual.log_alpha();
        self.dual = DualTemp::new(config.d_a, config.init_alpha, adam)?;
        self.dual.set_log_alpha(log_alpha);
        self.adam_base = AdamState::for_net(self.base.net(), adam);
        self.adam_fine = AdamState::for_net(self.fine.net(), adam);
        self.adam_critic = self.critic.members().iter().map(|m| AdamState::for_net(m, adam)).collect();
        self.adam_actor = AdamState::for_net(self.actor.net(), adam);
        self.adam_score = AdamState::for_net(self.score.net(), adam);
        self.seed = config.seed;
        self.config = config.clone();
        Ok(())
    }
}
