//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::diffcore::{Activation, AdamConfig};
use crate::envs::make_env;
use crate::error::{MeamError, Result};

/// Every hyperparameter of a training run. Defaults are the desk-scale
/// settings; [`MeamConfig::to_text`] materializes all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct MeamConfig {
    pub env: String,
    pub d_s: usize,
    pub d_a: usize,
    pub epsilon: f64,
    pub lambda: f64,
    pub inv_beta: f64,
    pub inv_eta: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub gamma: f64,
    pub pessimism: f64,
    pub target_rate: f64,
    pub ensemble_size: usize,
    pub flow_steps: usize,
    pub batch_size: usize,
    pub score_batch: usize,
    pub offline_steps: u64,
    pub online_steps: u64,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub hidden_width: usize,
    pub hidden_depth: usize,
    pub activation: Activation,
    pub time_clamp: f64,
    pub score_ema_rate: f64,
    pub init_alpha: f64,
    pub ode_rollout: bool,
    pub stochastic_targets: bool,
    /// Clip TD targets to the value range implied by the dataset rewards.
    pub clip_td_targets: bool,
    pub checkpoint_every: u64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    pub seed: u64,
    pub out_dir: String,
}

impl Default for MeamConfig {
    fn default() -> Self {
        Self {
            env: "bandit-zs".into(),
            d_s: 2,
            d_a: 2,
            epsilon: 0.2,
            lambda: 1.0,
            inv_beta: 5.0,
            inv_eta: 1.0,
            sigma_min: 0.3,
            sigma_max: 0.7,
            gamma: 0.99,
            pessimism: 0.5,
            target_rate: 5e-3,
            ensemble_size: 10,
            flow_steps: 10,
            batch_size: 64,
            score_batch: 64,
            offline_steps: 20_000,
            online_steps: 10_000,
            learning_rate: 3e-4,
            grad_clip: 1.0,
            hidden_width: 64,
            hidden_depth: 2,
            activation: Activation::Gelu,
            time_clamp: crate::flowkit::DEFAULT_TIME_CLAMP,
            score_ema_rate: 1e-3,
            init_alpha: 0.1,
            ode_rollout: false,
            stochastic_targets: false,
            clip_td_targets: true,
            checkpoint_every: 1000,
            eval_every: 1000,
            eval_episodes: 100,
            seed: 0,
            out_dir: "runs/meam".into(),
        }
    }
}

/// Weight initialization; the only scheme implemented.
pub const INIT_SCHEME: &str = "fan-in-uniform";

const KEYS: [&str; 35] = [
    "env",
    "d_s",
    "d_a",
    "epsilon",
    "lambda",
    "inv_beta",
    "inv_eta",
    "sigma_min",
    "sigma_max",
    "gamma",
    "pessimism",
    "target_rate",
    "ensemble_size",
    "flow_steps",
    "batch_size",
    "score_batch",
    "offline_steps",
    "online_steps",
    "learning_rate",
    "grad_clip",
    "hidden_width",
    "hidden_depth",
    "activation",
    "init",
    "time_clamp",
    "score_ema_rate",
    "init_alpha",
    "ode_rollout",
    "stochastic_targets",
    "clip_td_targets",
    "checkpoint_every",
    "eval_every",
    "eval_episodes",
    "seed",
    "out_dir",
];

impl MeamConfig {
    /// Defaults for a named environment, with its dimensions filled in.
    pub fn for_env(env: &str) -> Result<Self> {
        let e = make_env(env)?;
        Ok(Self {
            env: env.into(),
            d_s: e.state_dim(),
            d_a: e.action_dim(),
            ..Self::default()
        })
    }

    pub fn hidden(&self) -> Vec<usize> {
        vec![self.hidden_width; self.hidden_depth]
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            clip_norm: self.grad_clip,
            ..AdamConfig::default()
        }
    }

    /// Parses `key = value` lines. `#` starts a comment. Missing keys take
    /// their defaults; `d_s`/`d_a` default to the environment's dimensions.
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut problems = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                problems.push(format!("line {}: expected 'key = value', got '{line}'", ln + 1));
                continue;
            };
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                problems.push(format!("{k}: unknown key (line {})", ln + 1));
            } else if raw.insert(k.to_string(), (ln + 1, v.to_string())).is_some() {
                problems.push(format!("{k}: given more than once"));
            }
        }
        let mut cfg = Self::default();
        let env = raw.get("env").map(|(_, v)| v.clone()).unwrap_or(cfg.env.clone());
        match make_env(&env) {
            Ok(e) => {
                cfg.env = env;
                cfg.d_s = e.state_dim();
                cfg.d_a = e.action_dim();
            }
            Err(e) => problems.push(format!("env: {e}")),
        }
        for (k, (_, v)) in &raw {
            if let Err(msg) = cfg.set(k, v) {
                problems.push(format!("{k}: {msg}"));
            }
        }
        problems.extend(cfg.problems());
        if !problems.is_empty() {
            return Err(MeamError::Config(problems.join("; ")));
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse '{v}'"))
        }
        fn flag(v: &str) -> std::result::Result<bool, String> {
            match v {
                "true" | "1" => Ok(true),
                "false" | "0" => Ok(false),
                _ => Err(format!("expected true/false, got '{v}'")),
            }
        }
        match key {
            "env" => {}
            "d_s" => self.d_s = num(v)?,
            "d_a" => self.d_a = num(v)?,
            "epsilon" => self.epsilon = num(v)?,
            "lambda" => self.lambda = num(v)?,
            "inv_beta" => self.inv_beta = num(v)?,
            "inv_eta" => self.inv_eta = num(v)?,
            "sigma_min" => self.sigma_min = num(v)?,
            "sigma_max" => self.sigma_max = num(v)?,
            "gamma" => self.gamma = num(v)?,
            "pessimism" => self.pessimism = num(v)?,
            "target_rate" => self.target_rate = num(v)?,
            "ensemble_size" => self.ensemble_size = num(v)?,
            "flow_steps" => self.flow_steps = num(v)?,
            "batch_size" => self.batch_size = num(v)?,
            "score_batch" => self.score_batch = num(v)?,
            "offline_steps" => self.offline_steps = num(v)?,
            "online_steps" => self.online_steps = num(v)?,
            "learning_rate" => self.learning_rate = num(v)?,
            "grad_clip" => self.grad_clip = num(v)?,
            "hidden_width" => self.hidden_width = num(v)?,
            "hidden_depth" => self.hidden_depth = num(v)?,
            "activation" => self.activation = v.parse().map_err(|e: MeamError| e.to_string())?,
            "init" => {
                if v != INIT_SCHEME {
                    return Err(format!("only '{INIT_SCHEME}' is supported"));
                }
            }
            "time_clamp" => self.time_clamp = num(v)?,
            "score_ema_rate" => self.score_ema_rate = num(v)?,
            "init_alpha" => self.init_alpha = num(v)?,
            "ode_rollout" => self.ode_rollout = flag(v)?,
            "stochastic_targets" => self.stochastic_targets = flag(v)?,
            "clip_td_targets" => self.clip_td_targets = flag(v)?,
            "checkpoint_every" => self.checkpoint_every = num(v)?,
            "eval_every" => self.eval_every = num(v)?,
            "eval_episodes" => self.eval_episodes = num(v)?,
            "seed" => self.seed = num(v)?,
            "out_dir" => self.out_dir = v.to_string(),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Range violations, one message per offending key.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut check = |ok: bool, key: &str, want: &str| {
            if !ok {
                p.push(format!("{key}: must be {want}"));
            }
        };
        let pos = |v: f64| v.is_finite() && v > 0.0;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if let Ok(e) = make_env(&self.env) {
            check(self.d_s == e.state_dim(), "d_s", &format!("{} for {}", e.state_dim(), self.env));
            check(self.d_a == e.action_dim(), "d_a", &format!("{} for {}", e.action_dim(), self.env));
        }
        check(unit(self.epsilon), "epsilon", "in [0, 1]");
        check(self.lambda > 0.0 && self.lambda <= 1.0, "lambda", "in (0, 1]");
        check(pos(self.inv_beta), "inv_beta", "> 0");
        check(self.inv_eta.is_finite() && self.inv_eta >= 0.0, "inv_eta", ">= 0");
        check(pos(self.sigma_min), "sigma_min", "> 0");
        check(self.sigma_max.is_finite() && self.sigma_max >= self.sigma_min, "sigma_max", ">= sigma_min");
        check(unit(self.gamma), "gamma", "in [0, 1]");
        check(unit(self.pessimism), "pessimism", "in [0, 1]");
        check(unit(self.target_rate), "target_rate", "in [0, 1]");
        check(self.ensemble_size >= 2, "ensemble_size", ">= 2");
        check(self.flow_steps >= 1, "flow_steps", ">= 1");
        check(self.batch_size >= 1, "batch_size", ">= 1");
        check(self.score_batch >= 1, "score_batch", ">= 1");
        check(pos(self.learning_rate), "learning_rate", "> 0");
        check(pos(self.grad_clip), "grad_clip", "> 0");
        check(self.hidden_width >= 1, "hidden_width", ">= 1");
        check(self.time_clamp > 0.0 && self.time_clamp < 1.0, "time_clamp", "in (0, 1)");
        check(unit(self.score_ema_rate), "score_ema_rate", "in [0, 1]");
        check(pos(self.init_alpha), "init_alpha", "> 0");
        check(self.checkpoint_every >= 1, "checkpoint_every", ">= 1");
        check(self.eval_every >= 1, "eval_every", ">= 1");
        check(self.eval_episodes >= 1, "eval_episodes", ">= 1");
        check(!self.out_dir.is_empty(), "out_dir", "non-empty");
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(MeamError::Config(p.join("; ")))
        }
    }

    /// Every key with its resolved value, in a fixed order. Parsing the
    /// result gives back an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# meam resolved config\n");
        let vals: [(&str, String); 35] = [
            ("env", self.env.clone()),
            ("d_s", self.d_s.to_string()),
            ("d_a", self.d_a.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("lambda", self.lambda.to_string()),
            ("inv_beta", self.inv_beta.to_string()),
            ("inv_eta", self.inv_eta.to_string()),
            ("sigma_min", self.sigma_min.to_string()),
            ("sigma_max", self.sigma_max.to_string()),
            ("gamma", self.gamma.to_string()),
            ("pessimism", self.pessimism.to_string()),
            ("target_rate", self.target_rate.to_string()),
            ("ensemble_size", self.ensemble_size.to_string()),
            ("flow_steps", self.flow_steps.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("score_batch", self.score_batch.to_string()),
            ("offline_steps", self.offline_steps.to_string()),
            ("online_steps", self.online_steps.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("grad_clip", self.grad_clip.to_string()),
            ("hidden_width", self.hidden_width.to_string()),
            ("hidden_depth", self.hidden_depth.to_string()),
            ("activation", self.activation.to_string()),
            ("init", INIT_SCHEME.to_string()),
            ("time_clamp", self.time_clamp.to_string()),
            ("score_ema_rate", self.score_ema_rate.to_string()),
            ("init_alpha", self.init_alpha.to_string()),
            ("ode_rollout", self.ode_rollout.to_string()),
            ("stochastic_targets", self.stochastic_targets.to_string()),
            ("clip_td_targets", self.clip_td_targets.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("eval_episodes", self.eval_episodes.to_string()),
            ("seed", self.seed.to_string()),
            ("out_dir", self.out_dir.clone()),
        ];
        for (k, v) in vals {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
