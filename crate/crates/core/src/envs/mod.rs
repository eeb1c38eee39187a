//! Toy environments, offline dataset generators and policy evaluation.

mod bandit;
mod dataset;
mod eval;
mod maze;

use crate::error::{MeamError, Result};

pub use bandit::{gen_bandit_dataset, gen_three_mode_dataset, Gmm2Mode, ThreeModeBandit, ZeroSupportBandit};
pub use dataset::{Dataset, DATASET_MAGIC};
pub use eval::{bootstrap_ci, eval_policy, EvalStats};
pub use maze::{behavior_success_rate, gen_maze_dataset, BehaviorRoute, SparseMaze2D};

/// Names accepted wherever an environment is selected by string.
pub const ENV_NAMES: [&str; 4] = ["bandit-zs", "maze-sparse", "gmm-2mode", "bandit-3mode"];

/// Result of one environment transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

/// A deterministic episodic environment. Randomness enters only through
/// [`Env::reset`].
pub trait Env {
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn horizon(&self) -> usize;
    fn reset(&self, rng: &mut dyn rand::RngCore) -> Vec<f64>;
    /// Actions are clipped to `[-1, 1]` before use.
    fn step(&self, state: &[f64], action: &[f64]) -> Step;
}

/// Environment by registry name.
pub fn make_env(name: &str) -> Result<Box<dyn Env>> {
    match name {
        "bandit-zs" => Ok(Box::new(ZeroSupportBandit)),
        "maze-sparse" => Ok(Box::new(SparseMaze2D::default())),
        "gmm-2mode" => Ok(Box::new(Gmm2Mode)),
        "bandit-3mode" => Ok(Box::new(ThreeModeBandit)),
        other => Err(MeamError::Config(format!(
            "unknown environment '{other}' (valid: {})",
            ENV_NAMES.join(", ")
        ))),
    }
}

/// Offline dataset for a named environment. `n` counts rows for the
/// single-step environments and episodes for the maze.
pub fn gen_dataset(name: &str, n: usize, seed: u64) -> Result<Dataset> {
    match name {
        "bandit-zs" => gen_bandit_dataset(n, seed),
        "maze-sparse" => gen_maze_dataset(n, seed),
        "gmm-2mode" => Gmm2Mode::dataset(n, seed),
        "bandit-3mode" => gen_three_mode_dataset(n, seed),
        other => Err(MeamError::Config(format!(
            "unknown environment '{other}' (valid: {})",
            ENV_NAMES.join(", ")
        ))),
    }
}

pub(crate) fn clip_action(a: &[f64]) -> Vec<f64> {
    a.iter().map(|v| v.clamp(-1.0, 1.0)).collect()
}

#[cfg(test)]
mod tests;
