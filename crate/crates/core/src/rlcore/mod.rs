//! Critic ensemble, the full training step, and the offline and online loops.

mod critic;
mod run;
mod state;

pub use critic::{
    critic_step, polyak_update, polyak_update_ensemble, td_target, td_target_from_values, value_bounds, CriticEnsemble, CriticOutput,
};
pub use run::{finetune_online, mixed_batch, read_metrics, train_offline, MetricsRow, OnlineRun, METRICS_HEADER};
pub use state::{MeamState, StepMetrics, STATE_MAGIC};
