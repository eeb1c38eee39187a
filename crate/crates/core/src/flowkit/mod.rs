//! Flow-matching policies: training loss, ODE and memoryless SDE samplers.

mod cfm;
mod field;
mod sample;
mod schedule;
mod score;

pub use cfm::{cfm_loss, cfm_loss_with, CfmOutput};
pub use field::{AffineField, VectorField, VectorFieldNet};
pub(crate) use field::assemble_input;
pub use sample::{integrate_ode, sample_memoryless_sde, sample_ode_terminal, uniform_grid, Dynamics, Trajectory};
pub use schedule::{clamp_time, noise_schedule_g, sample_linear_path, PathSample, BOUNDARY_GUARD, DEFAULT_TIME_CLAMP};
pub use score::analytical_score;
