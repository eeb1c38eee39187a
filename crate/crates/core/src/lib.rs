pub mod adjoint;
pub mod config;
pub mod diffcore;
pub mod expansion;
pub mod flowkit;
pub mod maxent;
pub mod oracle;
pub mod envs;
pub mod rlcore;
pub mod rng;
pub mod error;

pub use error::{MeamError, Result};
