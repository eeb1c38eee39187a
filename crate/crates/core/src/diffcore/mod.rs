//! Dense feed-forward networks with reverse-mode gradients.
//!
//! Only what small MLPs need: affine layers, elementwise activations, and
//! vector-Jacobian products with respect to parameters and inputs. Loss
//! functions live with their callers, which hand output cotangents to
//! [`GradTape`].

mod adam;
mod checkpoint;
pub mod gradcheck;
mod net;

pub use adam::{AdamConfig, AdamState, AdamStepInfo};
pub use checkpoint::{load_net, read_net, save_net, write_net, NET_MAGIC};
pub use net::{Activation, GradTape, Layer, NetGrads, NetParams};
