//! Federated learning over resource-constrained wireless uplinks.
//!
//! Simulates gradient descent where devices upload gradients either
//! digitally (stochastic quantisation, orthogonal subbands, fixed-rate
//! outage) or by over-the-air computation (truncated channel inversion with
//! imperfect CSI), evaluates the matching closed-form convergence bounds, and
//! optimises the per-device inclusion probabilities.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod channel;
pub mod config;
pub mod error;
pub mod exec;
pub mod harness;
pub mod learn;
pub mod optimize;
pub mod quantize;
pub mod rng;
pub mod sampler;
pub mod table;

pub use config::{DeviceProfile, LearningConstants, PowerMode, Scheme, SystemConfig};
pub use error::{Error, Result};
pub use exec::Exec;
