//! Critical load restoration on radial feeders with evolution-strategies
//! policies and a sequential meta-initialization.
//!
//! [`grid`] holds feeders and the linearized power flow, [`scenario`] builds
//! task families with forecast noise, [`env`] is the step-wise environment,
//! [`policy`] and [`es`] train controllers, [`meta`] threads an initialization
//! across tasks, [`metrics`] scores runs and [`experiment`] drives the CLI.

// Range checks are written `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod es;
pub mod experiment;
pub mod error;
pub mod fixtures;
pub mod grid;
pub mod meta;
pub mod metrics;
pub mod policy;
pub mod scenario;
pub mod seed;

pub use error::{Error, Result};
