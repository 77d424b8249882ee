//! Traffic speed-field reconstruction with physics-informed deep operator
//! networks, plus the LWR solver, input-function generators and I/O around it.
//!
//! Validation code throughout uses `!(x > 0.0)` so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod dataio;
pub mod error;
pub mod funcgen;
pub mod math;
pub mod operator;
pub mod oracle;
pub mod physics;
pub mod rng;

pub use error::{Error, ErrorKind, Result};
