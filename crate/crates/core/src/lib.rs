#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod band;
pub mod conjugate;
pub mod credible;
pub mod error;
pub mod golden;
pub mod harness;
pub mod model;
pub mod quadform;
pub mod rng;
pub mod sampling;

pub use error::{Error, Result};
