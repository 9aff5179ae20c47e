//! Background-aware alpha matting: compositing, background distortion, a
//! seven-channel generator with a patch discriminator, losses, metrics,
//! training and evaluation.

// Negated float comparisons below are there to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distort;
pub mod error;
pub mod harness;
pub mod imagecore;
pub mod losses;
pub mod metrics;
pub mod netdisc;
pub mod netgen;
pub mod nn;
pub mod trainer;

pub use error::{Error, Result};
