//! Inference of collaborative activities from multi-actor GPS, scene-feature
//! and face-detection streams.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod gp;
pub mod ids;
pub mod io;
pub mod model;
pub mod par;
pub mod posteriors;
pub mod rjmcmc;
pub mod sim;
pub mod stats;
pub mod summarize;

pub use error::{Error, Result};
pub use ids::{ActorId, TypeIdx};
