//! Multi-task traffic classification.
//!
//! Packet logs are segmented into flows ([`flow`]), every flow is labelled
//! for bandwidth and duration classes automatically ([`labels`]), and a 1D CNN
//! with one shared trunk and three softmax heads is trained on the resulting
//! mix of abundant auxiliary labels and scarce traffic-class labels
//! ([`mtl`]). [`baselines`] holds the single-task and transfer-learning
//! comparisons and [`harness`] runs seeded experiments and sweeps over them.

// `!(x > 0.0)` is used deliberately so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod flow;
pub mod harness;
pub mod labels;
pub mod model;
pub mod mtl;
pub mod nn;
pub mod synth;

pub use error::{Error, ErrorCategory, Result};
