//! Multi-class learning-to-help.
//!
//! A fixed client classifier `m` is paired with a trainable server classifier
//! `e` and a rejector `r` that decides, per input, whether the client answers
//! locally or the request is deferred to the server. This crate holds the
//! pure algorithmic pieces:
//!
//! - [`domain`]: labels, routes, cost constants and the exact four-outcome loss.
//! - [`models`]: linear and one-hidden-layer score functions with explicit backprop.
//! - [`losses`]: the stage-switching surrogate (cross-entropy for the server,
//!   weighted two-way log-softmax for the rejector) and its gradients.
//! - [`oracle`]: finite discrete worlds with exact Bayes rules, exact risks and
//!   a pointwise consistency checker for the surrogate.
//! - [`training`]: synchronous and stale-snapshot (asynchronous) SGD loops.
//! - [`deployment`]: pay-per-request accounting, intermittent availability and
//!   bounded-reject-rate stochastic post-hoc policies.
//! - [`synth`] and [`metrics`]: Gaussian-mixture data and contrastive evaluation.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and the
//! experiment harness live in the `l2h` companion crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod deployment;
pub mod domain;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod models;
pub mod oracle;
pub mod seed;
pub mod synth;
pub mod training;

pub use domain::{
    argmax_label, general_loss, generalized_loss, route_from_scores, CostParams, Dataset,
    FeatureVector, GeneralCosts, Label, LabeledExample, RngSeed, Route,
};
pub use error::{Error, Result};
pub use models::{Architecture, HybridSystem, ScoreModel};
