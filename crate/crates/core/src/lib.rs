//! Adaptive curriculum learning for binary classifiers trained on
//! inconsistently labelled data.
//!
//! A [`scheduler::SchedulerState`] watches the model's predictions batch by
//! batch, keeps a queue of confidences of misclassified samples and a queue
//! of prediction certainties, and drops from the loss the samples whose
//! labelled-class probability falls below `mean + θ·std` of the first queue.
//! The rest of the crate is the engine around it: dense numerics, a small
//! MLP with poly-scheduled SGD, synthetic noisy-label data, group k-fold
//! splitting, metrics and an experiment harness.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which the harness uses throughout.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod scalar;
pub mod scheduler;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = numerics::Matrix<f64>;
pub type ProbabilityRow = numerics::ProbabilityRow<f64>;
pub type Mlp = model::Mlp<f64>;
pub type Gradients = model::Gradients<f64>;
pub type OptimizerState = model::OptimizerState<f64>;
pub type Sgd = model::Sgd<f64>;
pub type BoundedStatQueue = scheduler::BoundedStatQueue<f64>;
pub type SchedulerState = scheduler::SchedulerState<f64>;

pub type Matrix32 = numerics::Matrix<f32>;
pub type Mlp32 = model::Mlp<f32>;
pub type SchedulerState32 = scheduler::SchedulerState<f32>;
