//! Training toolkit for multilayer perceptrons under five error-transport
//! rules: exact backpropagation (BP), feedback alignment (FA), direct
//! feedback alignment (DFA), and the bidirectional variants BFA and BDFA
//! whose feedback weights are themselves trained.
//!
//! The crate also ships the diagnostics that make the asymmetric-transport
//! story measurable: finite-difference gradient oracles, alignment angles
//! between pseudo-gradients and true BP gradients, feedback-fidelity scores,
//! and a linear probe that tracks how a trained feedback matrix approaches
//! the pseudoinverse direction of the forward weights.
//!
//! Everything numeric is generic over the [`Scalar`] type; the experiment
//! harness and the concrete aliases below pin `f64`.

pub mod datasets;
pub mod diagnostics;
pub mod harness;
pub mod network;
pub mod numerics;
pub mod rules;

pub use numerics::{Mat, RngState, Scalar, ShapeError};

/// Dense `f32` matrix.
pub type Mat32 = numerics::Mat<f32>;
/// Dense `f64` matrix, the precision all shipped experiments use.
pub type Mat64 = numerics::Mat<f64>;
/// `f64` dataset as produced by the loaders in the harness.
pub type Dataset64 = datasets::Dataset<f64>;
/// `f64` forward classifier.
pub type ForwardNet64 = network::ForwardNet<f64>;
/// `f64` mirrored generative net.
pub type BackwardNet64 = network::BackwardNet<f64>;
/// `f64` feedback channel.
pub type FeedbackChannel64 = rules::FeedbackChannel<f64>;
