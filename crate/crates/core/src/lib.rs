//! Revisionist integral deferred correction (RIDC) with adaptive step-size
//! control.
//!
//! A forward-Euler predictor and a stack of first-order correctors run as a
//! pipeline, each level lagging the one below. Levels can share the
//! predictor's grid or pick their own steps under error control.

// `!(a < b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod controller;
pub mod harness;
pub mod pipeline;
pub mod problems;
pub mod steppers;
pub mod weights;

pub use controller::{select_step, ControlDecision, ControlParams};
pub use pipeline::{execute, run_pipelined, run_serial, Estimator, Mode, PipelineConfig, RunError, RunTrace};
pub use problems::{IvpSystem, ReferenceSolution};
