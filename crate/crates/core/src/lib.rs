//! LSTM training with eligibility propagation (e-prop).
//!
//! The crate provides two gradient engines over a shared single-layer LSTM:
//! [`eprop`] computes gradients forward in time from per-weight eligibility traces and
//! online learning signals, and [`bptt`] computes exact gradients by backpropagation
//! through a recorded tape. On top of them sit first-order optimizers, the
//! sequential-MNIST and temporal-credit-assignment tasks, a CartPole DRQN agent and
//! the experiment harness used by the `eprop` command line tool.

pub mod bptt;
pub mod checkpoint;
pub mod eprop;
pub mod error;
pub mod grad;
pub mod harness;
pub mod lstm;
pub mod numerics;
pub mod optim;
pub mod rl;
pub mod tasks;
pub mod train;

pub use bptt::{bptt_gradients, truncated_bptt_gradients, Tape};
pub use eprop::{
    EligibilityState, EpropConfig, EpropSequence, FeedbackMatrix, FeedbackMode, SignalMode, TraceScale, TraceSet,
};
pub use error::{Error, Result};
pub use grad::{relative_error, GradientSet};
pub use lstm::{ConnId, Dims, GateActivations, GateId, LstmState, NetworkParams, OutputMode, StepRecord};
pub use numerics::{Matrix, Rng};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
