//! Experiment configuration, training loops, gradient checks and log comparison.

pub mod compare;
pub mod config;
pub mod gradcheck;
pub mod memory;
pub mod metrics;
pub mod supervised;

pub use compare::{compare, Comparison, GroupStats, MeanSd, RunGroup};
pub use config::{RunConfig, Task};
pub use gradcheck::{gradcheck, CheckResult, GradcheckReport, GradcheckSettings};
pub use memory::{memory_report, render_memory_report, MemoryRow};
pub use metrics::{write_metrics, MetricsRow, MetricsTable, MetricsWriter, RunningMean, METRICS_HEADER};
pub use supervised::{make_trainer, mnist_accuracy, resolve_data_dir, run_supervised, SupervisedSummary};

use crate::error::Result;
use crate::rl::{drqn_train, DrqnLogRow, DrqnSummary};

/// Gradient-check settings taken from a run configuration.
pub fn gradcheck_settings(cfg: &RunConfig) -> GradcheckSettings {
    GradcheckSettings {
        instances: cfg.instances,
        cells: cfg.cells,
        seq_len: cfg.seq_len,
        fd_step: cfg.fd_step,
        seed: cfg.seed,
        ..GradcheckSettings::default()
    }
}

/// Recurrent Q-learning on cart-pole as configured.
pub fn run_cartpole(cfg: &RunConfig, on_row: impl FnMut(&DrqnLogRow)) -> Result<DrqnSummary> {
    cfg.validate()?;
    drqn_train(&cfg.drqn()?, on_row)
}
