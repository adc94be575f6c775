//! Training loops for sequential MNIST and the temporal credit assignment task.

use std::path::PathBuf;
use std::time::Instant;

use super::config::{RunConfig, Task};
use super::metrics::{MetricsRow, RunningMean};
use crate::error::{Error, Result};
use crate::lstm::{Dims, NetworkParams};
use crate::numerics::Rng;
use crate::tasks::{
    generate_tca_batch, load_split, MnistDataset, PixelPermutation, SequenceSample, Split, DATA_DIR_ENV,
};
use crate::train::{evaluate_accuracy, Trainer};

/// Outcome of a supervised run.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedSummary {
    pub updates: u64,
    pub final_running_error: f64,
    pub last_test_accuracy: Option<f64>,
    pub best_test_accuracy: Option<f64>,
    /// Update (TCA) or epoch (MNIST) at which the `stop_at` threshold was met.
    pub reached_at: Option<u64>,
    pub params: NetworkParams,
}

/// Directory holding the MNIST IDX files: the config value, else the environment variable.
pub fn resolve_data_dir(cfg: &RunConfig) -> Result<PathBuf> {
    if let Some(dir) = &cfg.data_dir {
        return Ok(dir.clone());
    }
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .ok_or_else(|| Error::Config(format!("no data_dir configured and {DATA_DIR_ENV} is not set")))
}

/// Builds a trainer with parameters, feedback matrix and extensions drawn from `cfg`.
pub fn make_trainer(cfg: &RunConfig, dims: Dims, root: &Rng) -> Trainer {
    let params = NetworkParams::init(&mut root.substream("init"), dims).with_forget_bias_boost(cfg.forget_bias_delta);
    let mut trainer = Trainer::new(
        cfg.engine,
        params,
        cfg.optimizer_config(),
        cfg.eprop_config_for_len(1),
        &mut root.substream("feedback"),
    );
    if cfg.echo_per_length {
        trainer.per_length_echo = Some(cfg.echo_lambda);
    }
    trainer.clip_norm = cfg.clip();
    trainer
}

/// Runs a supervised task, handing every metrics row to `on_row` as it is produced.
pub fn run_supervised(cfg: &RunConfig, on_row: impl FnMut(&MetricsRow) -> Result<()>) -> Result<SupervisedSummary> {
    cfg.validate()?;
    match cfg.task {
        Task::Tca => run_tca(cfg, on_row),
        Task::Smnist | Task::Psmnist => run_mnist(cfg, on_row),
        other => Err(Error::Config(format!(
            "task '{}' is not a supervised task",
            other.name()
        ))),
    }
}

fn run_tca(cfg: &RunConfig, mut on_row: impl FnMut(&MetricsRow) -> Result<()>) -> Result<SupervisedSummary> {
    let root = Rng::new(cfg.seed);
    let mut trainer = make_trainer(cfg, Dims::new(4, cfg.cells, 2), &root);
    let mut data = root.substream("data");
    let tca = cfg.tca();
    let mut running = RunningMean::new(cfg.running_window);
    let clock = Instant::now();
    let mut reached_at = None;
    let mut step = 0u64;
    for _ in 0..cfg.updates {
        let batch = generate_tca_batch(&tca, &mut data, cfg.batch)?;
        let out = trainer.update(&batch)?;
        step += 1;
        let mean = running.push(out.error_rate);
        on_row(&MetricsRow {
            step,
            epoch: None,
            train_loss: out.mean_loss,
            train_error: out.error_rate,
            running_error: mean,
            test_accuracy: None,
            wallclock_ms: cfg.record_wallclock.then(|| clock.elapsed().as_millis()),
            peak_sequence_bytes: out.peak_memory_bytes,
        })?;
        if cfg.stop_at > 0.0 && running.is_full() && mean < cfg.stop_at {
            reached_at = Some(step);
            break;
        }
    }
    Ok(SupervisedSummary {
        updates: step,
        final_running_error: running.mean(),
        last_test_accuracy: None,
        best_test_accuracy: None,
        reached_at,
        params: trainer.params,
    })
}

/// Serialized samples for `indices`.
fn samples(ds: &MnistDataset, indices: &[usize], perm: Option<&PixelPermutation>) -> Result<Vec<SequenceSample>> {
    indices.iter().map(|&i| ds.sample(i, perm)).collect()
}

/// Test accuracy, serialized in chunks so the full test set never sits in memory at once.
pub fn mnist_accuracy(params: &NetworkParams, ds: &MnistDataset, perm: Option<&PixelPermutation>) -> Result<f64> {
    const CHUNK: usize = 256;
    let mut correct = 0.0;
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(CHUNK) {
        let s = samples(ds, chunk, perm)?;
        correct += evaluate_accuracy(params, &s) * s.len() as f64;
    }
    Ok(correct / ds.len().max(1) as f64)
}

fn run_mnist(cfg: &RunConfig, mut on_row: impl FnMut(&MetricsRow) -> Result<()>) -> Result<SupervisedSummary> {
    let dir = resolve_data_dir(cfg)?;
    let limit = |n: usize| if n == 0 { usize::MAX } else { n };
    let train = load_split(&dir, Split::Train)?.take(limit(cfg.train_size));
    let test = load_split(&dir, Split::Test)?.take(limit(cfg.test_size));
    if train.is_empty() || test.is_empty() {
        return Err(Error::Config("empty MNIST split".into()));
    }
    let root = Rng::new(cfg.seed);
    let pixels = train.rows * train.cols;
    let perm =
        (cfg.task == Task::Psmnist).then(|| PixelPermutation::random(pixels, &mut root.substream("permutation")));
    let mut trainer = make_trainer(cfg, Dims::new(1, cfg.cells, 10), &root);
    let mut shuffle = root.substream("data");
    let mut running = RunningMean::new(cfg.running_window);
    let clock = Instant::now();
    let mut step = 0u64;
    let mut last_acc = None;
    let mut best_acc: Option<f64> = None;
    let mut reached_at = None;
    'epochs: for epoch in 1..=cfg.epochs {
        let order = shuffle.permutation(train.len());
        let batches: Vec<&[usize]> = order.chunks(cfg.batch).collect();
        for (bi, idx) in batches.iter().enumerate() {
            let batch = samples(&train, idx, perm.as_ref())?;
            let out = trainer.update(&batch)?;
            step += 1;
            let mean = running.push(out.error_rate);
            let end_of_epoch = bi + 1 == batches.len();
            let evaluate = end_of_epoch && (epoch % cfg.eval_every == 0 || epoch == cfg.epochs);
            let acc = if evaluate {
                let a = mnist_accuracy(&trainer.params, &test, perm.as_ref())?;
                best_acc = Some(best_acc.map_or(a, |b| b.max(a)));
                last_acc = Some(a);
                Some(a)
            } else {
                None
            };
            on_row(&MetricsRow {
                step,
                epoch: Some(epoch),
                train_loss: out.mean_loss,
                train_error: out.error_rate,
                running_error: mean,
                test_accuracy: acc,
                wallclock_ms: cfg.record_wallclock.then(|| clock.elapsed().as_millis()),
                peak_sequence_bytes: out.peak_memory_bytes,
            })?;
            if let Some(a) = acc {
                if cfg.stop_at > 0.0 && a >= cfg.stop_at {
                    reached_at = Some(epoch as u64);
                    break 'epochs;
                }
            }
        }
    }
    Ok(SupervisedSummary {
        updates: step,
        final_running_error: running.mean(),
        last_test_accuracy: last_acc,
        best_test_accuracy: best_acc,
        reached_at,
        params: trainer.params,
    })
}
