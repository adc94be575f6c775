//! Temporal credit assignment task.
//!
//! Four input channels: `left` and `right` carry U(0,1) noise at every step, `cue`
//! marks (with probability `cue_prob`) the steps of the first `cue_window` steps at which
//! the two sides are compared, and `done` is 1 only at the last step. The target is the
//! side that had the larger value at more cued steps. After the cue window comes a silent
//! delay and then the single `done` step.

use std::io::Write;

use super::SequenceSample;
use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

const CHANNELS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delay {
    Fixed(usize),
    /// Drawn uniformly from `min..=max` for every sample.
    Uniform {
        min: usize,
        max: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcaConfig {
    pub delay: Delay,
    pub cue_window: usize,
    pub cue_prob: f64,
}

impl TcaConfig {
    pub fn with_delay(delay: Delay) -> Self {
        Self {
            delay,
            cue_window: 15,
            cue_prob: 0.5,
        }
    }

    /// Sequence length for a given delay: cue window, delay, and the final `done` step.
    pub fn length_for(&self, delay: usize) -> usize {
        self.cue_window + delay + 1
    }

    pub fn validate(&self) -> Result<()> {
        if let Delay::Uniform { min, max } = self.delay {
            if min > max {
                return Err(Error::Config(format!("delay range {min}..={max} is empty")));
            }
        }
        if self.cue_window == 0 || !(self.cue_prob > 0.0 && self.cue_prob <= 1.0) {
            return Err(Error::Config(
                "cue window must be non-empty and cue_prob in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

impl Default for TcaConfig {
    fn default() -> Self {
        Self::with_delay(Delay::Fixed(10))
    }
}

/// One sample; draws are repeated until the cued comparison has a strict winner.
pub fn generate_tca_sample(cfg: &TcaConfig, rng: &mut Rng) -> SequenceSample {
    let delay = match cfg.delay {
        Delay::Fixed(d) => d,
        Delay::Uniform { min, max } => min + rng.below(max - min + 1),
    };
    let len = cfg.length_for(delay);
    loop {
        let mut inputs = vec![0.0; len * CHANNELS];
        for t in 0..len {
            let row = &mut inputs[t * CHANNELS..(t + 1) * CHANNELS];
            row[0] = rng.uniform();
            row[1] = rng.uniform();
            if t < cfg.cue_window && rng.bernoulli(cfg.cue_prob) {
                row[2] = 1.0;
            }
            if t + 1 == len {
                row[3] = 1.0;
            }
        }
        if let Some(label) = winner(&inputs) {
            return SequenceSample {
                inputs,
                dim: CHANNELS,
                label,
            };
        }
    }
}

/// Side with more wins over the cued steps, or `None` for a tie (including no cues at all).
pub fn winner(inputs: &[f64]) -> Option<usize> {
    let (mut left, mut right) = (0usize, 0usize);
    for x in inputs.chunks_exact(CHANNELS) {
        if x[2] == 1.0 {
            if x[0] > x[1] {
                left += 1;
            } else if x[1] > x[0] {
                right += 1;
            }
        }
    }
    match left.cmp(&right) {
        std::cmp::Ordering::Greater => Some(LEFT),
        std::cmp::Ordering::Less => Some(RIGHT),
        std::cmp::Ordering::Equal => None,
    }
}

pub fn generate_tca_batch(cfg: &TcaConfig, rng: &mut Rng, batch: usize) -> Result<Vec<SequenceSample>> {
    if batch == 0 {
        return Err(Error::InvalidArgument("batch must be >= 1".into()));
    }
    cfg.validate()?;
    Ok((0..batch).map(|_| generate_tca_sample(cfg, rng)).collect())
}

/// CSV with one row per (sample, step): `sample,step,left,right,cue,done,label`.
pub fn write_tca_csv<W: Write>(batch: &[SequenceSample], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sample", "step", "left", "right", "cue", "done", "label"])
        .map_err(csv_err)?;
    for (i, s) in batch.iter().enumerate() {
        for (t, x) in s.steps().enumerate() {
            out.write_record([
                i.to_string(),
                t.to_string(),
                x[0].to_string(),
                x[1].to_string(),
                x[2].to_string(),
                x[3].to_string(),
                s.label.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
