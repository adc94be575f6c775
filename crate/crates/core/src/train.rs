//! Batch gradient computation shared by the supervised tasks.

use rayon::prelude::*;

use crate::bptt::{bptt_gradients, step_loss, Tape};
use crate::eprop::{EpropConfig, EpropSequence, FeedbackMatrix, FeedbackMode};
use crate::error::{Error, Result};
use crate::grad::GradientSet;
use crate::lstm::{LstmState, NetworkParams, OutputMode};
use crate::numerics::{argmax, Rng};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::tasks::SequenceSample;

/// Gradient engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    EpropSymmetric,
    EpropRandom,
    Bptt,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::EpropSymmetric => "eprop-symmetric",
            Engine::EpropRandom => "eprop-random",
            Engine::Bptt => "bptt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "eprop-symmetric" | "eprop" => Ok(Engine::EpropSymmetric),
            "eprop-random" => Ok(Engine::EpropRandom),
            "bptt" => Ok(Engine::Bptt),
            other => Err(Error::Config(format!("unknown engine '{other}'"))),
        }
    }

    pub fn is_eprop(self) -> bool {
        self != Engine::Bptt
    }

    pub fn feedback_mode(self) -> FeedbackMode {
        match self {
            Engine::EpropRandom => FeedbackMode::Random,
            _ => FeedbackMode::Symmetric,
        }
    }
}

/// Per-sequence result of a forward/gradient pass.
#[derive(Debug, Clone)]
pub struct SequenceOutcome {
    pub grads: GradientSet,
    pub loss: f64,
    pub correct: bool,
    /// Bytes of gradient state held for this sequence (eligibility state or tape).
    pub memory_bytes: usize,
}

/// Gradients of the final-step cross-entropy for one classification sequence.
pub fn sequence_gradients(
    engine: Engine,
    params: &NetworkParams,
    feedback: &FeedbackMatrix,
    cfg: &EpropConfig,
    sample: &SequenceSample,
) -> Result<SequenceOutcome> {
    let classes = params.dims().outputs;
    let target = sample.one_hot(classes);
    if sample.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    match engine {
        Engine::Bptt => {
            let mut targets = vec![None; sample.len()];
            targets[sample.len() - 1] = Some(target);
            let tape = Tape::record(
                params,
                LstmState::zeros(params.dims().cells),
                sample.steps(),
                targets,
                OutputMode::Softmax,
            )?;
            let y = &tape.records[tape.len() - 1].y;
            let correct = argmax(y) == sample.label;
            Ok(SequenceOutcome {
                grads: bptt_gradients(&tape, params)?,
                loss: tape.loss(),
                correct,
                memory_bytes: tape.memory_bytes(),
            })
        }
        Engine::EpropSymmetric | Engine::EpropRandom => {
            let mut seq = EpropSequence::new(params, feedback, cfg, OutputMode::Softmax)?;
            for x in sample.steps() {
                seq.step(x)?;
            }
            let y = seq.output().to_vec();
            let err: Vec<f64> = y.iter().zip(&target).map(|(a, b)| a - b).collect();
            seq.apply_error(&err)?;
            let memory_bytes = seq.memory_bytes();
            Ok(SequenceOutcome {
                grads: seq.finish()?,
                loss: step_loss(OutputMode::Softmax, &y, &target),
                correct: argmax(&y) == sample.label,
                memory_bytes,
            })
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    /// Mean gradient over the batch.
    pub grads: GradientSet,
    pub mean_loss: f64,
    /// Fraction of sequences whose final argmax is wrong.
    pub error_rate: f64,
    pub peak_memory_bytes: usize,
}

/// Mean gradient over a batch. Sequences run in parallel; the reduction runs in batch order.
pub fn batch_gradients(
    engine: Engine,
    params: &NetworkParams,
    feedback: &FeedbackMatrix,
    cfg: &EpropConfig,
    samples: &[SequenceSample],
    per_length_echo: Option<f64>,
) -> Result<BatchOutcome> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let outcomes: Vec<SequenceOutcome> = samples
        .par_iter()
        .map(|s| {
            let mut c = *cfg;
            if let Some(numerator) = per_length_echo {
                c.echo_lambda = numerator / s.len() as f64;
            }
            sequence_gradients(engine, params, feedback, &c, s)
        })
        .collect::<Result<_>>()?;
    let n = outcomes.len() as f64;
    let mut grads = outcomes[0].grads.clone();
    for o in &outcomes[1..] {
        grads.add_assign(&o.grads)?;
    }
    grads.scale(1.0 / n);
    Ok(BatchOutcome {
        grads,
        mean_loss: outcomes.iter().map(|o| o.loss).sum::<f64>() / n,
        error_rate: outcomes.iter().filter(|o| !o.correct).count() as f64 / n,
        peak_memory_bytes: outcomes.iter().map(|o| o.memory_bytes).max().unwrap_or(0),
    })
}

/// Classification accuracy of the final-step readout.
pub fn evaluate_accuracy(params: &NetworkParams, samples: &[SequenceSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let correct: usize = samples
        .par_iter()
        .map(|s| {
            let d = params.dims();
            let mut prev = LstmState::zeros(d.cells);
            let mut next = LstmState::zeros(d.cells);
            let mut acts = crate::lstm::GateActivations::zeros(d.cells);
            for x in s.steps() {
                params.forward_step_into(x, &prev, &mut acts, &mut next);
                std::mem::swap(&mut prev, &mut next);
            }
            let mut y = vec![0.0; d.outputs];
            params.output_into(&prev.z, OutputMode::Softmax, &mut y);
            usize::from(argmax(&y) == s.label)
        })
        .sum();
    correct as f64 / samples.len() as f64
}

/// Parameters, optimizer and feedback matrix of one supervised training run.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub engine: Engine,
    pub params: NetworkParams,
    pub optimizer: Optimizer,
    pub feedback: FeedbackMatrix,
    pub eprop: EpropConfig,
    /// If set, the echo weight is this value divided by each sequence's length.
    pub per_length_echo: Option<f64>,
    /// Global-norm clipping threshold; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Trainer {
    pub fn new(
        engine: Engine,
        params: NetworkParams,
        optimizer: OptimizerConfig,
        eprop: EpropConfig,
        rng: &mut Rng,
    ) -> Self {
        let feedback = FeedbackMatrix::new(engine.feedback_mode(), params.dims(), rng);
        let optimizer = Optimizer::new(optimizer, &params);
        Self {
            engine,
            params,
            optimizer,
            feedback,
            eprop: EpropConfig {
                feedback: engine.feedback_mode(),
                ..eprop
            },
            per_length_echo: None,
            clip_norm: None,
        }
    }

    /// One optimizer update on a batch.
    pub fn update(&mut self, batch: &[SequenceSample]) -> Result<BatchOutcome> {
        let mut out = batch_gradients(
            self.engine,
            &self.params,
            &self.feedback,
            &self.eprop,
            batch,
            self.per_length_echo,
        )?;
        if let Some(max) = self.clip_norm {
            out.grads.clip_global_norm(max);
        }
        self.optimizer.apply(&mut self.params, &out.grads)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::Dims;
    use crate::tasks::{generate_tca_batch, TcaConfig};

    #[test]
    fn untrained_network_is_near_chance() {
        let dims = Dims::new(4, 8, 10);
        let mut rng = Rng::new(1);
        let p = NetworkParams::init(&mut rng, dims);
        let samples: Vec<SequenceSample> = (0..2000)
            .map(|i| SequenceSample {
                inputs: (0..12).map(|_| rng.uniform()).collect(),
                dim: 4,
                label: i % 10,
            })
            .collect();
        let acc = evaluate_accuracy(&p, &samples);
        assert!((acc - 0.1).abs() < 0.03, "accuracy {acc}");
    }

    #[test]
    fn batch_reduction_is_ordered_and_deterministic() {
        let dims = Dims::new(4, 6, 2);
        let mut rng = Rng::new(2);
        let p = NetworkParams::init(&mut rng, dims);
        let batch = generate_tca_batch(&TcaConfig::default(), &mut rng, 16).unwrap();
        let fb = FeedbackMatrix::Symmetric;
        for engine in [Engine::EpropSymmetric, Engine::Bptt] {
            let a = batch_gradients(engine, &p, &fb, &EpropConfig::default(), &batch, Some(1e-4)).unwrap();
            let b = batch_gradients(engine, &p, &fb, &EpropConfig::default(), &batch, Some(1e-4)).unwrap();
            assert_eq!(a.grads, b.grads);
            let mut manual = GradientSet::zeros(dims);
            for s in &batch {
                let cfg = EpropConfig {
                    echo_lambda: 1e-4 / s.len() as f64,
                    ..EpropConfig::default()
                };
                manual
                    .add_assign(&sequence_gradients(engine, &p, &fb, &cfg, s).unwrap().grads)
                    .unwrap();
            }
            manual.scale(1.0 / 16.0);
            assert_eq!(a.grads, manual);
        }
    }

    #[test]
    fn engine_names_round_trip() {
        for e in [Engine::EpropSymmetric, Engine::EpropRandom, Engine::Bptt] {
            assert_eq!(Engine::parse(e.name()).unwrap(), e);
        }
        assert!(Engine::parse("rtrl").is_err());
    }
}
