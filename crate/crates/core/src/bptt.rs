//! Exact reverse-mode gradients over a recorded sequence.

use crate::error::{dim_mismatch, Error, Result};
use crate::grad::GradientSet;
use crate::lstm::{GateActivations, GateId, LstmState, NetworkParams, OutputMode, StepRecord};
use crate::numerics::{sigmoid_prime_from_value, tanh_prime_from_value};

/// A forward pass kept in memory for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct Tape {
    pub mode: OutputMode,
    /// State before the first recorded step. Gradients do not flow into it.
    pub initial: LstmState,
    pub records: Vec<StepRecord>,
    /// Target readout at steps that carry a loss.
    pub targets: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn record<'x, I>(
        params: &NetworkParams,
        initial: LstmState,
        inputs: I,
        targets: Vec<Option<Vec<f64>>>,
        mode: OutputMode,
    ) -> Result<Tape>
    where
        I: IntoIterator<Item = &'x [f64]>,
    {
        let mut records = Vec::with_capacity(targets.len());
        let mut prev = initial.clone();
        for x in inputs {
            let (state, acts) = params.forward_step(x, &prev)?;
            let y = params.output_layer(&state.z, mode)?;
            records.push(StepRecord {
                x: x.to_vec(),
                acts,
                state: state.clone(),
                y,
            });
            prev = state;
        }
        let tape = Tape {
            mode,
            initial,
            records,
            targets,
        };
        tape.validate(params)?;
        Ok(tape)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// State entering step `t`.
    pub fn state_before(&self, t: usize) -> &LstmState {
        if t == 0 {
            &self.initial
        } else {
            &self.records[t - 1].state
        }
    }

    /// Bytes held by the recorded activations. Grows linearly with the sequence length.
    pub fn memory_bytes(&self) -> usize {
        let f = std::mem::size_of::<f64>();
        self.records.iter().map(StepRecord::heap_bytes).sum::<usize>()
            + self
                .targets
                .iter()
                .map(|t| t.as_ref().map_or(0, |v| v.len() * f))
                .sum::<usize>()
            + (self.initial.c.len() + self.initial.z.len()) * f
    }

    /// Cross-entropy (softmax readout) or half squared error (linear readout), summed over loss steps.
    pub fn loss(&self) -> f64 {
        self.step_losses().iter().sum()
    }

    /// Loss of every step; zero where the step has no target.
    pub fn step_losses(&self) -> Vec<f64> {
        self.records
            .iter()
            .zip(&self.targets)
            .map(|(rec, target)| target.as_ref().map_or(0.0, |t| step_loss(self.mode, &rec.y, t)))
            .collect()
    }

    pub fn validate(&self, params: &NetworkParams) -> Result<()> {
        let d = params.dims();
        if self.targets.len() != self.records.len() {
            return Err(Error::InconsistentTape(format!(
                "{} targets for {} steps",
                self.targets.len(),
                self.records.len()
            )));
        }
        if self.initial.c.len() != d.cells || self.initial.z.len() != d.cells {
            return Err(Error::InconsistentTape("initial state size".into()));
        }
        for (t, (r, target)) in self.records.iter().zip(&self.targets).enumerate() {
            if r.x.len() != d.inputs || r.state.c.len() != d.cells || r.y.len() != d.outputs {
                return Err(Error::InconsistentTape(format!("record {t} does not match {d}")));
            }
            if let Some(target) = target {
                if target.len() != d.outputs {
                    return Err(Error::InconsistentTape(format!(
                        "target {t} has length {}",
                        target.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// True if re-running the forward pass reproduces every record bit for bit.
    pub fn verify_replay(&self, params: &NetworkParams) -> Result<bool> {
        let replay = Tape::record(
            params,
            self.initial.clone(),
            self.records.iter().map(|r| r.x.as_slice()),
            self.targets.clone(),
            self.mode,
        )?;
        Ok(replay.records == self.records)
    }

    /// Sub-tape of `len` steps starting at `start`, seeded with the recorded state at `start`.
    pub fn window(&self, start: usize, len: usize) -> Result<Tape> {
        if len == 0 || start + len > self.len() {
            return Err(Error::InvalidArgument(format!(
                "window [{start}, {}) outside tape of length {}",
                start + len,
                self.len()
            )));
        }
        Ok(Tape {
            mode: self.mode,
            initial: self.state_before(start).clone(),
            records: self.records[start..start + len].to_vec(),
            targets: self.targets[start..start + len].to_vec(),
        })
    }
}

pub(crate) fn step_loss(mode: OutputMode, y: &[f64], target: &[f64]) -> f64 {
    match mode {
        OutputMode::Softmax => -y
            .iter()
            .zip(target)
            .filter(|(_, &t)| t != 0.0)
            .map(|(&p, &t)| t * p.max(f64::MIN_POSITIVE).ln())
            .sum::<f64>(),
        OutputMode::Linear => 0.5 * y.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
    }
}

/// Reverse-mode gradients of [`Tape::loss`] with respect to every parameter.
pub fn bptt_gradients(tape: &Tape, params: &NetworkParams) -> Result<GradientSet> {
    tape.validate(params)?;
    let d = params.dims();
    let n = d.cells;
    let mut grads = GradientSet::zeros(d);
    let mut dh_next = vec![0.0; n];
    let mut dc_next = vec![0.0; n];
    let mut dh = vec![0.0; n];
    let mut dc = vec![0.0; n];
    let mut dnet: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    let mut err = vec![0.0; d.outputs];

    for t in (0..tape.len()).rev() {
        let rec = &tape.records[t];
        let prev = tape.state_before(t);
        dh.copy_from_slice(&dh_next);
        if let Some(target) = &tape.targets[t] {
            for ((e, y), y_star) in err.iter_mut().zip(&rec.y).zip(target) {
                *e = y - y_star;
            }
            grads.w_out.add_outer(&err, &rec.state.z);
            grads.b_out.add_outer(&err, &[1.0]);
            params.w_out.matvec_transposed_acc(&err, &mut dh);
        }
        backprop_gates(&rec.acts, &prev.c, &dh, &dc_next, &mut dc, &mut dnet);
        dh_next.fill(0.0);
        for g in GateId::ALL {
            let delta = &dnet[g.index()];
            let gg = grads.gate_mut(g);
            gg.w_in.add_outer(delta, &rec.x);
            gg.w_rec.add_outer(delta, &prev.z);
            gg.bias.add_outer(delta, &[1.0]);
            params.gate(g).w_rec.matvec_transposed_acc(delta, &mut dh_next);
        }
        for ((dcn, &dck), &fk) in dc_next.iter_mut().zip(&dc).zip(rec.acts.forget()) {
            *dcn = dck * fk;
        }
    }
    Ok(grads)
}

/// Local backward step: gate pre-activation deltas from `dE/dz_t` and the carried `dE/dc`.
#[inline]
fn backprop_gates(
    acts: &GateActivations,
    c_prev: &[f64],
    dh: &[f64],
    dc_carry: &[f64],
    dc: &mut [f64],
    dnet: &mut [Vec<f64>; 4],
) {
    let i = acts.input();
    let f = acts.forget();
    let g = acts.candidate();
    let o = acts.output();
    for k in 0..dh.len() {
        let tc = acts.tanh_c[k];
        let dck = dh[k] * o[k] * tanh_prime_from_value(tc) + dc_carry[k];
        dc[k] = dck;
        dnet[GateId::Output.index()][k] = dh[k] * tc * sigmoid_prime_from_value(o[k]);
        dnet[GateId::Input.index()][k] = dck * g[k] * sigmoid_prime_from_value(i[k]);
        dnet[GateId::Forget.index()][k] = dck * c_prev[k] * sigmoid_prime_from_value(f[k]);
        dnet[GateId::Candidate.index()][k] = dck * i[k] * tanh_prime_from_value(g[k]);
    }
}

/// Gradients over the last `window` steps of the tape, starting from the recorded state
/// at that point without differentiating through it.
pub fn truncated_bptt_gradients(tape: &Tape, params: &NetworkParams, window: usize) -> Result<GradientSet> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be >= 1".into()));
    }
    if window > tape.len() {
        return Err(dim_mismatch(
            "truncated_bptt_gradients window",
            format!("<= {}", tape.len()),
            window,
        ));
    }
    let sub = tape.window(tape.len() - window, window)?;
    bptt_gradients(&sub, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lstm::Dims;
    use crate::numerics::Rng;

    fn random_tape(seed: u64, dims: Dims, len: usize, every_step: bool) -> (NetworkParams, Tape) {
        let mut rng = Rng::new(seed);
        let p = NetworkParams::init(&mut rng, dims);
        let xs: Vec<Vec<f64>> = (0..len)
            .map(|_| (0..dims.inputs).map(|_| rng.uniform_range(-1.0, 1.0)).collect())
            .collect();
        let targets = (0..len)
            .map(|t| {
                (every_step || t + 1 == len).then(|| {
                    let mut v = vec![0.0; dims.outputs];
                    v[rng.below(dims.outputs)] = 1.0;
                    v
                })
            })
            .collect();
        let tape = Tape::record(
            &p,
            LstmState::zeros(dims.cells),
            xs.iter().map(Vec::as_slice),
            targets,
            OutputMode::Softmax,
        )
        .unwrap();
        (p, tape)
    }

    #[test]
    fn zero_error_gives_zero_gradients() {
        let (p, mut tape) = random_tape(1, Dims::new(3, 4, 2), 10, true);
        for (r, t) in tape.records.iter().zip(tape.targets.iter_mut()) {
            *t = Some(r.y.clone());
        }
        let g = bptt_gradients(&tape, &p).unwrap();
        assert_eq!(g, GradientSet::zeros(p.dims()));
    }

    /// One step, single cell, written out by hand.
    #[test]
    fn single_step_hand_derivation() {
        let dims = Dims::new(1, 1, 1);
        let mut p = NetworkParams::zeros(dims);
        p.gate_mut(GateId::Input).w_in.set(0, 0, 0.3);
        p.gate_mut(GateId::Forget).bias.set(0, 0, 0.2);
        p.gate_mut(GateId::Candidate).w_in.set(0, 0, -0.7);
        p.gate_mut(GateId::Output).w_in.set(0, 0, 0.5);
        p.w_out.set(0, 0, 1.5);
        p.b_out.set(0, 0, -0.1);
        let x = 0.8;
        let tape = Tape::record(
            &p,
            LstmState::zeros(1),
            [[x].as_slice()],
            vec![Some(vec![0.25])],
            OutputMode::Linear,
        )
        .unwrap();
        let g = bptt_gradients(&tape, &p).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.3 * x);
        let cand = (-0.7 * x).tanh();
        let o = sig(0.5 * x);
        let c = i * cand;
        let z = o * c.tanh();
        let y = 1.5 * z - 0.1;
        let dy = y - 0.25;
        let dz = dy * 1.5;
        let dc = dz * o * (1.0 - c.tanh().powi(2));
        let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        close(g.w_out.get(0, 0), dy * z);
        close(g.b_out.get(0, 0), dy);
        close(g.gate(GateId::Output).w_in.get(0, 0), dz * c.tanh() * o * (1.0 - o) * x);
        close(g.gate(GateId::Input).w_in.get(0, 0), dc * cand * i * (1.0 - i) * x);
        close(
            g.gate(GateId::Candidate).w_in.get(0, 0),
            dc * i * (1.0 - cand * cand) * x,
        );
        // c_prev = 0 and z_prev = 0 kill forget-gate and recurrent gradients.
        close(g.gate(GateId::Forget).bias.get(0, 0), 0.0);
        close(g.gate(GateId::Input).w_rec.get(0, 0), 0.0);
    }

    fn loss_of(p: &NetworkParams, tape: &Tape) -> f64 {
        Tape::record(
            p,
            tape.initial.clone(),
            tape.records.iter().map(|r| r.x.as_slice()),
            tape.targets.clone(),
            tape.mode,
        )
        .unwrap()
        .loss()
    }

    #[test]
    fn matches_finite_differences() {
        let (p, tape) = random_tape(2, Dims::new(3, 4, 3), 12, true);
        let g = bptt_gradients(&tape, &p).unwrap();
        let h = 1e-5;
        for (ti, name) in NetworkParams::tensor_names().iter().enumerate() {
            let n = p.tensors()[ti].as_slice().len();
            for idx in 0..n {
                let mut plus = p.clone();
                plus.tensors_mut()[ti].as_mut_slice()[idx] += h;
                let mut minus = p.clone();
                minus.tensors_mut()[ti].as_mut_slice()[idx] -= h;
                let fd = (loss_of(&plus, &tape) - loss_of(&minus, &tape)) / (2.0 * h);
                let a = g.tensors()[ti].as_slice()[idx];
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "{name}[{idx}]: {a} vs {fd}");
            }
        }
    }

    #[test]
    fn truncation_cases() {
        let (p, tape) = random_tape(3, Dims::new(2, 3, 2), 50, true);
        let full = bptt_gradients(&tape, &p).unwrap();
        assert_eq!(truncated_bptt_gradients(&tape, &p, 50).unwrap(), full);
        assert!(truncated_bptt_gradients(&tape, &p, 0).is_err());
        assert!(truncated_bptt_gradients(&tape, &p, 51).is_err());

        // Window of 8 equals full BPTT on a fresh 8-step tape seeded with the state at t = 42.
        let w = truncated_bptt_gradients(&tape, &p, 8).unwrap();
        let seeded = Tape::record(
            &p,
            tape.records[41].state.clone(),
            tape.records[42..].iter().map(|r| r.x.as_slice()),
            tape.targets[42..].to_vec(),
            tape.mode,
        )
        .unwrap();
        assert_eq!(w, bptt_gradients(&seeded, &p).unwrap());

        // Window of 1: recurrent weights only see the carried-in z, no earlier credit.
        let one = truncated_bptt_gradients(&tape, &p, 1).unwrap();
        let last = Tape::record(
            &p,
            tape.records[48].state.clone(),
            [tape.records[49].x.as_slice()],
            vec![tape.targets[49].clone()],
            tape.mode,
        )
        .unwrap();
        assert_eq!(one, bptt_gradients(&last, &p).unwrap());
    }

    #[test]
    fn linear_in_error_scale() {
        let dims = Dims::new(2, 3, 2);
        let mut rng = Rng::new(5);
        let p = NetworkParams::init(&mut rng, dims);
        let xs: Vec<Vec<f64>> = (0..15)
            .map(|_| vec![rng.uniform_range(-1.0, 1.0), rng.uniform()])
            .collect();
        let base = Tape::record(
            &p,
            LstmState::zeros(3),
            xs.iter().map(Vec::as_slice),
            vec![None; 15],
            OutputMode::Linear,
        )
        .unwrap();
        let offsets: Vec<Vec<f64>> = (0..15)
            .map(|_| vec![rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)])
            .collect();
        let with_alpha = |alpha: f64| {
            let mut t = base.clone();
            for (tgt, (r, off)) in t.targets.iter_mut().zip(base.records.iter().zip(&offsets)) {
                *tgt = Some(r.y.iter().zip(off).map(|(y, o)| y - alpha * o).collect());
            }
            bptt_gradients(&t, &p).unwrap()
        };
        let g1 = with_alpha(1.0);
        let mut g3 = with_alpha(3.0);
        g3.scale(1.0 / 3.0);
        for (_, err) in g3.max_relative_error(&g1, 1e-12) {
            assert!(err < 1e-12);
        }
    }

    #[test]
    fn inconsistent_tapes_rejected() {
        let (p, mut tape) = random_tape(6, Dims::new(2, 3, 2), 5, false);
        assert!(tape.verify_replay(&p).unwrap());
        tape.targets.pop();
        assert!(matches!(bptt_gradients(&tape, &p), Err(Error::InconsistentTape(_))));
        let (p, mut tape) = random_tape(6, Dims::new(2, 3, 2), 5, false);
        tape.targets[4] = Some(vec![1.0]);
        assert!(bptt_gradients(&tape, &p).is_err());
        let other = NetworkParams::zeros(Dims::new(2, 4, 2));
        assert!(bptt_gradients(&random_tape(7, Dims::new(2, 3, 2), 5, false).1, &other).is_err());
        let _ = p;
    }

    #[test]
    fn memory_grows_with_length() {
        let dims = Dims::new(1, 8, 10);
        let (_, a) = random_tape(8, dims, 100, false);
        let (_, b) = random_tape(8, dims, 400, false);
        assert!(b.memory_bytes() >= 4 * a.memory_bytes() - 1000);
    }
}
