//! Forward-in-time gradient engine for the LSTM.
//!
//! For the input gate, forget gate and candidate, each weight `w_jk` carries an
//! eligibility value `ε_jk` that follows the cell-state recursion
//! `ε_t = f_t·ε_{t-1} + ∂c_t/∂w`. The eligibility trace is `e_t = μ_B·ε_t·o_t·tanh'(c_t)`,
//! and the gradient is the product of the trace with a learning signal
//! `l_t = M·(y_t − y*_t)`. Output-gate and readout gradients are computed directly
//! at every signal step since they do not depend on the cell-state history.
//!
//! Two extensions are supported: trace scaling (`μ_B` per connection type) and the
//! trace echo, which adds `λ·Σ_t e_t` to the gradient.

use crate::error::{dim_mismatch, Error, Result};
use crate::grad::GradientSet;
use crate::lstm::{ConnId, Dims, GateActivations, GateId, LstmState, NetworkParams, OutputMode, StepRecord};
use crate::numerics::{sigmoid_prime_from_value, tanh_prime_from_value, Matrix, Rng};

/// When learning signals are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalMode {
    /// Only the last step of a sequence carries a loss.
    FinalStepOnly,
    /// Trace–signal products are summed over every step that carries a loss.
    EveryStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackMode {
    /// `M = W_outᵀ`, read from the current parameters at every use.
    Symmetric,
    /// Fixed random matrix drawn once at initialization.
    Random,
}

/// Per-connection-type trace scale `μ_B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceScale {
    pub input: f64,
    pub recurrent: f64,
    pub bias: f64,
}

impl TraceScale {
    pub const NONE: TraceScale = TraceScale {
        input: 1.0,
        recurrent: 1.0,
        bias: 1.0,
    };

    pub fn get(&self, conn: ConnId) -> f64 {
        match conn {
            ConnId::Input => self.input,
            ConnId::Recurrent => self.recurrent,
            ConnId::Bias => self.bias,
        }
    }
}

impl Default for TraceScale {
    fn default() -> Self {
        Self::NONE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpropConfig {
    pub signal_mode: SignalMode,
    /// Trace echo weight λ; 0 disables the echo.
    pub echo_lambda: f64,
    pub scale: TraceScale,
    pub feedback: FeedbackMode,
}

impl Default for EpropConfig {
    fn default() -> Self {
        Self {
            signal_mode: SignalMode::FinalStepOnly,
            echo_lambda: 0.0,
            scale: TraceScale::NONE,
            feedback: FeedbackMode::Symmetric,
        }
    }
}

impl EpropConfig {
    /// Echo weight `1e-4 / sequence_length`.
    pub fn echo_for_length(len: usize) -> f64 {
        1e-4 / len as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.echo_lambda.is_finite() && self.echo_lambda >= 0.0) {
            return Err(Error::Config(format!(
                "echo_lambda must be finite and >= 0, got {}",
                self.echo_lambda
            )));
        }
        for c in ConnId::ALL {
            let mu = self.scale.get(c);
            if !(mu.is_finite() && mu > 0.0) {
                return Err(Error::Config(format!(
                    "trace scale for {} must be finite and > 0, got {mu}",
                    c.name()
                )));
            }
        }
        Ok(())
    }
}

/// The feedback matrix `M` that maps output errors to per-cell learning signals.
#[derive(Debug, Clone, PartialEq)]
pub enum FeedbackMatrix {
    Symmetric,
    /// cells × outputs
    Random(Matrix),
}

impl FeedbackMatrix {
    pub fn new(mode: FeedbackMode, dims: Dims, rng: &mut Rng) -> Self {
        match mode {
            FeedbackMode::Symmetric => FeedbackMatrix::Symmetric,
            FeedbackMode::Random => Self::random(dims, rng),
        }
    }

    /// Drawn like the readout weights it stands in for: U(-k, k), `k = 1/sqrt(cells)`.
    pub fn random(dims: Dims, rng: &mut Rng) -> Self {
        let k = 1.0 / (dims.cells.max(1) as f64).sqrt();
        FeedbackMatrix::Random(Matrix::uniform(dims.cells, dims.outputs, k, rng))
    }

    pub fn mode(&self) -> FeedbackMode {
        match self {
            FeedbackMatrix::Symmetric => FeedbackMode::Symmetric,
            FeedbackMatrix::Random(_) => FeedbackMode::Random,
        }
    }

    /// `out = M·err`.
    #[inline]
    pub fn signal_into(&self, params: &NetworkParams, err: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match self {
            FeedbackMatrix::Symmetric => params.w_out.matvec_transposed_acc(err, out),
            FeedbackMatrix::Random(m) => m.matvec_acc(err, out),
        }
    }

    fn check(&self, dims: Dims) -> Result<()> {
        if let FeedbackMatrix::Random(m) = self {
            if m.shape() != (dims.cells, dims.outputs) {
                return Err(dim_mismatch(
                    "feedback matrix",
                    format!("{}x{}", dims.cells, dims.outputs),
                    format!("{}x{}", m.rows(), m.cols()),
                ));
            }
        }
        Ok(())
    }
}

/// Learning signal `l = M·(y − y*)`.
pub fn learning_signal(fb: &FeedbackMatrix, params: &NetworkParams, y: &[f64], target: &[f64]) -> Result<Vec<f64>> {
    let dims = params.dims();
    if y.len() != target.len() || y.len() != dims.outputs {
        return Err(dim_mismatch(
            "learning_signal",
            dims.outputs,
            format!("{} / {}", y.len(), target.len()),
        ));
    }
    fb.check(dims)?;
    let err: Vec<f64> = y.iter().zip(target).map(|(a, b)| a - b).collect();
    let mut l = vec![0.0; dims.cells];
    fb.signal_into(params, &err, &mut l);
    Ok(l)
}

/// Postsynaptic factor of `∂c_k/∂w_jk` for a traced gate.
#[inline]
fn postsynaptic_factor(gate: GateId, acts: &GateActivations, prev_c: &[f64], out: &mut [f64]) {
    let i = acts.input();
    let f = acts.forget();
    let g = acts.candidate();
    match gate {
        GateId::Input => {
            for k in 0..out.len() {
                out[k] = g[k] * sigmoid_prime_from_value(i[k]);
            }
        }
        GateId::Forget => {
            for k in 0..out.len() {
                out[k] = prev_c[k] * sigmoid_prime_from_value(f[k]);
            }
        }
        GateId::Candidate => {
            for k in 0..out.len() {
                out[k] = i[k] * tanh_prime_from_value(g[k]);
            }
        }
        GateId::Output => unreachable!("output gate has no eligibility trace"),
    }
}

const ONE: [f64; 1] = [1.0];

#[inline]
fn presynaptic<'a>(conn: ConnId, x: &'a [f64], prev_z: &'a [f64]) -> &'a [f64] {
    match conn {
        ConnId::Input => x,
        ConnId::Recurrent => prev_z,
        ConnId::Bias => &ONE,
    }
}

fn traced_index(gate: GateId) -> Result<usize> {
    match gate {
        GateId::Output => Err(Error::InvalidArgument(
            "the output gate is handled by direct factorization, not eligibility traces".into(),
        )),
        g => Ok(g.index()),
    }
}

fn check_step_dims(dims: Dims, acts: &GateActivations, prev: &LstmState, x: &[f64]) -> Result<()> {
    if x.len() != dims.inputs {
        return Err(dim_mismatch("eligibility input", dims.inputs, x.len()));
    }
    if prev.c.len() != dims.cells || prev.z.len() != dims.cells || acts.tanh_c.len() != dims.cells {
        return Err(dim_mismatch("eligibility state", dims.cells, prev.c.len()));
    }
    Ok(())
}

/// Instantaneous `∂c_k^t/∂w_jk^(A,B)` holding `c^{t-1}` and `z^{t-1}` fixed.
pub fn partial_c_wrt_weight(
    gate: GateId,
    conn: ConnId,
    acts: &GateActivations,
    prev: &LstmState,
    x: &[f64],
) -> Result<Matrix> {
    traced_index(gate)?;
    let cells = prev.c.len();
    if acts.tanh_c.len() != cells {
        return Err(dim_mismatch("partial_c_wrt_weight", cells, acts.tanh_c.len()));
    }
    let mut post = vec![0.0; cells];
    postsynaptic_factor(gate, acts, &prev.c, &mut post);
    Ok(Matrix::outer(&post, presynaptic(conn, x, &prev.z)))
}

type PerTrace = [[Matrix; 3]; 3];

fn per_trace_zeros(dims: Dims) -> PerTrace {
    std::array::from_fn(|_| std::array::from_fn(|c| Matrix::zeros(dims.cells, dims.fan_in(ConnId::ALL[c]))))
}

fn per_trace_bytes(t: &PerTrace) -> usize {
    t.iter()
        .flatten()
        .map(|m| std::mem::size_of_val(m.as_slice()))
        .sum()
}

/// Eligibility values `ε^(A,B)` for A ∈ {i, f, c̃}, B ∈ {in, rec, bias}, shaped like `W^(A,B)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EligibilityState {
    dims: Dims,
    eps: PerTrace,
    post: [Vec<f64>; 3],
    steps: usize,
}

impl EligibilityState {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            eps: per_trace_zeros(dims),
            post: std::array::from_fn(|_| vec![0.0; dims.cells]),
            steps: 0,
        }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    /// Number of steps absorbed so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Panics for [`GateId::Output`].
    pub fn eps(&self, gate: GateId, conn: ConnId) -> &Matrix {
        &self.eps[traced_index(gate).expect("traced gate")][conn.index()]
    }

    pub fn eps_mut(&mut self, gate: GateId, conn: ConnId) -> &mut Matrix {
        &mut self.eps[traced_index(gate).expect("traced gate")][conn.index()]
    }

    pub fn heap_bytes(&self) -> usize {
        per_trace_bytes(&self.eps) + 3 * self.dims.cells * std::mem::size_of::<f64>()
    }

    /// Advances every eligibility value by one step:
    /// `ε_jk ← ε_jk·f_k + ∂c_k/∂w_jk`.
    pub fn step(&mut self, acts: &GateActivations, prev: &LstmState, x: &[f64]) -> Result<()> {
        check_step_dims(self.dims, acts, prev, x)?;
        self.step_unchecked(acts, prev, x)
    }

    #[inline]
    pub(crate) fn step_unchecked(&mut self, acts: &GateActivations, prev: &LstmState, x: &[f64]) -> Result<()> {
        let f = acts.forget();
        for gate in GateId::TRACED {
            let a = gate.index();
            postsynaptic_factor(gate, acts, &prev.c, &mut self.post[a]);
            let post = &self.post[a];
            for conn in ConnId::ALL {
                let pre = presynaptic(conn, x, &prev.z);
                let eps = &mut self.eps[a][conn.index()];
                let cols = pre.len();
                let mut check = 0.0;
                for (k, row) in eps.as_mut_slice().chunks_exact_mut(cols.max(1)).enumerate() {
                    let fk = f[k];
                    let gk = post[k];
                    for (e, &s) in row.iter_mut().zip(pre) {
                        *e = *e * fk + gk * s;
                    }
                    check += row.iter().sum::<f64>();
                }
                if !check.is_finite() {
                    return Err(Error::Instability {
                        tensor: format!("eps.{}.{}", gate.name(), conn.name()),
                        step: self.steps,
                    });
                }
            }
        }
        self.steps += 1;
        Ok(())
    }
}

/// Advances the eligibility values by one step, see [`EligibilityState::step`].
pub fn step_eligibility(
    state: &mut EligibilityState,
    acts: &GateActivations,
    prev: &LstmState,
    x: &[f64],
) -> Result<()> {
    state.step(acts, prev, x)
}

/// `∂z_k/∂c_k = o_k·tanh'(c_k)` into `out`.
#[inline]
fn output_sensitivity(acts: &GateActivations, out: &mut [f64]) {
    for ((d, &o), &tc) in out.iter_mut().zip(acts.output()).zip(&acts.tanh_c) {
        *d = o * tanh_prime_from_value(tc);
    }
}

/// Eligibility traces of the current step and the running echo sum `Σ_t e_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    traces: PerTrace,
    echo: PerTrace,
}

impl TraceSet {
    pub fn zeros(dims: Dims) -> Self {
        Self {
            traces: per_trace_zeros(dims),
            echo: per_trace_zeros(dims),
        }
    }

    pub fn trace(&self, gate: GateId, conn: ConnId) -> &Matrix {
        &self.traces[traced_index(gate).expect("traced gate")][conn.index()]
    }

    pub fn echo(&self, gate: GateId, conn: ConnId) -> &Matrix {
        &self.echo[traced_index(gate).expect("traced gate")][conn.index()]
    }
}

/// Computes `e_jk = (ε_jk·o_k·tanh'(c_k))·μ_B` for every traced tensor and adds it to the echo sum.
pub fn make_traces(state: &EligibilityState, acts: &GateActivations, cfg: &EpropConfig, traces: &mut TraceSet) {
    let mut d = vec![0.0; state.dims.cells];
    output_sensitivity(acts, &mut d);
    for a in 0..3 {
        for conn in ConnId::ALL {
            let mu = cfg.scale.get(conn);
            let c = conn.index();
            let cols = state.eps[a][c].cols().max(1);
            let eps = state.eps[a][c].as_slice();
            let tr = traces.traces[a][c].as_mut_slice();
            let echo = traces.echo[a][c].as_mut_slice();
            for (k, ((er, tr), ec)) in eps
                .chunks_exact(cols)
                .zip(tr.chunks_exact_mut(cols))
                .zip(echo.chunks_exact_mut(cols))
                .enumerate()
            {
                for ((&e, t), h) in er.iter().zip(tr.iter_mut()).zip(ec.iter_mut()) {
                    *t = e * d[k] * mu;
                    *h += *t;
                }
            }
        }
    }
}

/// Combines traces with learning signals for the traced gates.
///
/// `run` holds the trace set of each step and the learning signal (if any) of that step.
/// In [`SignalMode::FinalStepOnly`] only the last entry's signal is used and it must be present.
/// The echo term `λ·Σ_t e_t` is read from the last trace set.
pub fn accumulate_gradients(
    run: &[(TraceSet, Option<Vec<f64>>)],
    dims: Dims,
    cfg: &EpropConfig,
) -> Result<GradientSet> {
    let mut grads = GradientSet::zeros(dims);
    let Some((last, last_signal)) = run.last() else {
        return Err(Error::InvalidArgument("empty e-prop run".into()));
    };
    let add = |grads: &mut GradientSet, traces: &TraceSet, l: &[f64]| -> Result<()> {
        if l.len() != dims.cells {
            return Err(dim_mismatch("learning signal", dims.cells, l.len()));
        }
        for gate in GateId::TRACED {
            for conn in ConnId::ALL {
                let tr = traces.trace(gate, conn);
                let g = grads.tensor_mut(gate, conn);
                let cols = tr.cols().max(1);
                for (k, (gr, er)) in g
                    .as_mut_slice()
                    .chunks_exact_mut(cols)
                    .zip(tr.as_slice().chunks_exact(cols))
                    .enumerate()
                {
                    for (gv, &e) in gr.iter_mut().zip(er) {
                        *gv += e * l[k];
                    }
                }
            }
        }
        Ok(())
    };
    match cfg.signal_mode {
        SignalMode::FinalStepOnly => {
            let l = last_signal
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("missing final learning signal".into()))?;
            add(&mut grads, last, l)?;
        }
        SignalMode::EveryStep => {
            for (traces, signal) in run {
                if let Some(l) = signal {
                    add(&mut grads, traces, l)?;
                }
            }
        }
    }
    if cfg.echo_lambda != 0.0 {
        add_echo(&mut grads, &last.echo, cfg.echo_lambda);
    }
    Ok(grads)
}

fn add_echo(grads: &mut GradientSet, echo: &PerTrace, lambda: f64) {
    for gate in GateId::TRACED {
        for conn in ConnId::ALL {
            let src = echo[gate.index()][conn.index()].as_slice();
            for (g, &e) in grads.tensor_mut(gate, conn).as_mut_slice().iter_mut().zip(src) {
                *g += lambda * e;
            }
        }
    }
}

/// Scratch buffers for the direct output-gate and readout contributions.
#[derive(Debug, Clone)]
struct DirectScratch {
    signal: Vec<f64>,
    delta_o: Vec<f64>,
}

impl DirectScratch {
    fn new(cells: usize) -> Self {
        Self {
            signal: vec![0.0; cells],
            delta_o: vec![0.0; cells],
        }
    }
}

/// Output-gate gradient `l_k·tanh(c_k)·o_k(1−o_k)·s_j` and readout gradient `err ⊗ z`
/// for one step. Leaves the learning signal in `scratch.signal`.
#[allow(clippy::too_many_arguments)]
#[inline]
fn add_direct_terms(
    params: &NetworkParams,
    fb: &FeedbackMatrix,
    err: &[f64],
    x: &[f64],
    prev_z: &[f64],
    acts: &GateActivations,
    z: &[f64],
    grads: &mut GradientSet,
    scratch: &mut DirectScratch,
) {
    fb.signal_into(params, err, &mut scratch.signal);
    let o = acts.output();
    for k in 0..scratch.delta_o.len() {
        scratch.delta_o[k] = scratch.signal[k] * acts.tanh_c[k] * sigmoid_prime_from_value(o[k]);
    }
    let og = grads.gate_mut(GateId::Output);
    og.w_in.add_outer(&scratch.delta_o, x);
    og.w_rec.add_outer(&scratch.delta_o, prev_z);
    og.bias.add_outer(&scratch.delta_o, &ONE);
    grads.w_out.add_outer(err, z);
    grads.b_out.add_outer(err, &ONE);
}

/// Output-gate and readout gradients over a recorded sequence.
///
/// `errors[t]` is `y_t − y*_t` at steps that carry a loss. The output-gate error
/// `dE/dz` is replaced by the learning signal; the readout uses plain backpropagation.
pub fn output_gate_and_layer_gradients(
    params: &NetworkParams,
    initial: &LstmState,
    records: &[StepRecord],
    errors: &[Option<Vec<f64>>],
    fb: &FeedbackMatrix,
) -> Result<GradientSet> {
    let dims = params.dims();
    if records.len() != errors.len() {
        return Err(dim_mismatch(
            "output_gate_and_layer_gradients",
            records.len(),
            errors.len(),
        ));
    }
    fb.check(dims)?;
    let mut grads = GradientSet::zeros(dims);
    let mut scratch = DirectScratch::new(dims.cells);
    for (t, (rec, err)) in records.iter().zip(errors).enumerate() {
        let prev_z = if t == 0 { &initial.z } else { &records[t - 1].state.z };
        if let Some(err) = err {
            if err.len() != dims.outputs {
                return Err(dim_mismatch("output error", dims.outputs, err.len()));
            }
            add_direct_terms(
                params,
                fb,
                err,
                &rec.x,
                prev_z,
                &rec.acts,
                &rec.state.z,
                &mut grads,
                &mut scratch,
            );
        }
    }
    Ok(grads)
}

/// Streaming e-prop over one sequence. Memory stays constant in the sequence length.
///
/// Call [`step`](Self::step) for each input and [`apply_error`](Self::apply_error) with
/// `y − y*` at steps that carry a loss, then [`finish`](Self::finish).
#[derive(Debug, Clone)]
pub struct EpropSequence<'a> {
    params: &'a NetworkParams,
    feedback: &'a FeedbackMatrix,
    cfg: EpropConfig,
    mode: OutputMode,
    elig: EligibilityState,
    echo: Option<PerTrace>,
    grads: GradientSet,
    prev: LstmState,
    state: LstmState,
    acts: GateActivations,
    x: Vec<f64>,
    y: Vec<f64>,
    sens: Vec<f64>,
    scratch: DirectScratch,
    signals: usize,
    signalled_last: bool,
}

impl<'a> EpropSequence<'a> {
    pub fn new(
        params: &'a NetworkParams,
        feedback: &'a FeedbackMatrix,
        cfg: &EpropConfig,
        mode: OutputMode,
    ) -> Result<Self> {
        cfg.validate()?;
        let dims = params.dims();
        feedback.check(dims)?;
        Ok(Self {
            params,
            feedback,
            cfg: *cfg,
            mode,
            elig: EligibilityState::zeros(dims),
            echo: (cfg.echo_lambda != 0.0).then(|| per_trace_zeros(dims)),
            grads: GradientSet::zeros(dims),
            prev: LstmState::zeros(dims.cells),
            state: LstmState::zeros(dims.cells),
            acts: GateActivations::zeros(dims.cells),
            x: vec![0.0; dims.inputs],
            y: vec![0.0; dims.outputs],
            sens: vec![0.0; dims.cells],
            scratch: DirectScratch::new(dims.cells),
            signals: 0,
            signalled_last: false,
        })
    }

    /// Starts from a carried-in state. Eligibility values still start at zero.
    pub fn with_initial_state(mut self, state: LstmState) -> Result<Self> {
        let cells = self.params.dims().cells;
        if state.c.len() != cells || state.z.len() != cells {
            return Err(dim_mismatch("initial state", cells, state.c.len()));
        }
        self.state = state;
        Ok(self)
    }

    /// Advances the network and eligibility values by one input; returns the readout.
    pub fn step(&mut self, x: &[f64]) -> Result<&[f64]> {
        let dims = self.params.dims();
        if x.len() != dims.inputs {
            return Err(dim_mismatch("EpropSequence::step", dims.inputs, x.len()));
        }
        if self.cfg.signal_mode == SignalMode::FinalStepOnly && self.signals > 0 {
            return Err(Error::InvalidArgument(
                "final-step signal mode received a signal before the last step".into(),
            ));
        }
        std::mem::swap(&mut self.prev, &mut self.state);
        self.x.copy_from_slice(x);
        self.params
            .forward_step_into(&self.x, &self.prev, &mut self.acts, &mut self.state);
        self.elig.step_unchecked(&self.acts, &self.prev, &self.x)?;
        output_sensitivity(&self.acts, &mut self.sens);
        if let Some(echo) = self.echo.as_mut() {
            for a in 0..3 {
                for conn in ConnId::ALL {
                    let mu = self.cfg.scale.get(conn);
                    let c = conn.index();
                    let cols = dims.fan_in(conn).max(1);
                    let eps = self.elig.eps[a][c].as_slice();
                    for (k, (er, hr)) in eps
                        .chunks_exact(cols)
                        .zip(echo[a][c].as_mut_slice().chunks_exact_mut(cols))
                        .enumerate()
                    {
                        let dk = self.sens[k];
                        for (h, &e) in hr.iter_mut().zip(er) {
                            *h += e * dk * mu;
                        }
                    }
                }
            }
        }
        self.params.output_into(&self.state.z, self.mode, &mut self.y);
        self.signalled_last = false;
        Ok(&self.y)
    }

    /// Applies the output error `y − y*` of the current step.
    pub fn apply_error(&mut self, err: &[f64]) -> Result<()> {
        let dims = self.params.dims();
        if err.len() != dims.outputs {
            return Err(dim_mismatch("EpropSequence::apply_error", dims.outputs, err.len()));
        }
        if self.elig.steps() == 0 {
            return Err(Error::InvalidArgument("error applied before the first step".into()));
        }
        add_direct_terms(
            self.params,
            self.feedback,
            err,
            &self.x,
            &self.prev.z,
            &self.acts,
            &self.state.z,
            &mut self.grads,
            &mut self.scratch,
        );
        let l = &self.scratch.signal;
        for a in 0..3 {
            let gate = GateId::TRACED[a];
            for conn in ConnId::ALL {
                let mu = self.cfg.scale.get(conn);
                let cols = dims.fan_in(conn).max(1);
                let eps = self.elig.eps[a][conn.index()].as_slice();
                let g = self.grads.tensor_mut(gate, conn).as_mut_slice();
                for (k, (gr, er)) in g.chunks_exact_mut(cols).zip(eps.chunks_exact(cols)).enumerate() {
                    let dk = self.sens[k];
                    let lk = l[k];
                    for (gv, &e) in gr.iter_mut().zip(er) {
                        *gv += e * dk * mu * lk;
                    }
                }
            }
        }
        self.signals += 1;
        self.signalled_last = true;
        Ok(())
    }

    pub fn output(&self) -> &[f64] {
        &self.y
    }

    pub fn state(&self) -> &LstmState {
        &self.state
    }

    pub fn acts(&self) -> &GateActivations {
        &self.acts
    }

    pub fn eligibility(&self) -> &EligibilityState {
        &self.elig
    }

    pub fn steps(&self) -> usize {
        self.elig.steps()
    }

    /// Bytes of per-sequence gradient state: eligibility values, echo sums, gradient
    /// accumulators and step buffers. Independent of the sequence length.
    pub fn memory_bytes(&self) -> usize {
        let f = std::mem::size_of::<f64>();
        let dims = self.params.dims();
        self.elig.heap_bytes()
            + self.echo.as_ref().map_or(0, per_trace_bytes)
            + dims.param_count() * f
            + (4 * dims.cells + 9 * dims.cells + dims.inputs + dims.outputs) * f
    }

    pub fn finish(mut self) -> Result<GradientSet> {
        match self.cfg.signal_mode {
            SignalMode::FinalStepOnly if !(self.signals == 1 && self.signalled_last) => {
                return Err(Error::InvalidArgument("missing final learning signal".into()));
            }
            _ => {}
        }
        if let Some(echo) = &self.echo {
            add_echo(&mut self.grads, echo, self.cfg.echo_lambda);
        }
        Ok(self.grads)
    }
}
