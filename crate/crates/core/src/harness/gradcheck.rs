//! Gradient verification on small random networks.
//!
//! * (a) BPTT against central finite differences of the tape loss.
//! * (b) e-prop against BPTT on networks without recurrent weights, where the two agree.
//! * (c) e-prop against BPTT with recurrent weights: the approximation gap, reported only.

use std::fmt::Write as _;

use crate::bptt::{bptt_gradients, Tape};
use crate::eprop::{EpropConfig, EpropSequence, FeedbackMatrix};
use crate::error::{Error, Result};
use crate::grad::GradientSet;
use crate::lstm::{Dims, LstmState, NetworkParams, OutputMode};
use crate::numerics::Rng;

/// Floor of the relative error in the finite-difference check. Central differences at
/// h = 1e-5 carry an absolute error near 1e-10, so smaller gradient entries are compared
/// on an absolute scale.
pub const FD_FLOOR: f64 = 1e-6;
/// Floor of the relative error in the e-prop/BPTT comparisons; only guards exact zeros.
pub const ORACLE_FLOOR: f64 = 1e-300;
pub const FD_TOLERANCE: f64 = 1e-4;
pub const ORACLE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckSettings {
    pub instances: usize,
    pub inputs: usize,
    pub cells: usize,
    /// Output count is drawn uniformly from `1..=max_outputs` per instance.
    pub max_outputs: usize,
    pub seq_len: usize,
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        Self {
            instances: 100,
            inputs: 4,
            cells: 6,
            max_outputs: 3,
            seq_len: 20,
            fd_step: 1e-5,
            seed: 0,
        }
    }
}

impl GradcheckSettings {
    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 || self.cells > 8 || self.seq_len == 0 || self.seq_len > 25 {
            return Err(Error::Config(
                "gradient checks need 1..=8 cells and 1..=25 steps".into(),
            ));
        }
        if self.instances == 0 || self.inputs == 0 || self.max_outputs == 0 {
            return Err(Error::Config("instances, inputs and outputs must be >= 1".into()));
        }
        if !(self.fd_step.is_finite() && self.fd_step > 0.0) {
            return Err(Error::Config("fd_step must be finite and > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_err: f64,
    pub per_tensor: Vec<(String, f64)>,
    /// `None` marks an informational check.
    pub tolerance: Option<f64>,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.tolerance.is_none_or(|t| self.max_rel_err <= t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub settings: GradcheckSettings,
    pub checks: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(CheckResult::passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let verdict = match c.tolerance {
                Some(t) if c.max_rel_err <= t => format!("PASS (<= {t:e})"),
                Some(t) => format!("FAIL (> {t:e})"),
                None => "INFO".to_string(),
            };
            let _ = writeln!(s, "{}: max rel err {:.3e} {verdict}", c.name, c.max_rel_err);
            for (name, e) in &c.per_tensor {
                let _ = writeln!(s, "  {name:<8} {e:.3e}");
            }
        }
        s
    }
}

/// A random instance: parameters, inputs, targets and output mode.
#[derive(Debug, Clone)]
pub struct Instance {
    pub params: NetworkParams,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Option<Vec<f64>>>,
    pub mode: OutputMode,
}

impl Instance {
    /// Softmax with a one-hot target for two or more outputs, otherwise a linear readout
    /// with a random target. `every_step` puts a loss on every step instead of the last.
    pub fn random(rng: &mut Rng, s: &GradcheckSettings, recurrent: bool, every_step: bool) -> Self {
        let outputs = 1 + rng.below(s.max_outputs);
        let dims = Dims::new(s.inputs, s.cells, outputs);
        let mut params = NetworkParams::init(rng, dims);
        if !recurrent {
            params.zero_recurrent();
        }
        let mode = if outputs >= 2 {
            OutputMode::Softmax
        } else {
            OutputMode::Linear
        };
        let inputs = (0..s.seq_len)
            .map(|_| (0..s.inputs).map(|_| rng.uniform_range(-1.0, 1.0)).collect())
            .collect();
        let targets = (0..s.seq_len)
            .map(|t| {
                (every_step || t + 1 == s.seq_len).then(|| match mode {
                    OutputMode::Softmax => {
                        let mut v = vec![0.0; outputs];
                        v[rng.below(outputs)] = 1.0;
                        v
                    }
                    OutputMode::Linear => (0..outputs).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
                })
            })
            .collect();
        Self {
            params,
            inputs,
            targets,
            mode,
        }
    }

    pub fn tape(&self, params: &NetworkParams) -> Result<Tape> {
        Tape::record(
            params,
            LstmState::zeros(params.dims().cells),
            self.inputs.iter().map(Vec::as_slice),
            self.targets.clone(),
            self.mode,
        )
    }

    pub fn bptt(&self) -> Result<GradientSet> {
        bptt_gradients(&self.tape(&self.params)?, &self.params)
    }

    /// Plain symmetric e-prop with signals at the loss steps.
    pub fn eprop(&self, cfg: &EpropConfig) -> Result<GradientSet> {
        let fb = FeedbackMatrix::Symmetric;
        let mut seq = EpropSequence::new(&self.params, &fb, cfg, self.mode)?;
        for (x, target) in self.inputs.iter().zip(&self.targets) {
            let y = seq.step(x)?;
            if let Some(t) = target {
                let err: Vec<f64> = y.iter().zip(t).map(|(a, b)| a - b).collect();
                seq.apply_error(&err)?;
            }
        }
        seq.finish()
    }

    /// Central differences of the tape loss for every parameter. The two perturbed losses
    /// are differenced step by step before summing, which keeps the cancellation error at
    /// the scale of a single step's loss instead of the whole sequence's.
    pub fn finite_differences(&self, h: f64) -> Result<GradientSet> {
        let mut out = GradientSet::zeros(self.params.dims());
        let mut p = self.params.clone();
        let n_tensors = NetworkParams::tensor_names().len();
        for ti in 0..n_tensors {
            let n = self.params.tensors()[ti].as_slice().len();
            for idx in 0..n {
                let orig = self.params.tensors()[ti].as_slice()[idx];
                p.tensors_mut()[ti].as_mut_slice()[idx] = orig + h;
                let plus = self.tape(&p)?.step_losses();
                p.tensors_mut()[ti].as_mut_slice()[idx] = orig - h;
                let minus = self.tape(&p)?.step_losses();
                p.tensors_mut()[ti].as_mut_slice()[idx] = orig;
                let diff: f64 = plus.iter().zip(&minus).map(|(a, b)| a - b).sum();
                out.tensors_mut()[ti].as_mut_slice()[idx] = diff / (2.0 * h);
            }
        }
        Ok(out)
    }
}

fn merge(acc: &mut Vec<(String, f64)>, next: Vec<(String, f64)>) {
    if acc.is_empty() {
        *acc = next;
        return;
    }
    for ((_, a), (_, b)) in acc.iter_mut().zip(next) {
        *a = a.max(b);
    }
}

fn finish(name: &str, per_tensor: Vec<(String, f64)>, tolerance: Option<f64>) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        max_rel_err: per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max),
        per_tensor,
        tolerance,
    }
}

/// (a) BPTT against finite differences; losses alternate between final-step and every-step.
pub fn check_bptt_fd(s: &GradcheckSettings) -> Result<CheckResult> {
    let mut rng = Rng::new(s.seed).substream("bptt-fd");
    let mut per = Vec::new();
    for i in 0..s.instances {
        let inst = Instance::random(&mut rng, s, true, i % 2 == 1);
        let fd = inst.finite_differences(s.fd_step)?;
        merge(&mut per, inst.bptt()?.max_relative_error(&fd, FD_FLOOR));
    }
    Ok(finish("(a) bptt vs finite differences", per, Some(FD_TOLERANCE)))
}

/// (b) e-prop against BPTT with zero recurrent weights and a final-step loss.
pub fn check_eprop_oracle(s: &GradcheckSettings) -> Result<CheckResult> {
    let mut rng = Rng::new(s.seed).substream("eprop-oracle");
    let mut per = Vec::new();
    for _ in 0..s.instances {
        let inst = Instance::random(&mut rng, s, false, false);
        let e = inst.eprop(&EpropConfig::default())?;
        merge(&mut per, e.max_relative_error(&inst.bptt()?, ORACLE_FLOOR));
    }
    Ok(finish("(b) eprop vs bptt, no recurrence", per, Some(ORACLE_TOLERANCE)))
}

/// (c) e-prop against BPTT with recurrent weights; the gap is expected to be nonzero.
pub fn check_eprop_gap(s: &GradcheckSettings) -> Result<CheckResult> {
    let mut rng = Rng::new(s.seed).substream("eprop-gap");
    let mut per = Vec::new();
    for _ in 0..s.instances {
        let inst = Instance::random(&mut rng, s, true, false);
        let e = inst.eprop(&EpropConfig::default())?;
        merge(&mut per, e.max_relative_error(&inst.bptt()?, FD_FLOOR));
    }
    Ok(finish("(c) eprop vs bptt, with recurrence", per, None))
}

pub fn gradcheck(s: &GradcheckSettings) -> Result<GradcheckReport> {
    s.validate()?;
    Ok(GradcheckReport {
        settings: *s,
        checks: vec![check_bptt_fd(s)?, check_eprop_oracle(s)?, check_eprop_gap(s)?],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_report() {
        let s = GradcheckSettings {
            instances: 6,
            seq_len: 8,
            ..GradcheckSettings::default()
        };
        let r = gradcheck(&s).unwrap();
        assert!(r.passed(), "{}", r.render());
        assert_eq!(r.checks.len(), 3);
        assert!(r.checks[2].max_rel_err > 1e-6, "gap should be visible");
        assert!(r.checks[2].passed());
        assert_eq!(r.checks[0].per_tensor.len(), 14);
        assert!(r.render().contains("INFO"));
    }

    #[test]
    fn settings_bounds() {
        let big = GradcheckSettings {
            cells: 9,
            ..GradcheckSettings::default()
        };
        assert!(gradcheck(&big).is_err());
        let long = GradcheckSettings {
            seq_len: 26,
            ..GradcheckSettings::default()
        };
        assert!(long.validate().is_err());
    }

    #[test]
    fn failing_check_is_reported() {
        let c = finish("x", vec![("a".into(), 2e-8)], Some(1e-8));
        assert!(!c.passed());
        let r = GradcheckReport {
            settings: GradcheckSettings::default(),
            checks: vec![c],
        };
        assert!(r.render().contains("FAIL"));
        assert!(!r.passed());
    }
}
