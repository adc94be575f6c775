//! Deep recurrent Q-learning on cart-pole with a BPTT or e-prop gradient backend.
//!
//! The network input is the observation followed by the one-hot previous action; the
//! linear readout gives one Q value per action. Updates sample stored episodes and
//! regress the Q value of the taken action onto `r + γ·max_a' Q_target(next, a')`.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;

use super::cartpole::{Action, CartPoleEnv, NUM_ACTIONS};
use super::replay::{network_input, Episode, ReplayBuffer, Transition, WindowRef, INPUT_DIM};
use crate::bptt::{bptt_gradients, Tape};
use crate::eprop::{EpropConfig, EpropSequence, FeedbackMatrix, FeedbackMode, SignalMode, TraceScale};
use crate::error::{Error, Result};
use crate::grad::GradientSet;
use crate::lstm::{Dims, GateActivations, LstmState, NetworkParams, OutputMode};
use crate::numerics::{argmax, Rng};
use crate::optim::{Optimizer, OptimizerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Bptt,
    Eprop,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Bptt => "bptt",
            Backend::Eprop => "eprop",
        }
    }
}

/// How per-step TD losses of one update combine into the minimized objective.
///
/// Adam is invariant to gradient scale except through `ε_Adam`, so with a large
/// `ε_Adam` the reduction sets the effective step size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdReduction {
    /// Sum of `½δ²` over every step of every sampled window.
    Sum,
    /// Mean of `½δ²` over every step of every sampled window.
    Mean,
}

impl TdReduction {
    pub fn name(self) -> &'static str {
        match self {
            TdReduction::Sum => "sum",
            TdReduction::Mean => "mean",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "sum" => Some(TdReduction::Sum),
            "mean" => Some(TdReduction::Mean),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    Standard,
    Flickering,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrqnConfig {
    pub backend: Backend,
    pub env: EnvKind,
    pub cells: usize,
    pub optimizer: OptimizerConfig,
    pub trace_scale: TraceScale,
    pub forget_bias_delta: f64,
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Environment steps (after warm-up) over which ε falls linearly to `eps_end`.
    pub eps_decay_steps: u64,
    /// Updates between target-network copies; 0 bootstraps from the online network.
    pub target_update: u64,
    pub bptt_window: usize,
    /// Window length for the e-prop backend; 0 uses whole episodes.
    pub eprop_window: usize,
    pub replay_capacity: usize,
    /// Windows (or episodes) per update.
    pub batch: usize,
    /// Environment steps between updates.
    pub train_every: u64,
    pub jitter: f64,
    pub flicker_p: f64,
    /// Episodes of uniformly random actions before any update.
    pub warmup_episodes: usize,
    pub episodes: usize,
    pub td_reduction: TdReduction,
    /// Global-norm gradient clipping; `None` disables it.
    pub clip_norm: Option<f64>,
    /// Stop once the 100-episode running mean reaches this value.
    pub stop_at_mean: Option<f64>,
    pub record_wallclock: bool,
    pub seed: u64,
}

impl DrqnConfig {
    pub fn new(backend: Backend) -> Self {
        // BPTT oscillates at one update per step; e-prop needs every update it gets.
        let (optimizer, trace_scale, train_every) = match backend {
            Backend::Bptt => (OptimizerConfig::adam(3e-4), TraceScale::NONE, 4),
            Backend::Eprop => (
                OptimizerConfig::adam(3e-4).with_eps(0.1),
                TraceScale {
                    input: 1e-4,
                    recurrent: 1e-8,
                    bias: 1e-8,
                },
                1,
            ),
        };
        Self {
            backend,
            env: EnvKind::Standard,
            cells: 32,
            optimizer,
            trace_scale,
            forget_bias_delta: 0.0,
            gamma: 0.99,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 10_000,
            target_update: 500,
            bptt_window: 8,
            eprop_window: 0,
            replay_capacity: 5000,
            batch: 32,
            train_every,
            jitter: 0.05,
            flicker_p: 0.2,
            warmup_episodes: 200,
            episodes: 1500,
            td_reduction: TdReduction::Sum,
            clip_norm: None,
            stop_at_mean: None,
            record_wallclock: false,
            seed: 0,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims::new(INPUT_DIM, self.cells, NUM_ACTIONS)
    }

    pub fn window(&self) -> usize {
        match self.backend {
            Backend::Bptt => self.bptt_window,
            Backend::Eprop => self.eprop_window,
        }
    }

    pub fn eprop_config(&self) -> EpropConfig {
        EpropConfig {
            signal_mode: SignalMode::EveryStep,
            echo_lambda: 0.0,
            scale: self.trace_scale,
            feedback: FeedbackMode::Symmetric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.cells == 0 || self.batch == 0 || self.train_every == 0 {
            return bad("cells, batch and train_every must be >= 1");
        }
        if self.backend == Backend::Bptt && self.bptt_window == 0 {
            return bad("the bptt backend needs a window of at least one step");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.eps_start) || !(0.0..=1.0).contains(&self.eps_end) {
            return bad("exploration rates must lie in [0, 1]");
        }
        if !(self.optimizer.lr.is_finite() && self.optimizer.lr > 0.0) {
            return bad("learning rate must be finite and > 0");
        }
        self.eprop_config().validate()?;
        ReplayBuffer::new(self.replay_capacity)?;
        Ok(())
    }

    /// Linear annealing from `eps_start` to `eps_end` over `eps_decay_steps` steps.
    pub fn epsilon(&self, steps: u64) -> f64 {
        if self.eps_decay_steps == 0 {
            return self.eps_end;
        }
        let frac = (steps as f64 / self.eps_decay_steps as f64).min(1.0);
        self.eps_start * (1.0 - frac) + self.eps_end * frac
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct DrqnLogRow {
    /// 1-based episode counter.
    pub episode: usize,
    pub ret: f64,
    /// Mean return of the last (up to) 100 episodes.
    pub running_mean_100: f64,
    pub epsilon: f64,
    /// Mean TD loss of the updates made during the episode.
    pub loss: Option<f64>,
    pub wallclock_ms: Option<u128>,
}

pub const LOG_HEADER: [&str; 6] = [
    "episode",
    "return",
    "running_mean_100",
    "epsilon",
    "loss",
    "wallclock_ms",
];

/// Streaming CSV writer for [`DrqnLogRow`]s; flushes after every row.
pub struct DrqnLogWriter<W: Write> {
    out: csv::Writer<W>,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

impl<W: Write> DrqnLogWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(LOG_HEADER).map_err(csv_err)?;
        Ok(Self { out })
    }

    pub fn push(&mut self, r: &DrqnLogRow) -> Result<()> {
        self.out
            .write_record([
                r.episode.to_string(),
                r.ret.to_string(),
                r.running_mean_100.to_string(),
                r.epsilon.to_string(),
                r.loss.map(|v| v.to_string()).unwrap_or_default(),
                r.wallclock_ms.map(|v| v.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        self.out.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        self.out.into_inner().map_err(|e| Error::Format(e.to_string()))
    }
}

pub fn write_drqn_log<W: Write>(rows: &[DrqnLogRow], w: W) -> Result<W> {
    let mut out = DrqnLogWriter::new(w)?;
    for r in rows {
        out.push(r)?;
    }
    out.finish()
}

/// Error vector `y − y*` with the target replacing only the taken action's Q value.
/// Entries of the other actions are exactly zero.
pub fn masked_td_error(q: &[f64], action: usize, target: f64) -> Vec<f64> {
    let mut err = vec![0.0; q.len()];
    err[action] = q[action] - target;
    err
}

/// Readouts after each input of `transitions`, starting from the zero state.
pub fn q_values(params: &NetworkParams, transitions: &[Transition]) -> Vec<[f64; NUM_ACTIONS]> {
    let cells = params.dims().cells;
    let mut prev = LstmState::zeros(cells);
    let mut next = LstmState::zeros(cells);
    let mut acts = GateActivations::zeros(cells);
    let mut y = [0.0; NUM_ACTIONS];
    transitions
        .iter()
        .map(|tr| {
            params.forward_step_into(&tr.input(), &prev, &mut acts, &mut next);
            std::mem::swap(&mut prev, &mut next);
            params.output_into(&prev.z, OutputMode::Linear, &mut y);
            y
        })
        .collect()
}

/// Q-learning targets for `episode[start..start + len]`. The bootstrap value of step `t`
/// is read from the target network after input `t + 1`; terminal steps use `r` alone.
pub fn td_targets(target: &NetworkParams, episode: &[Transition], start: usize, len: usize, gamma: f64) -> Vec<f64> {
    let end = (start + len + 1).min(episode.len());
    let q = q_values(target, &episode[start..end]);
    (0..len)
        .map(|j| {
            let tr = &episode[start + j];
            if tr.done || gamma == 0.0 {
                tr.reward
            } else {
                let next = &q[j + 1];
                tr.reward + gamma * next[0].max(next[1])
            }
        })
        .collect()
}

/// Gradient (summed over steps) and summed `½δ²` over one window.
#[allow(clippy::too_many_arguments)]
pub fn window_gradients(
    backend: Backend,
    params: &NetworkParams,
    target: &NetworkParams,
    eprop: &EpropConfig,
    episode: &[Transition],
    start: usize,
    len: usize,
    gamma: f64,
) -> Result<(GradientSet, f64)> {
    if len == 0 || start + len > episode.len() {
        return Err(Error::InvalidArgument(format!(
            "window [{start}, {}) outside an episode of {} steps",
            start + len,
            episode.len()
        )));
    }
    let targets = td_targets(target, episode, start, len, gamma);
    let window = &episode[start..start + len];
    let mut loss = 0.0;
    match backend {
        Backend::Bptt => {
            let inputs: Vec<[f64; INPUT_DIM]> = window.iter().map(Transition::input).collect();
            let mut tape = Tape::record(
                params,
                LstmState::zeros(params.dims().cells),
                inputs.iter().map(|x| x.as_slice()),
                vec![None; len],
                OutputMode::Linear,
            )?;
            for (j, tr) in window.iter().enumerate() {
                let y = &tape.records[j].y;
                let delta = y[tr.action] - targets[j];
                loss += 0.5 * delta * delta;
                let mut t = y.clone();
                t[tr.action] = targets[j];
                tape.targets[j] = Some(t);
            }
            Ok((bptt_gradients(&tape, params)?, loss))
        }
        Backend::Eprop => {
            let fb = FeedbackMatrix::Symmetric;
            let mut seq = EpropSequence::new(params, &fb, eprop, OutputMode::Linear)?;
            for (tr, &y_star) in window.iter().zip(&targets) {
                let y = seq.step(&tr.input())?;
                let err = masked_td_error(y, tr.action, y_star);
                loss += 0.5 * err[tr.action] * err[tr.action];
                seq.apply_error(&err)?;
            }
            Ok((seq.finish()?, loss))
        }
    }
}

/// Summary of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct DrqnSummary {
    pub episodes: usize,
    pub updates: u64,
    pub best_running_mean: f64,
    /// First episode at which the 100-episode mean reached the stop threshold.
    pub reached_at: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct DrqnAgent {
    cfg: DrqnConfig,
    pub params: NetworkParams,
    target: Option<NetworkParams>,
    optimizer: Optimizer,
    replay: ReplayBuffer,
    env: CartPoleEnv,
    policy_rng: Rng,
    replay_rng: Rng,
    /// Environment steps after warm-up.
    steps: u64,
    updates: u64,
}

impl DrqnAgent {
    pub fn new(cfg: DrqnConfig) -> Result<Self> {
        cfg.validate()?;
        let root = Rng::new(cfg.seed);
        let mut init_rng = root.substream("init");
        let params = NetworkParams::init(&mut init_rng, cfg.dims()).with_forget_bias_boost(cfg.forget_bias_delta);
        let flicker_p = match cfg.env {
            EnvKind::Standard => 0.0,
            EnvKind::Flickering => cfg.flicker_p,
        };
        Ok(Self {
            target: (cfg.target_update > 0).then(|| params.clone()),
            optimizer: Optimizer::new(cfg.optimizer, &params),
            params,
            replay: ReplayBuffer::new(cfg.replay_capacity)?,
            env: CartPoleEnv::new(root.substream("env"), cfg.jitter, flicker_p)?,
            policy_rng: root.substream("policy"),
            replay_rng: root.substream("replay"),
            steps: 0,
            updates: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &DrqnConfig {
        &self.cfg
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.epsilon(self.steps)
    }

    /// Plays one episode (training along the way after warm-up) and stores it.
    /// Returns the episode return and the losses of the updates made.
    pub fn run_episode(&mut self, warmup: bool) -> Result<(f64, Vec<f64>)> {
        let cells = self.cfg.cells;
        let mut state = LstmState::zeros(cells);
        let mut next_state = LstmState::zeros(cells);
        let mut acts = GateActivations::zeros(cells);
        let mut q = [0.0; NUM_ACTIONS];
        let mut obs = self.env.reset();
        let mut prev_action = None;
        let mut episode: Episode = Vec::new();
        let mut losses = Vec::new();
        let mut ret = 0.0;
        loop {
            let x = network_input(&obs, prev_action);
            self.params.forward_step_into(&x, &state, &mut acts, &mut next_state);
            std::mem::swap(&mut state, &mut next_state);
            let action = if warmup || self.policy_rng.uniform() < self.epsilon() {
                self.policy_rng.below(NUM_ACTIONS)
            } else {
                self.params.output_into(&state.z, OutputMode::Linear, &mut q);
                argmax(&q)
            };
            let (next_obs, reward, done) = self.env.step(Action::from_index(action)?)?;
            episode.push(Transition {
                observation: obs,
                prev_action,
                action,
                reward,
                done,
            });
            ret += reward;
            if !warmup {
                self.steps += 1;
                if self.steps % self.cfg.train_every == 0 && !self.replay.is_empty() {
                    losses.push(self.update()?);
                }
            }
            if done {
                break;
            }
            obs = next_obs;
            prev_action = Some(action);
        }
        self.replay.push(episode)?;
        Ok((ret, losses))
    }

    /// One optimizer step on a sampled batch; returns the mean per-step TD loss.
    pub fn update(&mut self) -> Result<f64> {
        let window = self.cfg.window();
        let refs: Vec<WindowRef> = (0..self.cfg.batch)
            .map(|_| self.replay.sample_window(&mut self.replay_rng, window))
            .collect::<Result<_>>()?;
        let target = self.target.as_ref().unwrap_or(&self.params);
        let eprop = self.cfg.eprop_config();
        let parts: Vec<(GradientSet, f64)> = refs
            .par_iter()
            .map(|w| {
                window_gradients(
                    self.cfg.backend,
                    &self.params,
                    target,
                    &eprop,
                    self.replay.episode(w.episode),
                    w.start,
                    w.len,
                    self.cfg.gamma,
                )
            })
            .collect::<Result<_>>()?;
        let terms: usize = refs.iter().map(|w| w.len).sum();
        let mut grads = GradientSet::zeros(self.cfg.dims());
        let mut loss = 0.0;
        for (g, l) in &parts {
            grads.add_assign(g)?;
            loss += l;
        }
        if self.cfg.td_reduction == TdReduction::Mean {
            grads.scale(1.0 / terms as f64);
        }
        if let Some(max) = self.cfg.clip_norm {
            grads.clip_global_norm(max);
        }
        self.optimizer.apply(&mut self.params, &grads)?;
        self.updates += 1;
        if self.cfg.target_update > 0 && self.updates % self.cfg.target_update == 0 {
            self.target = Some(self.params.clone());
        }
        Ok(loss / terms as f64)
    }
}

/// Mean of the last (up to) 100 entries.
fn running_mean(returns: &[f64]) -> f64 {
    let tail = &returns[returns.len().saturating_sub(100)..];
    tail.iter().sum::<f64>() / tail.len() as f64
}

/// Trains for `cfg.episodes` episodes, streaming one log row per episode to `on_row`.
pub fn drqn_train(cfg: &DrqnConfig, mut on_row: impl FnMut(&DrqnLogRow)) -> Result<DrqnSummary> {
    let mut agent = DrqnAgent::new(*cfg)?;
    let clock = Instant::now();
    let mut returns = Vec::with_capacity(cfg.episodes);
    let mut best = f64::NEG_INFINITY;
    let mut reached_at = None;
    for ep in 0..cfg.episodes {
        let warmup = ep < cfg.warmup_episodes;
        let (ret, losses) = agent.run_episode(warmup)?;
        returns.push(ret);
        let mean = running_mean(&returns);
        best = best.max(mean);
        on_row(&DrqnLogRow {
            episode: ep + 1,
            ret,
            running_mean_100: mean,
            epsilon: if warmup { 1.0 } else { agent.epsilon() },
            loss: (!losses.is_empty()).then(|| losses.iter().sum::<f64>() / losses.len() as f64),
            wallclock_ms: cfg.record_wallclock.then(|| clock.elapsed().as_millis()),
        });
        if let Some(threshold) = cfg.stop_at_mean {
            if returns.len() >= 100 && mean >= threshold {
                reached_at = Some(ep + 1);
                break;
            }
        }
    }
    Ok(DrqnSummary {
        episodes: returns.len(),
        updates: agent.updates(),
        best_running_mean: best,
        reached_at,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad::relative_error;

    fn random_episode(rng: &mut Rng, len: usize) -> Episode {
        let mut prev = None;
        (0..len)
            .map(|t| {
                let action = rng.below(2);
                let tr = Transition {
                    observation: [
                        rng.uniform_range(-1.0, 1.0),
                        rng.uniform_range(-1.0, 1.0),
                        rng.uniform_range(-0.2, 0.2),
                        rng.uniform_range(-1.0, 1.0),
                    ],
                    prev_action: prev,
                    action,
                    reward: 1.0,
                    done: t + 1 == len,
                };
                prev = Some(action);
                tr
            })
            .collect()
    }

    fn nets(seed: u64) -> (NetworkParams, NetworkParams) {
        let mut rng = Rng::new(seed);
        let dims = Dims::new(INPUT_DIM, 5, NUM_ACTIONS);
        (NetworkParams::init(&mut rng, dims), NetworkParams::init(&mut rng, dims))
    }

    #[test]
    fn masking_leaves_other_actions_untouched() {
        let err = masked_td_error(&[0.3, -1.2], 1, 0.5);
        assert_eq!(err, vec![0.0, -1.7]);
        assert_eq!(masked_td_error(&[0.3, -1.2], 0, 0.3), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_discount_targets_are_rewards() {
        let mut rng = Rng::new(1);
        let ep = random_episode(&mut rng, 12);
        let (_, target) = nets(2);
        assert_eq!(td_targets(&target, &ep, 3, 6, 0.0), vec![1.0; 6]);
        let full = td_targets(&target, &ep, 0, 12, 0.9);
        assert_eq!(full[11], 1.0);
        let q = q_values(&target, &ep);
        assert_eq!(full[4], 1.0 + 0.9 * q[5][0].max(q[5][1]));
    }

    /// Gradient of Σ½(Q(a_t) − y*_t)² against central differences, targets held fixed.
    #[test]
    fn bptt_window_matches_finite_differences() {
        let mut rng = Rng::new(3);
        let ep = random_episode(&mut rng, 10);
        let (p, target) = nets(4);
        let (start, len) = (2, 6);
        let (g, _) = window_gradients(
            Backend::Bptt,
            &p,
            &target,
            &EpropConfig::default(),
            &ep,
            start,
            len,
            0.9,
        )
        .unwrap();
        let targets = td_targets(&target, &ep, start, len, 0.9);
        let loss = |q: &NetworkParams| -> f64 {
            q_values(q, &ep[start..start + len])
                .iter()
                .zip(&ep[start..])
                .zip(&targets)
                .map(|((y, tr), t)| 0.5 * (y[tr.action] - t).powi(2))
                .sum()
        };
        let h = 1e-5;
        let names = NetworkParams::tensor_names();
        for (ti, name) in names.iter().enumerate() {
            let n = p.tensors()[ti].as_slice().len();
            for idx in 0..n {
                let mut plus = p.clone();
                plus.tensors_mut()[ti].as_mut_slice()[idx] += h;
                let mut minus = p.clone();
                minus.tensors_mut()[ti].as_mut_slice()[idx] -= h;
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = g.tensors()[ti].as_slice()[idx];
                assert!(relative_error(an, fd, 1e-5) < 1e-4, "{name}[{idx}]: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn full_window_equals_whole_episode_bptt() {
        let mut rng = Rng::new(5);
        let ep = random_episode(&mut rng, 9);
        let (p, target) = nets(6);
        let (g, _) = window_gradients(Backend::Bptt, &p, &target, &EpropConfig::default(), &ep, 0, 9, 0.99).unwrap();
        let targets = td_targets(&target, &ep, 0, 9, 0.99);
        let inputs: Vec<[f64; INPUT_DIM]> = ep.iter().map(Transition::input).collect();
        let records = p
            .run_sequence(
                &inputs.iter().map(|x| x.to_vec()).collect::<Vec<_>>(),
                OutputMode::Linear,
            )
            .unwrap();
        let tgt = records
            .iter()
            .zip(&ep)
            .zip(&targets)
            .map(|((r, tr), &t)| {
                let mut v = r.y.clone();
                v[tr.action] = t;
                Some(v)
            })
            .collect();
        let tape = Tape::record(
            &p,
            LstmState::zeros(5),
            inputs.iter().map(|x| x.as_slice()),
            tgt,
            OutputMode::Linear,
        )
        .unwrap();
        assert_eq!(g, bptt_gradients(&tape, &p).unwrap());
    }

    #[test]
    fn eprop_window_readout_gradient_is_exact() {
        // The readout gradient does not depend on eligibility traces, so both engines agree on it.
        let mut rng = Rng::new(7);
        let ep = random_episode(&mut rng, 8);
        let (p, target) = nets(8);
        let cfg = DrqnConfig::new(Backend::Eprop).eprop_config();
        let (ge, le) = window_gradients(Backend::Eprop, &p, &target, &cfg, &ep, 0, 8, 0.99).unwrap();
        let (gb, lb) = window_gradients(Backend::Bptt, &p, &target, &cfg, &ep, 0, 8, 0.99).unwrap();
        assert_eq!(le, lb);
        for (a, b) in ge.w_out.as_slice().iter().zip(gb.w_out.as_slice()) {
            assert!(relative_error(*a, *b, 1e-12) < 1e-12);
        }
    }

    #[test]
    fn epsilon_schedule() {
        let cfg = DrqnConfig::new(Backend::Bptt);
        assert_eq!(cfg.epsilon(0), 1.0);
        assert!((cfg.epsilon(5000) - 0.525).abs() < 1e-12);
        assert_eq!(cfg.epsilon(10_000), 0.05);
        assert_eq!(cfg.epsilon(50_000), 0.05);
    }

    #[test]
    fn config_validation() {
        let mut cfg = DrqnConfig::new(Backend::Bptt);
        assert!(cfg.validate().is_ok());
        cfg.bptt_window = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = DrqnConfig::new(Backend::Eprop);
        cfg.gamma = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = DrqnConfig::new(Backend::Eprop);
        cfg.trace_scale.recurrent = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn sum_reduction_scales_the_mean_step_by_the_term_count() {
        let step = |reduction: TdReduction| {
            let mut cfg = DrqnConfig::new(Backend::Bptt);
            cfg.optimizer = OptimizerConfig::sgd(1e-3);
            cfg.td_reduction = reduction;
            cfg.batch = 4;
            cfg.cells = 6;
            let mut agent = DrqnAgent::new(cfg).unwrap();
            for _ in 0..3 {
                agent.run_episode(true).unwrap();
            }
            let before = agent.params.w_out.clone();
            agent.update().unwrap();
            let after = agent.params.w_out.as_slice().to_vec();
            after
                .iter()
                .zip(before.as_slice())
                .map(|(a, b)| a - b)
                .collect::<Vec<_>>()
        };
        let sum = step(TdReduction::Sum);
        let mean = step(TdReduction::Mean);
        let ratio = sum[0] / mean[0];
        assert!(ratio >= 4.0 && (ratio - ratio.round()).abs() < 1e-6, "ratio {ratio}");
        for (s, m) in sum.iter().zip(&mean) {
            assert!(relative_error(*s, m * ratio, 1e-15) < 1e-9);
        }
        assert_eq!(TdReduction::parse("mean"), Some(TdReduction::Mean));
        assert_eq!(TdReduction::parse(TdReduction::Sum.name()), Some(TdReduction::Sum));
        assert_eq!(TdReduction::parse("median"), None);
    }

    #[test]
    fn warmup_then_training_is_deterministic() {
        let mut cfg = DrqnConfig::new(Backend::Bptt);
        cfg.warmup_episodes = 3;
        cfg.episodes = 6;
        cfg.batch = 4;
        cfg.cells = 8;
        cfg.train_every = 4;
        let run = |cfg: &DrqnConfig| {
            let mut rows = Vec::new();
            let summary = drqn_train(cfg, |r| rows.push(r.clone())).unwrap();
            (rows, summary)
        };
        let (rows, summary) = run(&cfg);
        assert_eq!(rows.len(), 6);
        assert!(rows[..3].iter().all(|r| r.loss.is_none() && r.epsilon == 1.0));
        assert!(rows[3..].iter().all(|r| r.loss.is_some()));
        assert!(summary.updates > 0);
        assert_eq!(run(&cfg), (rows.clone(), summary));
        let mut buf = Vec::new();
        write_drqn_log(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("episode,return,running_mean_100,epsilon,loss,wallclock_ms\n"));
        assert_eq!(text.lines().count(), 7);

        let mut ecfg = cfg;
        ecfg.backend = Backend::Eprop;
        ecfg.env = EnvKind::Flickering;
        let (erows, _) = run(&ecfg);
        assert_eq!(erows.len(), 6);
    }
}
