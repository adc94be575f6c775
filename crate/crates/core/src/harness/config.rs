//! Run configuration with a flat `key = value` text form.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::eprop::TraceScale;
use crate::error::{Error, Result};
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::rl::{Backend, DrqnConfig, EnvKind, TdReduction};
use crate::tasks::{Delay, TcaConfig};
use crate::train::Engine;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Smnist,
    Psmnist,
    Tca,
    Cartpole,
    CartpolePo,
    Gradcheck,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Smnist => "smnist",
            Task::Psmnist => "psmnist",
            Task::Tca => "tca",
            Task::Cartpole => "cartpole",
            Task::CartpolePo => "cartpole-po",
            Task::Gradcheck => "gradcheck",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "smnist" => Task::Smnist,
            "psmnist" => Task::Psmnist,
            "tca" => Task::Tca,
            "cartpole" => Task::Cartpole,
            "cartpole-po" => Task::CartpolePo,
            "gradcheck" => Task::Gradcheck,
            other => return Err(Error::Config(format!("unknown task '{other}'"))),
        })
    }

    pub fn is_mnist(self) -> bool {
        matches!(self, Task::Smnist | Task::Psmnist)
    }

    pub fn is_cartpole(self) -> bool {
        matches!(self, Task::Cartpole | Task::CartpolePo)
    }
}

/// Every knob of a run. Together with `seed`, a persisted config determines the run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub engine: Engine,
    pub seed: u64,
    pub cells: usize,
    pub batch: usize,
    /// Passes over the training set (MNIST tasks).
    pub epochs: usize,
    /// Optimizer updates (TCA).
    pub updates: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub opt_eps: f64,
    pub rho: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub forget_bias_delta: f64,
    /// Echo weight λ, or the numerator of `λ / sequence length` when `echo_per_length` is set.
    pub echo_lambda: f64,
    pub echo_per_length: bool,
    pub mu_in: f64,
    pub mu_rec: f64,
    pub mu_bias: f64,
    /// Global-norm clipping threshold; 0 disables clipping.
    pub clip_norm: f64,
    pub tca_delay: Delay,
    /// Number of training/test images used; 0 means all.
    pub train_size: usize,
    pub test_size: usize,
    /// Evaluate on the test set every this many epochs.
    pub eval_every: usize,
    pub running_window: usize,
    /// Early stop: TCA when the running error falls below it, MNIST when test
    /// accuracy reaches it, cart-pole when the 100-episode mean reaches it. 0 disables.
    pub stop_at: f64,
    pub record_wallclock: bool,
    pub data_dir: Option<PathBuf>,
    // Recurrent Q-learning.
    pub episodes: usize,
    pub warmup_episodes: usize,
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_steps: u64,
    pub target_update: u64,
    pub bptt_window: usize,
    pub eprop_window: usize,
    pub replay_capacity: usize,
    pub train_every: u64,
    pub td_reduction: TdReduction,
    pub jitter: f64,
    pub flicker_p: f64,
    // Gradient check.
    pub instances: usize,
    pub seq_len: usize,
    pub fd_step: f64,
}

impl RunConfig {
    /// Defaults for a task and engine.
    pub fn defaults(task: Task, engine: Engine) -> Self {
        let mut c = RunConfig {
            task,
            engine,
            seed: 0,
            cells: 128,
            batch: 64,
            epochs: 350,
            updates: 90_000,
            optimizer: OptimizerKind::RmsProp,
            lr: 0.001,
            opt_eps: 1e-8,
            rho: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            forget_bias_delta: 0.0,
            echo_lambda: 0.0,
            echo_per_length: false,
            mu_in: 1.0,
            mu_rec: 1.0,
            mu_bias: 1.0,
            clip_norm: 0.0,
            tca_delay: Delay::Fixed(10),
            train_size: 0,
            test_size: 0,
            eval_every: 1,
            running_window: 250,
            stop_at: 0.0,
            record_wallclock: false,
            data_dir: None,
            episodes: 1500,
            warmup_episodes: 200,
            gamma: 0.99,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_steps: 10_000,
            target_update: 500,
            bptt_window: 8,
            eprop_window: 0,
            replay_capacity: 5000,
            train_every: 1,
            td_reduction: TdReduction::Sum,
            jitter: 0.05,
            flicker_p: 0.2,
            instances: 100,
            seq_len: 20,
            fd_step: 1e-5,
        };
        match task {
            Task::Smnist | Task::Psmnist => {
                if engine == Engine::Bptt {
                    c.lr = 0.0005;
                }
            }
            Task::Tca => {
                c.cells = 32;
                if engine == Engine::Bptt {
                    c.optimizer = OptimizerKind::Adam;
                } else {
                    c.lr = 0.01;
                    c.forget_bias_delta = 1.8;
                    c.echo_lambda = 1e-4;
                    c.echo_per_length = true;
                }
            }
            Task::Cartpole | Task::CartpolePo => {
                let d = DrqnConfig::new(if engine == Engine::Bptt {
                    Backend::Bptt
                } else {
                    Backend::Eprop
                });
                c.cells = d.cells;
                c.batch = d.batch;
                c.optimizer = d.optimizer.kind;
                c.lr = d.optimizer.lr;
                c.opt_eps = d.optimizer.eps;
                c.mu_in = d.trace_scale.input;
                c.mu_rec = d.trace_scale.recurrent;
                c.mu_bias = d.trace_scale.bias;
                c.train_every = d.train_every;
                c.td_reduction = d.td_reduction;
                if task == Task::CartpolePo {
                    c.episodes = 3000;
                }
            }
            Task::Gradcheck => {
                c.cells = 6;
            }
        }
        c
    }

    /// Builds a config from `key = value` pairs, later pairs overriding earlier ones.
    /// `task` and `engine` select the defaults the other keys are applied to.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self> {
        let last = |key: &str| {
            pairs
                .iter()
                .rev()
                .find(|(k, _)| k.as_ref() == key)
                .map(|(_, v)| v.as_ref())
        };
        let task = last("task").map(Task::parse).transpose()?.unwrap_or(Task::Smnist);
        let engine = last("engine")
            .map(Engine::parse)
            .transpose()?
            .unwrap_or(Engine::EpropSymmetric);
        let mut cfg = Self::defaults(task, engine);
        for (k, v) in pairs {
            cfg.set(k.as_ref(), v.as_ref())?;
        }
        // BPTT on the 20-step delay trains better with RMSProp than with Adam.
        if task == Task::Tca
            && engine == Engine::Bptt
            && cfg.tca_delay == Delay::Fixed(20)
            && last("optimizer").is_none()
        {
            cfg.optimizer = OptimizerKind::RmsProp;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses the flat text form: one `key = value` per line, `#` starts a comment.
    pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got '{raw}'", n + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(pairs)
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        Self::from_pairs(&Self::parse_kv(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&std::fs::read_to_string(path)?)
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("invalid value '{v}' for {key}")))
        }
        fn flag(key: &str, v: &str) -> Result<bool> {
            match v {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => Err(Error::Config(format!("invalid boolean '{v}' for {key}"))),
            }
        }
        match key {
            "task" => self.task = Task::parse(value)?,
            "engine" => self.engine = Engine::parse(value)?,
            "seed" => self.seed = num(key, value)?,
            "cells" => self.cells = num(key, value)?,
            "batch" => self.batch = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "updates" => self.updates = num(key, value)?,
            "optimizer" => self.optimizer = OptimizerKind::parse(value)?,
            "lr" => self.lr = num(key, value)?,
            "opt_eps" => self.opt_eps = num(key, value)?,
            "rho" => self.rho = num(key, value)?,
            "beta1" => self.beta1 = num(key, value)?,
            "beta2" => self.beta2 = num(key, value)?,
            "forget_bias_delta" => self.forget_bias_delta = num(key, value)?,
            "echo_lambda" => self.echo_lambda = num(key, value)?,
            "echo_per_length" => self.echo_per_length = flag(key, value)?,
            "mu_in" => self.mu_in = num(key, value)?,
            "mu_rec" => self.mu_rec = num(key, value)?,
            "mu_bias" => self.mu_bias = num(key, value)?,
            "clip_norm" => self.clip_norm = num(key, value)?,
            "tca_delay" => self.tca_delay = parse_delay(value)?,
            "train_size" => self.train_size = num(key, value)?,
            "test_size" => self.test_size = num(key, value)?,
            "eval_every" => self.eval_every = num(key, value)?,
            "running_window" => self.running_window = num(key, value)?,
            "stop_at" => self.stop_at = num(key, value)?,
            "wallclock" => self.record_wallclock = flag(key, value)?,
            "data_dir" => self.data_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "episodes" => self.episodes = num(key, value)?,
            "warmup_episodes" => self.warmup_episodes = num(key, value)?,
            "gamma" => self.gamma = num(key, value)?,
            "eps_start" => self.eps_start = num(key, value)?,
            "eps_end" => self.eps_end = num(key, value)?,
            "eps_decay_steps" => self.eps_decay_steps = num(key, value)?,
            "target_update" => self.target_update = num(key, value)?,
            "bptt_window" => self.bptt_window = num(key, value)?,
            "eprop_window" => self.eprop_window = num(key, value)?,
            "replay_capacity" => self.replay_capacity = num(key, value)?,
            "train_every" => self.train_every = num(key, value)?,
            "td_reduction" => {
                self.td_reduction = TdReduction::parse(value)
                    .ok_or_else(|| Error::Config(format!("td_reduction must be sum or mean, got '{value}'")))?
            }
            "jitter" => self.jitter = num(key, value)?,
            "flicker_p" => self.flicker_p = num(key, value)?,
            "instances" => self.instances = num(key, value)?,
            "seq_len" => self.seq_len = num(key, value)?,
            "fd_step" => self.fd_step = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// All keys in a fixed order. Floats use the shortest round-trip form.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("task", self.task.name().into());
        put("engine", self.engine.name().into());
        put("seed", self.seed.to_string());
        put("cells", self.cells.to_string());
        put("batch", self.batch.to_string());
        put("epochs", self.epochs.to_string());
        put("updates", self.updates.to_string());
        put("optimizer", self.optimizer.name().into());
        put("lr", format!("{:?}", self.lr));
        put("opt_eps", format!("{:?}", self.opt_eps));
        put("rho", format!("{:?}", self.rho));
        put("beta1", format!("{:?}", self.beta1));
        put("beta2", format!("{:?}", self.beta2));
        put("forget_bias_delta", format!("{:?}", self.forget_bias_delta));
        put("echo_lambda", format!("{:?}", self.echo_lambda));
        put("echo_per_length", self.echo_per_length.to_string());
        put("mu_in", format!("{:?}", self.mu_in));
        put("mu_rec", format!("{:?}", self.mu_rec));
        put("mu_bias", format!("{:?}", self.mu_bias));
        put("clip_norm", format!("{:?}", self.clip_norm));
        put("tca_delay", delay_text(self.tca_delay));
        put("train_size", self.train_size.to_string());
        put("test_size", self.test_size.to_string());
        put("eval_every", self.eval_every.to_string());
        put("running_window", self.running_window.to_string());
        put("stop_at", format!("{:?}", self.stop_at));
        put("wallclock", self.record_wallclock.to_string());
        put(
            "data_dir",
            self.data_dir
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        put("episodes", self.episodes.to_string());
        put("warmup_episodes", self.warmup_episodes.to_string());
        put("gamma", format!("{:?}", self.gamma));
        put("eps_start", format!("{:?}", self.eps_start));
        put("eps_end", format!("{:?}", self.eps_end));
        put("eps_decay_steps", self.eps_decay_steps.to_string());
        put("target_update", self.target_update.to_string());
        put("bptt_window", self.bptt_window.to_string());
        put("eprop_window", self.eprop_window.to_string());
        put("replay_capacity", self.replay_capacity.to_string());
        put("train_every", self.train_every.to_string());
        put("td_reduction", self.td_reduction.name().to_string());
        put("jitter", format!("{:?}", self.jitter));
        put("flicker_p", format!("{:?}", self.flicker_p));
        put("instances", self.instances.to_string());
        put("seq_len", self.seq_len.to_string());
        put("fd_step", format!("{:?}", self.fd_step));
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.cells == 0 || self.batch == 0 {
            return bad("cells and batch must be >= 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be finite and > 0, got {}", self.lr));
        }
        if !(self.opt_eps.is_finite() && self.opt_eps > 0.0) {
            return bad(format!("opt_eps must be finite and > 0, got {}", self.opt_eps));
        }
        if self.clip_norm.is_nan() || self.clip_norm < 0.0 || !self.forget_bias_delta.is_finite() {
            return bad("clip_norm must be >= 0 and forget_bias_delta finite".into());
        }
        if self.running_window == 0 || self.eval_every == 0 {
            return bad("running_window and eval_every must be >= 1".into());
        }
        self.eprop_config_for_len(1).validate()?;
        if self.task.is_cartpole() {
            if self.engine == Engine::EpropRandom {
                return bad("cart-pole supports the eprop-symmetric and bptt engines".into());
            }
            self.drqn()?.validate()?;
        }
        if self.task == Task::Tca {
            self.tca().validate()?;
        }
        Ok(())
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            lr: self.lr,
            rho: self.rho,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.opt_eps,
        }
    }

    pub fn trace_scale(&self) -> TraceScale {
        TraceScale {
            input: self.mu_in,
            recurrent: self.mu_rec,
            bias: self.mu_bias,
        }
    }

    /// Echo weight for a sequence of `len` steps.
    pub fn echo_for_len(&self, len: usize) -> f64 {
        if self.echo_per_length {
            self.echo_lambda / len as f64
        } else {
            self.echo_lambda
        }
    }

    pub fn eprop_config_for_len(&self, len: usize) -> crate::eprop::EpropConfig {
        crate::eprop::EpropConfig {
            signal_mode: crate::eprop::SignalMode::FinalStepOnly,
            echo_lambda: self.echo_for_len(len),
            scale: self.trace_scale(),
            feedback: self.engine.feedback_mode(),
        }
    }

    pub fn tca(&self) -> TcaConfig {
        TcaConfig::with_delay(self.tca_delay)
    }

    pub fn clip(&self) -> Option<f64> {
        (self.clip_norm > 0.0).then_some(self.clip_norm)
    }

    pub fn drqn(&self) -> Result<DrqnConfig> {
        let backend = match self.engine {
            Engine::Bptt => Backend::Bptt,
            Engine::EpropSymmetric => Backend::Eprop,
            Engine::EpropRandom => {
                return Err(Error::Config("cart-pole has no random-feedback backend".into()));
            }
        };
        Ok(DrqnConfig {
            backend,
            env: if self.task == Task::CartpolePo {
                EnvKind::Flickering
            } else {
                EnvKind::Standard
            },
            cells: self.cells,
            optimizer: self.optimizer_config(),
            trace_scale: self.trace_scale(),
            forget_bias_delta: self.forget_bias_delta,
            gamma: self.gamma,
            eps_start: self.eps_start,
            eps_end: self.eps_end,
            eps_decay_steps: self.eps_decay_steps,
            target_update: self.target_update,
            bptt_window: self.bptt_window,
            eprop_window: self.eprop_window,
            replay_capacity: self.replay_capacity,
            batch: self.batch,
            train_every: self.train_every,
            td_reduction: self.td_reduction,
            jitter: self.jitter,
            flicker_p: self.flicker_p,
            warmup_episodes: self.warmup_episodes,
            episodes: self.episodes,
            clip_norm: self.clip(),
            stop_at_mean: (self.stop_at > 0.0).then_some(self.stop_at),
            record_wallclock: self.record_wallclock,
            seed: self.seed,
        })
    }
}

fn parse_delay(v: &str) -> Result<Delay> {
    let num = |s: &str| {
        s.trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("invalid tca_delay '{v}'")))
    };
    match v.split_once('-') {
        Some((a, b)) => Ok(Delay::Uniform {
            min: num(a)?,
            max: num(b)?,
        }),
        None => Ok(Delay::Fixed(num(v)?)),
    }
}

fn delay_text(d: Delay) -> String {
    match d {
        Delay::Fixed(n) => n.to_string(),
        Delay::Uniform { min, max } => format!("{min}-{max}"),
    }
}
