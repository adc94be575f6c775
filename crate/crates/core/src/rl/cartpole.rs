//! Cart-pole balancing with Euler integration.

use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const TAU: f64 = 0.02;
pub const FORCE: f64 = 10.0;
pub const GRAVITY: f64 = 9.8;
pub const MASS_CART: f64 = 1.0;
pub const MASS_POLE: f64 = 0.1;
/// Half the pole length.
pub const HALF_LENGTH: f64 = 0.5;
pub const X_LIMIT: f64 = 2.4;
pub const THETA_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;
pub const MAX_STEPS: u32 = 200;

pub const NUM_ACTIONS: usize = 2;
pub const OBS_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Left,
    Right,
}

impl Action {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        match i {
            0 => Ok(Action::Left),
            1 => Ok(Action::Right),
            _ => Err(Error::InvalidArgument(format!("action index {i} out of range"))),
        }
    }

    pub fn mirrored(self) -> Self {
        match self {
            Action::Left => Action::Right,
            Action::Right => Action::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub steps_elapsed: u32,
}

impl CartPoleState {
    /// Each component drawn from U(-jitter, jitter).
    pub fn reset(rng: &mut Rng, jitter: f64) -> Self {
        let mut draw = || rng.uniform_range(-jitter, jitter);
        Self {
            x: draw(),
            x_dot: draw(),
            theta: draw(),
            theta_dot: draw(),
            steps_elapsed: 0,
        }
    }

    pub fn observation(&self) -> [f64; OBS_DIM] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn out_of_bounds(&self) -> bool {
        self.x.abs() > X_LIMIT || self.theta.abs() > THETA_LIMIT
    }

    pub fn is_terminal(&self) -> bool {
        self.out_of_bounds() || self.steps_elapsed >= MAX_STEPS
    }

    pub fn mirrored(&self) -> Self {
        Self {
            x: -self.x,
            x_dot: -self.x_dot,
            theta: -self.theta,
            theta_dot: -self.theta_dot,
            steps_elapsed: self.steps_elapsed,
        }
    }
}

/// Advances one step; returns `(next, reward, done)`.
pub fn cartpole_step(state: &CartPoleState, action: Action) -> Result<(CartPoleState, f64, bool)> {
    if state.is_terminal() {
        return Err(Error::InvalidArgument("cannot step a terminal cart-pole state".into()));
    }
    let force = match action {
        Action::Left => -FORCE,
        Action::Right => FORCE,
    };
    let total_mass = MASS_CART + MASS_POLE;
    let pole_mass_length = MASS_POLE * HALF_LENGTH;
    let (sin, cos) = state.theta.sin_cos();
    let temp = (force + pole_mass_length * state.theta_dot * state.theta_dot * sin) / total_mass;
    let theta_acc = (GRAVITY * sin - cos * temp) / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos * cos / total_mass));
    let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;
    let next = CartPoleState {
        x: state.x + TAU * state.x_dot,
        x_dot: state.x_dot + TAU * x_acc,
        theta: state.theta + TAU * state.theta_dot,
        theta_dot: state.theta_dot + TAU * theta_acc,
        steps_elapsed: state.steps_elapsed + 1,
    };
    Ok((next, 1.0, next.is_terminal()))
}

/// Returns all zeros with probability `p`, else the observation unchanged.
pub fn flicker(obs: [f64; OBS_DIM], rng: &mut Rng, p: f64) -> [f64; OBS_DIM] {
    if rng.bernoulli(p) {
        [0.0; OBS_DIM]
    } else {
        obs
    }
}

/// Environment wrapper with its own random stream for resets and flicker draws.
#[derive(Debug, Clone)]
pub struct CartPoleEnv {
    state: CartPoleState,
    rng: Rng,
    jitter: f64,
    /// Probability of a blanked observation; 0 gives the standard environment.
    flicker_p: f64,
}

impl CartPoleEnv {
    pub fn new(rng: Rng, jitter: f64, flicker_p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&flicker_p) {
            return Err(Error::Config(format!("flicker probability {flicker_p} outside [0, 1]")));
        }
        if !(jitter.is_finite() && jitter >= 0.0) {
            return Err(Error::Config(format!("reset jitter {jitter} must be finite and >= 0")));
        }
        Ok(Self {
            state: CartPoleState::default(),
            rng,
            jitter,
            flicker_p,
        })
    }

    pub fn state(&self) -> &CartPoleState {
        &self.state
    }

    pub fn reset(&mut self) -> [f64; OBS_DIM] {
        self.state = CartPoleState::reset(&mut self.rng, self.jitter);
        self.observe()
    }

    /// `(observation, reward, done)`.
    pub fn step(&mut self, action: Action) -> Result<([f64; OBS_DIM], f64, bool)> {
        let (next, reward, done) = cartpole_step(&self.state, action)?;
        self.state = next;
        Ok((self.observe(), reward, done))
    }

    fn observe(&mut self) -> [f64; OBS_DIM] {
        let obs = self.state.observation();
        if self.flicker_p > 0.0 {
            flicker(obs, &mut self.rng, self.flicker_p)
        } else {
            obs
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_right_from_rest() {
        let (next, reward, done) = cartpole_step(&CartPoleState::default(), Action::Right).unwrap();
        // x'' = F/M + m·l·θ''/M and θ'' = -(F/M)/(l·(4/3 - m/M)) at θ = 0.
        let m = MASS_CART + MASS_POLE;
        let theta_acc = -(FORCE / m) / (HALF_LENGTH * (4.0 / 3.0 - MASS_POLE / m));
        let x_acc = FORCE / m - MASS_POLE * HALF_LENGTH * theta_acc / m;
        assert!((theta_acc - -14.634).abs() < 1e-3);
        assert!((x_acc - 9.7561).abs() < 1e-4);
        assert!((next.x_dot - 0.19512).abs() < 1e-5);
        assert!((next.theta_dot - -0.29268).abs() < 1e-5);
        assert_eq!((next.x, next.theta), (0.0, 0.0));
        assert_eq!((reward, done, next.steps_elapsed), (1.0, false, 1));
    }

    #[test]
    fn mirror_symmetry() {
        let mut rng = Rng::new(5);
        for _ in 0..1000 {
            let s = CartPoleState {
                x: rng.uniform_range(-2.0, 2.0),
                x_dot: rng.uniform_range(-2.0, 2.0),
                theta: rng.uniform_range(-0.2, 0.2),
                theta_dot: rng.uniform_range(-2.0, 2.0),
                steps_elapsed: 3,
            };
            let a = if rng.bernoulli(0.5) {
                Action::Left
            } else {
                Action::Right
            };
            let (n, ..) = cartpole_step(&s, a).unwrap();
            let (m, ..) = cartpole_step(&s.mirrored(), a.mirrored()).unwrap();
            assert_eq!(m, n.mirrored());
        }
    }

    #[test]
    fn step_limit_and_terminal_errors() {
        // Alternating pushes keep the pole up for the whole episode from rest.
        let mut s = CartPoleState::default();
        let mut ret = 0.0;
        let mut done = false;
        let mut t = 0;
        while !done {
            let a = if s.theta_dot + s.theta > 0.0 {
                Action::Right
            } else {
                Action::Left
            };
            let (n, r, d) = cartpole_step(&s, a).unwrap();
            s = n;
            ret += r;
            done = d;
            t += 1;
        }
        assert_eq!((t, ret), (200, 200.0));
        assert!(!s.out_of_bounds());
        assert!(cartpole_step(&s, Action::Left).is_err());

        let tipped = CartPoleState {
            theta: 0.25,
            ..CartPoleState::default()
        };
        assert!(cartpole_step(&tipped, Action::Left).is_err());
    }

    #[test]
    fn flicker_rates() {
        let obs = [1.0, 2.0, 3.0, 4.0];
        let mut rng = Rng::new(6);
        assert!((0..1000).all(|_| flicker(obs, &mut rng, 0.0) == obs));
        assert!((0..1000).all(|_| flicker(obs, &mut rng, 1.0) == [0.0; 4]));
        let zeros = (0..100_000).filter(|_| flicker(obs, &mut rng, 0.2) == [0.0; 4]).count();
        let rate = zeros as f64 / 1e5;
        assert!((rate - 0.2).abs() < 0.01, "zero rate {rate}");
    }

    #[test]
    fn environment_is_deterministic() {
        let run = || {
            let mut env = CartPoleEnv::new(Rng::new(7), 0.05, 0.2).unwrap();
            let mut trace = vec![env.reset()];
            let mut done = false;
            while !done {
                let (o, _, d) = env.step(Action::Left).unwrap();
                trace.push(o);
                done = d;
            }
            trace
        };
        let a = run();
        assert_eq!(a, run());
        assert!(a[0].iter().all(|v| v.abs() <= 0.05));
        assert!(CartPoleEnv::new(Rng::new(7), 0.05, 1.5).is_err());
    }
}
