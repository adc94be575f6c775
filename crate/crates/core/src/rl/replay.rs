//! Replay memory of whole episodes.

use std::collections::VecDeque;

use super::cartpole::{NUM_ACTIONS, OBS_DIM};
use crate::error::{Error, Result};
use crate::numerics::Rng;

pub const INPUT_DIM: usize = OBS_DIM + NUM_ACTIONS;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Observation as the agent saw it (zeroed when flickered).
    pub observation: [f64; OBS_DIM],
    /// Action of the previous step; `None` at the start of an episode.
    pub prev_action: Option<usize>,
    pub action: usize,
    pub reward: f64,
    pub done: bool,
}

impl Transition {
    /// Network input: observation followed by the one-hot previous action.
    pub fn input(&self) -> [f64; INPUT_DIM] {
        network_input(&self.observation, self.prev_action)
    }
}

pub fn network_input(obs: &[f64; OBS_DIM], prev_action: Option<usize>) -> [f64; INPUT_DIM] {
    let mut x = [0.0; INPUT_DIM];
    x[..OBS_DIM].copy_from_slice(obs);
    if let Some(a) = prev_action {
        x[OBS_DIM + a] = 1.0;
    }
    x
}

pub type Episode = Vec<Transition>;

/// A contiguous slice `[start, start + len)` of a stored episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRef {
    pub episode: usize,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<Episode>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            episodes: VecDeque::with_capacity(capacity.min(1 << 16)),
        })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stores an episode, evicting the oldest one when full. Empty episodes are rejected.
    pub fn push(&mut self, episode: Episode) -> Result<()> {
        if episode.is_empty() {
            return Err(Error::InvalidArgument("cannot store an empty episode".into()));
        }
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
        Ok(())
    }

    pub fn episode(&self, i: usize) -> &Episode {
        &self.episodes[i]
    }

    /// Uniform episode, then a uniform start such that the window fits inside it.
    /// `len = 0` or a length beyond the episode selects the whole episode.
    pub fn sample_window(&self, rng: &mut Rng, len: usize) -> Result<WindowRef> {
        if self.episodes.is_empty() {
            return Err(Error::InvalidArgument("sampling from an empty replay buffer".into()));
        }
        let episode = rng.below(self.episodes.len());
        let ep_len = self.episodes[episode].len();
        if len == 0 || len >= ep_len {
            return Ok(WindowRef {
                episode,
                start: 0,
                len: ep_len,
            });
        }
        Ok(WindowRef {
            episode,
            start: rng.below(ep_len - len + 1),
            len,
        })
    }

    pub fn window(&self, w: WindowRef) -> &[Transition] {
        &self.episodes[w.episode][w.start..w.start + w.len]
    }
}
