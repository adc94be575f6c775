//! Cart-pole environment, episode replay and a recurrent Q-learning agent.

pub mod cartpole;
pub mod drqn;
pub mod replay;

pub use cartpole::{cartpole_step, flicker, Action, CartPoleEnv, CartPoleState};
pub use drqn::{
    drqn_train, masked_td_error, td_targets, window_gradients, write_drqn_log, Backend, DrqnAgent, DrqnConfig,
    DrqnLogRow, DrqnLogWriter, DrqnSummary, EnvKind, TdReduction,
};
pub use replay::{network_input, Episode, ReplayBuffer, Transition, WindowRef};
