//! Actor-critic learner: network, exploration and PPO.

mod explore;
mod network;
mod ppo;

pub use explore::{exploration_rate, mixed_prob, select_action, ExplorationSchedule, Selection};
pub use network::{argmax, softmax, Architecture, Forward, PolicyWeights, Role};
pub use ppo::{
    ppo_loss_and_grad, ppo_update, returns_and_advantages, LossReport, PpoHyperparams, Transition,
    TransitionBuffer,
};

/// Hidden layer widths of the default network.
pub const DEFAULT_HIDDEN: [usize; 2] = [32, 32];
