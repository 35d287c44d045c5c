//! Inter-slice radio resource allocation for a simulated base station, learned
//! with a small PPO actor-critic and accelerated by policy transfer from
//! pre-trained expert policies.
//!
//! The crate is organised bottom-up:
//!
//! * [`traffic`]: per-slice packet arrival generators and user-count sampling.
//! * [`env`]: the slicing environment (action grid, round-robin scheduling,
//!   state and reward).
//! * [`drl`]: the actor-critic network, exploration schedule and PPO update.
//! * [`transfer`]: policy reuse, distillation and the hybrid selector.
//! * [`policy_store`]: the on-disk expert policy directory.
//! * [`harness`]: run loops, exhaustive-search oracle, metrics, sweeps and reports.

pub mod drl;
pub mod env;
pub mod error;
pub mod harness;
pub mod policy_store;
pub mod seeding;
pub mod traffic;
pub mod transfer;

pub use error::{Error, Result};
