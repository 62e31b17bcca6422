//! Multi-agent RL laboratory built around an agent-identity classifier.
//!
//! A classifier is trained online to predict which agent produced an
//! observation; its per-agent probability is paid out as an intrinsic reward
//! that pushes agents toward mutually distinguishable trajectories. Two
//! learners consume the signal (a monotonic value-mixing Q-learner and a
//! centralized-critic actor-critic), evaluated on cooperative grid worlds.

pub mod actor_critic;
pub mod classifier;
pub mod config;
pub mod envs;
pub mod error;
pub mod manifest;
pub mod nnkit;
pub mod presets;
pub mod qmix;
pub mod replay;
pub mod report;
pub mod seeds;
pub mod trainer;

pub use error::{Error, Result};
