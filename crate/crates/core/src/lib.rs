//! Core building blocks of a knowledge-boosted deep reinforcement learning
//! laboratory: a partially observable food-gathering world, a noisy detector,
//! knowledge-derived features, a small neural network library, value-based
//! and actor-critic learners, a rule-driven planner and the arbitration DQN.

pub mod a3c;
pub mod detector;
pub mod env;
pub mod error;
pub mod features;
pub mod knowledge;
pub mod neural;
pub mod rl;
pub mod selector;

pub use error::{Error, Result};
