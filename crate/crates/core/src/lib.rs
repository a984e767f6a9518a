//! Indoor optical wireless simulator with a wall-mounted mirror array.
//!
//! Ceiling LED access points serve users whose links may be assisted by
//! individually steered mirrors. Tabular Q-learning and SARSA agents assign
//! one AP and one mirror per user to maximise a proportional-fair sum rate,
//! and are checked against an exhaustive optimum and heuristic baselines.

pub mod agents;
pub mod baselines;
pub mod blockage;
pub mod channel;
pub mod config;
pub mod env;
pub mod experiment;
pub mod geometry;
pub mod scene;
