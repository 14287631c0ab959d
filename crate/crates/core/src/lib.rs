//! Learning to singulate a target object from clutter by pushing.
//!
//! The crate bundles a deterministic quasi-static push simulator
//! ([`physics`]), the decision process around it ([`env`]), heightmap
//! features ([`features`]), a small MLP stack ([`nn`]), deep Q-learning
//! agents with one value network per push primitive ([`agent`]), and the
//! training/evaluation harness ([`harness`]).

pub mod agent;
pub mod cli;
pub mod config;
pub mod env;
pub mod features;
pub mod geometry;
pub mod harness;
pub mod nn;
pub mod physics;
pub mod rng;
pub mod scene;
pub mod server;
