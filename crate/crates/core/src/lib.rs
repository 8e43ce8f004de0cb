//! Two-stream imitation learning for a driving-and-shooting arena.
//!
//! Discrete actions (fire buttons) are cloned with feed-forward classifier
//! heads; continuous actions (throttle, steering) are cloned with an energy
//! model trained contrastively and queried by grid search or a
//! derivative-free sampler. The crate also contains the arena simulator, a
//! scripted demonstrator, the demonstration file format, evaluation metrics
//! and a session server for recording human play.

pub mod config;
pub mod dataset;
pub mod ebm;
pub mod encoders;
pub mod error;
pub mod expert;
pub mod ffbc;
pub mod hashing;
pub mod manifest;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod policy;
pub mod service;
pub mod sim;
pub mod training;

pub use error::{Error, ErrorClass, Result};
pub use sim::{ActionPair, Observation, SimConfig, StepEvents, WorldState};
