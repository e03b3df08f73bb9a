//! Curiosity-driven exploration of a simulated camera world: learning
//! progress picks goals in an autoencoder latent space, forward and inverse
//! models learn online, and an episodic memory replays past samples.

pub mod agent;
pub mod analysis;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod kv;
pub mod memory;
pub mod models;
pub mod motivation;
pub mod nn;
pub mod report;
pub mod stats;
pub mod svg;
pub mod world;

pub use error::{Error, Result};
