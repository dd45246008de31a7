//! Differential GAN toolkit: conditional face-attribute synthesis with a
//! standard and a differential discriminator.

pub mod checkpoint;
pub mod config;
pub mod datapipe;
pub mod discriminator;
pub mod error;
pub mod eval;
pub mod generator;
pub mod image;
pub mod label;
pub mod nn;
pub mod objectives;
pub mod optim;
pub mod rng;
pub mod synthesis;
pub mod trainer;

pub use error::{Error, Result};
