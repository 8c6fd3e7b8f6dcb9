pub mod archive;
pub mod envs;
pub mod error;
pub mod manifold;
pub mod nn;
pub mod operators;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
