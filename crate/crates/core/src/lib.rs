pub mod backbones;
pub mod cli;
pub mod error;
pub mod evalsuite;
pub mod graph;
pub mod numerics;
pub mod unlearner;

pub use error::{Error, Result};
