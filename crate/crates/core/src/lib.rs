//! Graph-based value estimation for object-goal navigation.

pub mod agent;
pub mod config;
pub mod diffcore;
pub mod evalkit;
pub mod experiment;
pub mod gridhouse;
pub mod gtn;
pub mod knowgraph;
pub mod trainer;
mod error;

pub use error::{Error, Result};
