//! Data-dependent Ricci curvature for the connections of feedforward
//! networks, with ranking and pruning-sweep tooling.

pub mod cli;
pub mod curvature;
pub mod data;
pub mod error;
pub mod graph;
pub mod nn;
pub mod pruning;
pub mod ranking;

pub use error::{Error, Result};
