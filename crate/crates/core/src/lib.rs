//! Model-based reinforcement learning with a recurrent adaptive forward
//! model, applied to reaching under visuomotor perturbations.

pub mod arm;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod model;
pub mod neural;
pub mod planner;
pub mod point;
pub mod report;
pub mod rng;
pub mod stats;
pub mod task;
pub mod transforms;

pub use error::{Error, Result};
pub use point::Point2;
