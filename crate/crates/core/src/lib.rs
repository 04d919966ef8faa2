//! Model predictive contouring control for a walking robot modeled as a
//! linear inverted pendulum: path geometry, the condensed footstep program,
//! an SQP solver, closed-loop simulation and scenario files.

pub mod error;
pub mod frames;
pub mod lip;
pub mod obstacle;
pub mod ocp;
pub mod path;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
