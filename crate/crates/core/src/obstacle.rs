//! Circular obstacles moving at constant velocity, and the discrete-time
//! barrier `b(x) = |C x - p_obs|^2 - r^2` used to keep the COM outside them.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lip::{self, LipInput, LipParams, LipState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Obstacle {
    pub radius: f64,
    /// Position at the current step.
    #[serde(rename = "start")]
    pub position: [f64; 2],
    #[serde(default)]
    pub velocity: [f64; 2],
    #[serde(default)]
    pub inflation: f64,
}

impl Obstacle {
    pub fn new(radius: f64, position: Vector2<f64>, velocity: Vector2<f64>) -> Self {
        Self {
            radius,
            position: position.into(),
            velocity: velocity.into(),
            inflation: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::invalid("obstacles.radius", "must be > 0"));
        }
        if !(self.inflation.is_finite() && self.inflation >= 0.0) {
            return Err(Error::invalid("obstacles.inflation", "must be >= 0"));
        }
        if !self.position.iter().chain(&self.velocity).all(|v| v.is_finite()) {
            return Err(Error::invalid("obstacles", "start and velocity must be finite"));
        }
        Ok(())
    }

    pub fn position(&self) -> Vector2<f64> {
        Vector2::from(self.position)
    }

    pub fn velocity(&self) -> Vector2<f64> {
        Vector2::from(self.velocity)
    }

    /// Radius including the safety margin.
    pub fn effective_radius(&self) -> f64 {
        self.radius + self.inflation
    }

    /// Constant-velocity position `steps_ahead` steps of duration `step_duration` from now.
    pub fn predict(&self, steps_ahead: usize, step_duration: f64) -> Vector2<f64> {
        self.position() + self.velocity() * (steps_ahead as f64 * step_duration)
    }

    /// The same obstacle one step later.
    pub fn advanced(&self, step_duration: f64) -> Self {
        Self {
            position: self.predict(1, step_duration).into(),
            ..*self
        }
    }
}

pub fn barrier(xy: &Vector2<f64>, obstacle_pos: &Vector2<f64>, effective_radius: f64) -> f64 {
    (xy - obstacle_pos).norm_squared() - effective_radius * effective_radius
}

/// `b(step(x, u)) - (1 - gamma) b(x)`; non-negative when the discrete CBF
/// condition holds. Each barrier uses the obstacle position at its own step.
pub fn cbf_residual(
    state: &LipState,
    input: &LipInput,
    obstacle_now: &Vector2<f64>,
    obstacle_next: &Vector2<f64>,
    effective_radius: f64,
    gamma: f64,
    params: &LipParams,
) -> f64 {
    let next = lip::step(state, input, params);
    barrier(&lip::output(&next), obstacle_next, effective_radius)
        - (1.0 - gamma) * barrier(&lip::output(state), obstacle_now, effective_radius)
}
