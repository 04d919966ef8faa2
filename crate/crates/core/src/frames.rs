//! Cartesian and contouring/lag error representations.
//!
//! The contouring frame is `P(phi) = [[sin, -cos], [-cos, -sin]]`, a
//! reflection, so `P = P^T = P^-1`. Applied to `position - y_d`, row one
//! is the (approximate) contouring error and row two the lag error, which
//! is positive when the robot trails the reference point.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{Path, TangentFrame};

/// Tracking weights for either error representation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum ErrorWeights {
    /// `Q = running * I`, `W = terminal * I`.
    Cartesian { running: f64, terminal: f64 },
    /// `Q = P^T diag(contour, lag) P`, likewise for the terminal weights.
    Contouring {
        running_contour: f64,
        running_lag: f64,
        terminal_contour: f64,
        terminal_lag: f64,
    },
}

impl ErrorWeights {
    pub fn validate(&self) -> Result<()> {
        let values: &[(&str, f64)] = match self {
            ErrorWeights::Cartesian { running, terminal } => {
                &[("weights.running", *running), ("weights.terminal", *terminal)]
            }
            ErrorWeights::Contouring {
                running_contour,
                running_lag,
                terminal_contour,
                terminal_lag,
            } => &[
                ("weights.running_contour", *running_contour),
                ("weights.running_lag", *running_lag),
                ("weights.terminal_contour", *terminal_contour),
                ("weights.terminal_lag", *terminal_lag),
            ],
        };
        for (name, v) in values {
            if !(v.is_finite() && *v > 0.0) {
                return Err(Error::invalid(*name, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Diagonal of the weight in the frame the cost is evaluated in:
    /// world axes for Cartesian, (contour, lag) for contouring.
    pub fn diagonal(&self, terminal: bool) -> Vector2<f64> {
        match (*self, terminal) {
            (ErrorWeights::Cartesian { running, .. }, false) => Vector2::repeat(running),
            (ErrorWeights::Cartesian { terminal, .. }, true) => Vector2::repeat(terminal),
            (
                ErrorWeights::Contouring {
                    running_contour,
                    running_lag,
                    ..
                },
                false,
            ) => Vector2::new(running_contour, running_lag),
            (
                ErrorWeights::Contouring {
                    terminal_contour,
                    terminal_lag,
                    ..
                },
                true,
            ) => Vector2::new(terminal_contour, terminal_lag),
        }
    }

    pub fn is_contouring(&self) -> bool {
        matches!(self, ErrorWeights::Contouring { .. })
    }
}

pub fn frame_matrix(phi: f64) -> Matrix2<f64> {
    let (s, c) = phi.sin_cos();
    frame_from(c, s)
}

/// `P` built from an already-normalized tangent `(cos, sin)`.
pub fn frame_from(cos: f64, sin: f64) -> Matrix2<f64> {
    Matrix2::new(sin, -cos, -cos, -sin)
}

/// Derivative of `P` with respect to the slope angle.
pub fn frame_derivative(cos: f64, sin: f64) -> Matrix2<f64> {
    Matrix2::new(cos, sin, sin, -cos)
}

pub(crate) fn frame_of(t: &TangentFrame) -> Matrix2<f64> {
    frame_from(t.cos, t.sin)
}

/// `(contour, lag)` error of `robot` against the path point at `param`.
pub fn contour_lag_error(robot: &Vector2<f64>, path: &Path, param: f64) -> Result<Vector2<f64>> {
    let sample = path.eval(param);
    let frame = Path::frame_of(&sample, param)?;
    Ok(frame_of(&frame) * (robot - sample.point))
}

/// Running and terminal weights expressed in world coordinates.
pub fn weight_matrices(weights: &ErrorWeights, phi: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let p = frame_matrix(phi);
    let rotate = |d: Vector2<f64>| match weights {
        ErrorWeights::Cartesian { .. } => Matrix2::from_diagonal(&d),
        ErrorWeights::Contouring { .. } => p.transpose() * Matrix2::from_diagonal(&d) * p,
    };
    (rotate(weights.diagonal(false)), rotate(weights.diagonal(true)))
}
