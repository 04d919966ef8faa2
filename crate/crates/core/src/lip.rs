//! Step-to-step dynamics of the 3D linear inverted pendulum.
//!
//! The state is sampled at the exchange of support. During a step the new
//! stance foot sits at `p = com - (ux, uy)` and the horizontal COM obeys
//! `xdd = w^2 (x - p)`, which integrates in closed form over the step
//! duration. The heading of the reachability rectangle jumps by `utheta`
//! at the start of the step and is otherwise constant.

use nalgebra::{SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StateMatrix = SMatrix<f64, 5, 5>;
pub type InputMatrix = SMatrix<f64, 5, 3>;

/// Physical parameters of the pendulum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLipParams", into = "RawLipParams")]
pub struct LipParams {
    com_height: f64,
    step_duration: f64,
    gravity: f64,
    omega: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLipParams {
    com_height: f64,
    step_duration: f64,
    #[serde(default = "default_gravity")]
    gravity: f64,
}

fn default_gravity() -> f64 {
    9.81
}

impl TryFrom<RawLipParams> for LipParams {
    type Error = Error;
    fn try_from(raw: RawLipParams) -> Result<Self> {
        LipParams::new(raw.com_height, raw.step_duration, raw.gravity)
    }
}

impl From<LipParams> for RawLipParams {
    fn from(p: LipParams) -> Self {
        RawLipParams {
            com_height: p.com_height,
            step_duration: p.step_duration,
            gravity: p.gravity,
        }
    }
}

impl LipParams {
    pub fn new(com_height: f64, step_duration: f64, gravity: f64) -> Result<Self> {
        for (name, value) in [
            ("com_height", com_height),
            ("step_duration", step_duration),
            ("gravity", gravity),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {value}")));
            }
        }
        Ok(Self {
            com_height,
            step_duration,
            gravity,
            omega: (gravity / com_height).sqrt(),
        })
    }

    pub fn com_height(&self) -> f64 {
        self.com_height
    }

    pub fn step_duration(&self) -> f64 {
        self.step_duration
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    /// Natural frequency `sqrt(g / H)`.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Coefficients of the per-axis 2x2 step map:
    /// `[pos+; vel+] = [[1, a], [0, c]] [pos; vel] + [b, d] u`.
    pub fn axis_coefficients(&self) -> AxisMap {
        let wt = self.omega * self.step_duration;
        let (s, c) = (wt.sinh(), wt.cosh());
        AxisMap {
            pos_from_vel: s / self.omega,
            pos_from_input: c - 1.0,
            vel_from_vel: c,
            vel_from_input: self.omega * s,
        }
    }
}

impl Default for LipParams {
    fn default() -> Self {
        LipParams::new(0.9, 0.4, 9.81).expect("default LIP parameters are valid")
    }
}

/// One horizontal axis of the step map. Position does not feed back into
/// the next state other than through the identity term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisMap {
    pub pos_from_vel: f64,
    pub pos_from_input: f64,
    pub vel_from_vel: f64,
    pub vel_from_input: f64,
}

impl AxisMap {
    pub fn apply(&self, pos: f64, vel: f64, input: f64) -> (f64, f64) {
        (
            pos + self.pos_from_vel * vel + self.pos_from_input * input,
            self.vel_from_vel * vel + self.vel_from_input * input,
        )
    }

    /// Inverse of `apply` for a known input. The 2x2 block has unit
    /// determinant because `cosh^2 - sinh^2 = 1`.
    pub fn invert(&self, pos_next: f64, vel_next: f64, input: f64) -> (f64, f64) {
        let vel = (vel_next - self.vel_from_input * input) / self.vel_from_vel;
        let pos = pos_next - self.pos_from_vel * vel - self.pos_from_input * input;
        (pos, vel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipState {
    pub x: f64,
    pub xdot: f64,
    pub y: f64,
    pub ydot: f64,
    /// Heading of the reachability rectangle. Not wrapped.
    pub theta: f64,
}

impl LipState {
    pub fn new(x: f64, xdot: f64, y: f64, ydot: f64, theta: f64) -> Self {
        Self { x, xdot, y, ydot, theta }
    }

    pub fn to_vector(&self) -> SVector<f64, 5> {
        SVector::<f64, 5>::new(self.x, self.xdot, self.y, self.ydot, self.theta)
    }

    pub fn from_vector(v: &SVector<f64, 5>) -> Self {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }
}

/// Footstep command: COM minus new stance-foot position, plus heading change.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LipInput {
    pub ux: f64,
    pub uy: f64,
    pub utheta: f64,
}

impl LipInput {
    pub fn new(ux: f64, uy: f64, utheta: f64) -> Self {
        Self { ux, uy, utheta }
    }

    pub fn to_vector(&self) -> SVector<f64, 3> {
        SVector::<f64, 3>::new(self.ux, self.uy, self.utheta)
    }
}

/// Closed-form `A` and `B` of `x+ = A x + B u`.
pub fn step_matrices(params: &LipParams) -> (StateMatrix, InputMatrix) {
    let m = params.axis_coefficients();
    let mut a = StateMatrix::zeros();
    let mut b = InputMatrix::zeros();
    for (axis, input) in [(0usize, 0usize), (2, 1)] {
        a[(axis, axis)] = 1.0;
        a[(axis, axis + 1)] = m.pos_from_vel;
        a[(axis + 1, axis + 1)] = m.vel_from_vel;
        b[(axis, input)] = m.pos_from_input;
        b[(axis + 1, input)] = m.vel_from_input;
    }
    a[(4, 4)] = 1.0;
    b[(4, 2)] = 1.0;
    (a, b)
}

pub fn step(state: &LipState, input: &LipInput, params: &LipParams) -> LipState {
    let m = params.axis_coefficients();
    let (x, xdot) = m.apply(state.x, state.xdot, input.ux);
    let (y, ydot) = m.apply(state.y, state.ydot, input.uy);
    LipState::new(x, xdot, y, ydot, state.theta + input.utheta)
}

/// Recovers the pre-step state from the post-step state and the input used.
pub fn inverse_step(next: &LipState, input: &LipInput, params: &LipParams) -> LipState {
    let m = params.axis_coefficients();
    let (x, xdot) = m.invert(next.x, next.xdot, input.ux);
    let (y, ydot) = m.invert(next.y, next.ydot, input.uy);
    LipState::new(x, xdot, y, ydot, next.theta - input.utheta)
}

/// Horizontal COM position.
pub fn output(state: &LipState) -> Vector2<f64> {
    Vector2::new(state.x, state.y)
}

/// Adds a velocity impulse at a step boundary.
pub fn apply_impulse(state: &LipState, dvx: f64, dvy: f64) -> LipState {
    LipState {
        xdot: state.xdot + dvx,
        ydot: state.ydot + dvy,
        ..*state
    }
}

/// Velocity change produced by a force held for `duration` on a point mass.
pub fn impulse_from_force(force: f64, duration: f64, mass: f64) -> f64 {
    force * duration / mass
}
