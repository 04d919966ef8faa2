//! Scenario files: TOML descriptions of one closed-loop experiment.
//!
//! Every table rejects unknown keys, and all values are validated before a
//! run starts. The shipped scenarios are compiled in and can be looked up
//! by name.

use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::ErrorWeights;
use crate::lip::{LipParams, LipState};
use crate::obstacle::Obstacle;
use crate::ocp::{Foot, OcpSpec, Rectangle};
use crate::path::{Path, PathSpec};
use crate::solver::SolverConfig;

const SHIPPED: &[(&str, &str)] = &[
    ("circle_tracking", include_str!("../scenarios/circle_tracking.toml")),
    ("circle_disturbed", include_str!("../scenarios/circle_disturbed.toml")),
    ("trail_cartesian", include_str!("../scenarios/trail_cartesian.toml")),
    ("overtake_mpcc", include_str!("../scenarios/overtake_mpcc.toml")),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub max_steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// Stance foot during the first step.
    pub stance: Foot,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub path: PathSpec,
    pub lip: LipParams,
    pub robot: Robot,
    pub mpc: Mpc,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub obstacles: Vec<Obstacle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<Disturbance>,
    #[serde(default)]
    pub goal: Goal,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Robot {
    /// kg; converts disturbance forces to velocity changes.
    #[serde(default = "default_mass")]
    pub mass: f64,
    pub initial_state: LipState,
}

fn default_mass() -> f64 {
    48.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mpc {
    pub horizon: usize,
    pub v_max: f64,
    pub progress_weight: f64,
    pub input_weight: [f64; 3],
    pub gamma: f64,
    pub step_distance: [f64; 2],
    pub weights: ErrorWeights,
    #[serde(default)]
    pub rectangle: Rectangle,
}

/// Random force pulses; the seed comes from the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    /// N, sampled uniformly per axis.
    pub force: [f64; 2],
    /// s.
    pub pulse_duration: f64,
    /// s; gaps between pulses are uniform on `[0, max_gap]`.
    pub max_gap: f64,
}

impl Default for Disturbance {
    fn default() -> Self {
        Self {
            force: [-50.0, 50.0],
            pulse_duration: 0.1,
            max_gap: 2.0,
        }
    }
}

/// Completion test: progress within `progress_fraction * p_end` of the end
/// and the COM within `position` meters of the path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Goal {
    pub progress_fraction: f64,
    pub position: f64,
}

impl Default for Goal {
    fn default() -> Self {
        Self {
            progress_fraction: 0.01,
            position: 0.1,
        }
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn load(file: &FsPath) -> Result<Scenario> {
        Scenario::parse(&std::fs::read_to_string(file)?)
    }

    /// A shipped scenario by name.
    pub fn shipped(name: &str) -> Option<Scenario> {
        SHIPPED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Scenario::parse(text).expect("shipped scenarios are valid"))
    }

    pub fn shipped_names() -> impl Iterator<Item = &'static str> {
        SHIPPED.iter().map(|(n, _)| *n)
    }

    pub fn shipped_text(name: &str) -> Option<&'static str> {
        SHIPPED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::invalid("name", "must not be empty"));
        }
        if self.max_steps == 0 {
            return Err(Error::invalid("max_steps", "must be >= 1"));
        }
        self.build_path()?;
        self.ocp_spec().validate()?;
        self.solver.validate()?;
        if !(self.robot.mass.is_finite() && self.robot.mass > 0.0) {
            return Err(Error::invalid("robot.mass", "must be > 0"));
        }
        if !self.robot.initial_state.is_finite() {
            return Err(Error::invalid("robot.initial_state", "must be finite"));
        }
        if let Some(d) = &self.disturbance {
            let [lo, hi] = d.force;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid("disturbance.force", "need finite lower <= upper"));
            }
            if !(d.pulse_duration.is_finite() && d.pulse_duration > 0.0) {
                return Err(Error::invalid("disturbance.pulse_duration", "must be > 0"));
            }
            if !(d.max_gap.is_finite() && d.max_gap >= 0.0) {
                return Err(Error::invalid("disturbance.max_gap", "must be >= 0"));
            }
        }
        let g = &self.goal;
        if !(g.progress_fraction.is_finite() && (0.0..1.0).contains(&g.progress_fraction)) {
            return Err(Error::invalid("goal.progress_fraction", "must lie in [0, 1)"));
        }
        if !(g.position.is_finite() && g.position > 0.0) {
            return Err(Error::invalid("goal.position", "must be > 0"));
        }
        Ok(())
    }

    pub fn build_path(&self) -> Result<Path> {
        self.path.build()
    }

    pub fn ocp_spec(&self) -> OcpSpec {
        OcpSpec {
            horizon: self.mpc.horizon,
            weights: self.mpc.weights,
            input_weight: self.mpc.input_weight,
            progress_weight: self.mpc.progress_weight,
            v_max: self.mpc.v_max,
            rectangle: self.mpc.rectangle,
            step_distance: self.mpc.step_distance,
            gamma: self.mpc.gamma,
            obstacles: self.obstacles.clone(),
            lip: self.lip,
        }
    }
}
