//! Receding-horizon loop with the step-to-step LIP map as the plant.
//!
//! One program is solved per footstep, at the step boundary. Force pulses
//! enter as velocity impulses at the boundary of the step in which they
//! start, and obstacles move at constant velocity.

use nalgebra::{DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::frames;
use crate::lip::{self, LipInput, LipState};
use crate::obstacle::{self, Obstacle};
use crate::ocp::{self, ConstraintTag, Foot, Nlp};
use crate::path::Path;
use crate::scenario::{Disturbance, Scenario};
use crate::solver::{self, SolveResult, SolveStatus};

/// Seeded source of force pulses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisturbanceModel {
    pub force: [f64; 2],
    pub pulse_duration: f64,
    pub max_gap: f64,
    pub mass: f64,
    pub seed: u64,
}

impl DisturbanceModel {
    pub fn new(d: &Disturbance, mass: f64, seed: u64) -> Self {
        Self {
            force: d.force,
            pulse_duration: d.pulse_duration,
            max_gap: d.max_gap,
            mass,
            seed,
        }
    }

    /// Velocity impulse to apply at the start of each of `steps` steps.
    pub fn impulses(&self, steps: usize, step_duration: f64) -> Vec<[f64; 2]> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = vec![[0.0; 2]; steps];
        let horizon = steps as f64 * step_duration;
        let [lo, hi] = self.force;
        let mut t = rng.random_range(0.0..=self.max_gap);
        while t < horizon {
            let fx = rng.random_range(lo..=hi);
            let fy = rng.random_range(lo..=hi);
            let k = ((t / step_duration).floor() as usize).min(steps - 1);
            out[k][0] += lip::impulse_from_force(fx, self.pulse_duration, self.mass);
            out[k][1] += lip::impulse_from_force(fy, self.pulse_duration, self.mass);
            t += self.pulse_duration + rng.random_range(0.0..=self.max_gap);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleLog {
    /// `|com - center|^2 - r_eff^2` at the start of the step.
    pub barrier: f64,
    /// Distance from the COM to the obstacle center.
    pub clearance: f64,
    /// Projection of the obstacle center onto the path.
    pub param: f64,
    /// Smallest CBF residual of this obstacle over the planned horizon.
    pub cbf_margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverLog {
    pub status: SolveStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub solve_time: f64,
    /// The warm-started solve failed and this result came from a cold start.
    pub cold_start: bool,
}

/// One executed step. Errors and obstacle data refer to the state at the
/// start of the step, after any impulse.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub step: usize,
    pub time: f64,
    pub state: LipState,
    pub input: LipInput,
    pub param_init: f64,
    pub v: f64,
    pub v_avg: f64,
    pub contour_error: f64,
    pub lag_error: f64,
    pub cartesian_error: f64,
    pub obstacles: Vec<ObstacleLog>,
    pub solver: SolverLog,
    pub impulse: [f64; 2],
    pub stance: Foot,
}

impl StepLog {
    pub fn com(&self) -> Vector2<f64> {
        lip::output(&self.state)
    }

    /// Position of the stance foot placed this step.
    pub fn foot(&self) -> Vector2<f64> {
        self.com() - Vector2::new(self.input.ux, self.input.uy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    MaxSteps,
    Failed,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::MaxSteps => "max_steps",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub steps: usize,
    pub max_contour_error: f64,
    pub mean_contour_error: f64,
    pub max_lag_error: f64,
    pub max_cartesian_error: f64,
    /// `None` without obstacles.
    pub min_clearance: Option<f64>,
    pub overtake: bool,
    pub mean_v_avg: f64,
    pub mean_solve_time: f64,
    pub max_solve_time: f64,
    pub mean_iterations: f64,
    pub cold_starts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub name: String,
    pub status: RunStatus,
    pub reason: Option<String>,
    pub logs: Vec<StepLog>,
    pub summary: Summary,
    /// Effective radius of each obstacle.
    pub obstacle_radii: Vec<f64>,
    /// COM at the last boundary reached.
    pub final_state: LipState,
}

impl RunReport {
    pub fn record(&self) -> RunRecord {
        RunRecord {
            name: self.name.clone(),
            status: self.status,
            reason: self.reason.clone(),
            summary: self.summary.clone(),
        }
    }
}

/// Initial guess when no previous plan exists: zero inputs and no progress.
pub fn cold_start(nlp: &Nlp) -> DVector<f64> {
    DVector::zeros(nlp.dimension())
}

fn cbf_margins(nlp: &Nlp, z: &DVector<f64>, count: usize) -> Vec<f64> {
    let values = nlp.eval_constraints(z).values;
    let mut margins = vec![f64::INFINITY; count];
    for (tag, v) in nlp.tags().iter().zip(values.iter()) {
        if let ConstraintTag::Cbf { obstacle, .. } = tag {
            margins[*obstacle] = margins[*obstacle].min(*v);
        }
    }
    margins
}

fn is_complete(scenario: &Scenario, path: &Path, param: f64, cartesian_error: f64) -> bool {
    let end = path.domain_end();
    param >= end - scenario.goal.progress_fraction * end && cartesian_error <= scenario.goal.position
}

pub fn run(scenario: &Scenario) -> Result<RunReport> {
    scenario.validate()?;
    let path = scenario.build_path()?;
    let base = scenario.ocp_spec();
    let dt = scenario.lip.step_duration();
    let impulses = match &scenario.disturbance {
        Some(d) => DisturbanceModel::new(d, scenario.robot.mass, scenario.seed).impulses(scenario.max_steps, dt),
        None => vec![[0.0; 2]; scenario.max_steps],
    };

    let mut state = scenario.robot.initial_state;
    let mut stance = scenario.stance;
    let mut obstacles: Vec<Obstacle> = scenario.obstacles.clone();
    let mut previous: Option<SolveResult> = None;
    let mut logs = Vec::new();
    let mut status = RunStatus::MaxSteps;
    let mut reason = None;

    for k in 0..=scenario.max_steps {
        let impulse = impulses.get(k).copied().unwrap_or([0.0; 2]);
        state = lip::apply_impulse(&state, impulse[0], impulse[1]);
        let com = lip::output(&state);
        let param = path.project(&com);
        let cartesian_error = (com - path.eval(param).point).norm();
        if is_complete(scenario, &path, param, cartesian_error) {
            status = RunStatus::Completed;
            break;
        }
        if k == scenario.max_steps {
            break;
        }

        let spec = ocp::OcpSpec {
            obstacles: obstacles.clone(),
            ..base.clone()
        };
        let nlp = ocp::build(&spec, &state, param, &path, stance)?;
        let guess = match &previous {
            Some(prev) => solver::warm_start(prev, &spec),
            None => cold_start(&nlp),
        };
        let mut result = solver::solve(&nlp, &guess, &scenario.solver);
        let mut cold = false;
        if !result.is_acceptable(&scenario.solver) && previous.is_some() {
            result = solver::solve(&nlp, &cold_start(&nlp), &scenario.solver);
            cold = true;
        }
        if !result.is_acceptable(&scenario.solver) {
            status = RunStatus::Failed;
            reason = Some(format!("solver returned {} at step {k}", result.status.as_str()));
            break;
        }

        let n = nlp.horizon();
        let input = nlp.inputs(&result.z)[0];
        let increments = nlp.increments(&result.z);
        let error = frames::contour_lag_error(&com, &path, param)?;
        let margins = cbf_margins(&nlp, &result.z, obstacles.len());
        let obstacle_logs = obstacles
            .iter()
            .zip(margins)
            .map(|(o, cbf_margin)| ObstacleLog {
                barrier: obstacle::barrier(&com, &o.position(), o.effective_radius()),
                clearance: (com - o.position()).norm(),
                param: path.project(&o.position()),
                cbf_margin,
            })
            .collect();
        logs.push(StepLog {
            step: k,
            time: k as f64 * dt,
            state,
            input,
            param_init: param,
            v: increments[0],
            v_avg: increments.iter().sum::<f64>() / n as f64,
            contour_error: error.x,
            lag_error: error.y,
            cartesian_error,
            obstacles: obstacle_logs,
            solver: SolverLog {
                status: result.status,
                iterations: result.iterations,
                kkt_residual: result.kkt_residual,
                solve_time: result.solve_time,
                cold_start: cold,
            },
            impulse,
            stance,
        });

        state = lip::step(&state, &input, &scenario.lip);
        obstacles = obstacles.iter().map(|o| o.advanced(dt)).collect();
        let next = lip::output(&state);
        if let Some(i) = obstacles
            .iter()
            .position(|o| obstacle::barrier(&next, &o.position(), o.effective_radius()) < 0.0)
        {
            status = RunStatus::Failed;
            reason = Some(format!("collision with obstacle {i} after step {k}"));
            break;
        }
        stance = stance.other();
        previous = Some(result);
    }

    let summary = summarize(&logs);
    Ok(RunReport {
        name: scenario.name.clone(),
        status,
        reason,
        logs,
        summary,
        obstacle_radii: scenario.obstacles.iter().map(Obstacle::effective_radius).collect(),
        final_state: state,
    })
}

/// Whether the robot's path progress passes some obstacle's and stays ahead
/// of it through the end of the log.
pub fn overtakes(logs: &[StepLog]) -> bool {
    let count = logs.first().map_or(0, |l| l.obstacles.len());
    (0..count).any(|i| {
        let ahead: Vec<bool> = logs.iter().map(|l| l.param_init > l.obstacles[i].param).collect();
        match ahead.iter().position(|&a| a) {
            Some(first) => ahead[first..].iter().all(|&a| a) && !ahead[0],
            None => false,
        }
    })
}

/// Aggregates a log; every metric is zero (and the clearance `None`) for an
/// empty log.
pub fn summarize(logs: &[StepLog]) -> Summary {
    let count = logs.len().max(1) as f64;
    let max = |f: &dyn Fn(&StepLog) -> f64| logs.iter().map(f).fold(0.0f64, f64::max);
    let mean = |f: &dyn Fn(&StepLog) -> f64| logs.iter().map(f).sum::<f64>() / count;
    let min_clearance = logs
        .iter()
        .flat_map(|l| l.obstacles.iter().map(|o| o.clearance))
        .min_by(f64::total_cmp);
    Summary {
        steps: logs.len(),
        max_contour_error: max(&|l| l.contour_error.abs()),
        mean_contour_error: mean(&|l| l.contour_error.abs()),
        max_lag_error: max(&|l| l.lag_error.abs()),
        max_cartesian_error: max(&|l| l.cartesian_error),
        min_clearance,
        overtake: overtakes(logs),
        mean_v_avg: mean(&|l| l.v_avg),
        mean_solve_time: mean(&|l| l.solver.solve_time),
        max_solve_time: max(&|l| l.solver.solve_time),
        mean_iterations: mean(&|l| l.solver.iterations as f64),
        cold_starts: logs.iter().filter(|l| l.solver.cold_start).count(),
    }
}
