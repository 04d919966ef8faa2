//! Sequential quadratic programming for the condensed MPCC program.
//!
//! Each iteration builds a convex QP model from the Gauss-Newton curvature
//! of the tracking cost, the exact (concave) curvature of the progress
//! reward and the exact curvature of the constraints weighted by the last
//! multipliers. The model Hessian is made positive definite by flooring its
//! eigenvalues. Steps are globalized with an l1 exact-penalty merit and a
//! backtracking line search, with a second-order correction when the full
//! step is rejected. Linearizations with an empty feasible set fall back to
//! an elastic QP that minimizes the penalized violation.

pub mod qp;

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::ocp::{ConstraintTag, Nlp, OcpSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub kkt_tolerance: f64,
    pub constraint_tolerance: f64,
    /// Smallest eigenvalue of the QP model.
    pub regularization: f64,
    pub backtrack: f64,
    pub sufficient_decrease: f64,
    pub initial_penalty: f64,
    /// The penalty is kept above this multiple of the largest multiplier.
    pub penalty_factor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            kkt_tolerance: 1e-6,
            constraint_tolerance: 1e-8,
            regularization: 1e-6,
            backtrack: 0.5,
            sufficient_decrease: 1e-4,
            initial_penalty: 10.0,
            penalty_factor: 2.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        if self.max_iterations == 0 {
            return Err(Error::invalid("solver.max_iterations", "must be >= 1"));
        }
        for (name, v) in [
            ("solver.kkt_tolerance", self.kkt_tolerance),
            ("solver.constraint_tolerance", self.constraint_tolerance),
            ("solver.regularization", self.regularization),
            ("solver.initial_penalty", self.initial_penalty),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, "must be > 0"));
            }
        }
        for (name, v) in [
            ("solver.backtrack", self.backtrack),
            ("solver.sufficient_decrease", self.sufficient_decrease),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::invalid(name, "must lie in (0, 1)"));
            }
        }
        if self.penalty_factor.is_nan() || self.penalty_factor < 1.0 {
            return Err(Error::invalid("solver.penalty_factor", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    InfeasibleDetected,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::InfeasibleDetected => "infeasible_detected",
            SolveStatus::NumericalFailure => "numerical_failure",
        }
    }
}

impl std::str::FromStr for SolveStatus {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "optimal" => SolveStatus::Optimal,
            "max_iter" => SolveStatus::MaxIter,
            "infeasible_detected" => SolveStatus::InfeasibleDetected,
            "numerical_failure" => SolveStatus::NumericalFailure,
            other => return Err(format!("unknown solver status `{other}`")),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub z: DVector<f64>,
    pub status: SolveStatus,
    pub kkt_residual: f64,
    /// Largest negative residual, as a positive number.
    pub constraint_violation: f64,
    pub iterations: usize,
    pub solve_time: f64,
    pub objective: f64,
    /// Multipliers of every residual row at `z` (zero for inactive rows).
    pub multipliers: DVector<f64>,
    /// `(merit before, merit after)` of each accepted step, both under the
    /// penalty weight used for that step.
    pub merit_trace: Vec<(f64, f64)>,
}

impl SolveResult {
    /// Usable for the closed loop: converged, or stopped early at a feasible point.
    pub fn is_acceptable(&self, config: &SolverConfig) -> bool {
        match self.status {
            SolveStatus::Optimal => true,
            SolveStatus::MaxIter => self.constraint_violation <= config.constraint_tolerance,
            _ => false,
        }
    }
}

/// Shift the previous plan one stage forward, repeating the last stage.
pub fn warm_start(previous: &SolveResult, spec: &OcpSpec) -> DVector<f64> {
    let n = spec.horizon;
    let z = &previous.z;
    assert_eq!(z.len(), 4 * n, "warm start needs a plan of the same horizon");
    let mut out = DVector::zeros(4 * n);
    for l in 0..n {
        let src = (l + 1).min(n - 1);
        for k in 0..3 {
            out[3 * l + k] = z[3 * src + k];
        }
        out[3 * n + l] = z[3 * n + src].clamp(0.0, spec.v_max);
    }
    out
}

/// Residuals, Jacobian and bookkeeping at one iterate.
struct Point {
    z: DVector<f64>,
    cost: f64,
    gradient: DVector<f64>,
    gauss_newton: DMatrix<f64>,
    values: DVector<f64>,
    jacobian: DMatrix<f64>,
}

impl Point {
    fn eval(nlp: &Nlp, z: DVector<f64>) -> Option<Point> {
        let c = nlp.eval_cost_full(&z);
        let cons = nlp.eval_constraints(&z);
        let finite = c.value.is_finite()
            && c.gradient.iter().all(|v| v.is_finite())
            && cons.values.iter().all(|v| v.is_finite())
            && cons.jacobian.iter().all(|v| v.is_finite());
        finite.then_some(Point {
            z,
            cost: c.value,
            gradient: c.gradient,
            gauss_newton: c.gauss_newton,
            values: cons.values,
            jacobian: cons.jacobian,
        })
    }
}

/// General (non-bound) residual rows.
fn general_rows(nlp: &Nlp) -> Vec<usize> {
    nlp.tags()
        .iter()
        .enumerate()
        .filter(|(_, t)| !matches!(t, ConstraintTag::VBound { .. }))
        .map(|(i, _)| i)
        .collect()
}

fn violation_l1(values: &DVector<f64>, rows: &[usize]) -> f64 {
    rows.iter().map(|&i| (-values[i]).max(0.0)).sum()
}

pub fn violation_max(values: &DVector<f64>) -> f64 {
    values.iter().fold(0.0f64, |m, &v| m.max(-v))
}

fn merit(cost: f64, values: &DVector<f64>, rows: &[usize], penalty: f64) -> f64 {
    cost + penalty * violation_l1(values, rows)
}

/// Symmetric matrix with eigenvalues `max(|lambda|, floor)`. The floor is
/// absolute: the pendulum's growth spreads the spectrum over many decades,
/// and a relative floor would swamp the weakly curved progress directions.
fn convexify(h: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|l| l.abs().max(floor));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// QP data for the step `d`: rows of `A d >= b` are the linearized general
/// residuals followed by the variable bounds.
struct Subproblem {
    a: DMatrix<f64>,
    b: DVector<f64>,
    /// `(nlp row, qp row)` for each bound row, so multipliers map back.
    bound_map: Vec<(usize, usize)>,
}

fn subproblem(nlp: &Nlp, point: &Point, rows: &[usize], shift: Option<&DVector<f64>>) -> Subproblem {
    let n = nlp.dimension();
    let (lo, hi) = (nlp.lower_bounds(), nlp.upper_bounds());
    let bound_rows: Vec<(usize, usize, f64)> = nlp
        .tags()
        .iter()
        .enumerate()
        .filter_map(|(i, t)| match t {
            ConstraintTag::VBound { .. } => Some(i),
            _ => None,
        })
        .map(|i| {
            let col = (0..n).find(|&c| point.jacobian[(i, c)] != 0.0).expect("bound row has one entry");
            (i, col, point.jacobian[(i, col)])
        })
        .collect();
    let m = rows.len() + bound_rows.len();
    let mut a = DMatrix::zeros(m, n);
    let mut b = DVector::zeros(m);
    for (k, &i) in rows.iter().enumerate() {
        a.set_row(k, &point.jacobian.row(i));
        b[k] = -point.values[i] - shift.map_or(0.0, |s| s[i]);
    }
    let mut bound_map = Vec::with_capacity(bound_rows.len());
    for (k, (i, col, sign)) in bound_rows.into_iter().enumerate() {
        let r = rows.len() + k;
        a[(r, col)] = sign;
        // lo - z <= d  or  d <= hi - z
        b[r] = if sign > 0.0 { lo[col] - point.z[col] } else { point.z[col] - hi[col] };
        bound_map.push((i, r));
    }
    Subproblem { a, b, bound_map }
}

struct Step {
    d: DVector<f64>,
    /// NLP-indexed multipliers.
    multipliers: DVector<f64>,
    /// Sum of elastic slacks (zero when the linearization was consistent).
    elastic: f64,
    active: Vec<usize>,
}

fn solve_step(
    nlp: &Nlp,
    point: &Point,
    h: &DMatrix<f64>,
    rows: &[usize],
    penalty: f64,
    warm: &[usize],
) -> Result<Step, qp::QpError> {
    let sub = subproblem(nlp, point, rows, None);
    let to_nlp = |qp_mult: &DVector<f64>| {
        let mut mult = DVector::zeros(nlp.num_constraints());
        for (k, &i) in rows.iter().enumerate() {
            mult[i] = qp_mult[k];
        }
        for &(i, r) in &sub.bound_map {
            mult[i] = qp_mult[r];
        }
        mult
    };
    match qp::solve(h, &point.gradient, &sub.a, &sub.b, warm) {
        Ok(sol) => Ok(Step {
            multipliers: to_nlp(&sol.multipliers),
            d: sol.x,
            elastic: 0.0,
            active: sol.active,
        }),
        Err(qp::QpError::Infeasible) => {
            // Elastic mode: A_g d + t >= b_g, t >= 0, cost += penalty * sum(t).
            let n = point.z.len();
            let mg = rows.len();
            let m = sub.b.len();
            let mut he = DMatrix::zeros(n + mg, n + mg);
            he.view_mut((0, 0), (n, n)).copy_from(h);
            let t_curv = 1e-3 * h.diagonal().amax().max(1.0);
            for k in 0..mg {
                he[(n + k, n + k)] = t_curv;
            }
            let mut ge = DVector::zeros(n + mg);
            ge.rows_mut(0, n).copy_from(&point.gradient);
            ge.rows_mut(n, mg).fill(penalty);
            let mut ae = DMatrix::zeros(m + mg, n + mg);
            ae.view_mut((0, 0), (m, n)).copy_from(&sub.a);
            let mut be = DVector::zeros(m + mg);
            be.rows_mut(0, m).copy_from(&sub.b);
            for k in 0..mg {
                ae[(k, n + k)] = 1.0;
                ae[(m + k, n + k)] = 1.0;
            }
            let sol = qp::solve(&he, &ge, &ae, &be, &[])?;
            let d = sol.x.rows(0, n).into_owned();
            let elastic = sol.x.rows(n, mg).iter().map(|t| t.max(0.0)).sum();
            let qp_mult = sol.multipliers.rows(0, m).into_owned();
            let active = sol.active.into_iter().filter(|&r| r < m).collect();
            Ok(Step {
                multipliers: to_nlp(&qp_mult),
                d,
                elastic,
                active,
            })
        }
        Err(e) => Err(e),
    }
}

/// Scaled stationarity/complementarity of `(z, multipliers)`.
fn kkt_residual(point: &Point, multipliers: &DVector<f64>) -> f64 {
    let stationarity = &point.gradient - point.jacobian.transpose() * multipliers;
    let complementarity = multipliers
        .iter()
        .zip(point.values.iter())
        .fold(0.0f64, |m, (l, c)| m.max((l * c).abs()));
    let scale = point.gradient.amax().max(1.0);
    stationarity.amax().max(complementarity) / scale
}

fn clip_to_bounds(nlp: &Nlp, z: &DVector<f64>) -> DVector<f64> {
    let (lo, hi) = (nlp.lower_bounds(), nlp.upper_bounds());
    DVector::from_fn(z.len(), |i, _| z[i].clamp(lo[i], hi[i]))
}

pub fn solve(nlp: &Nlp, z0: &DVector<f64>, config: &SolverConfig) -> SolveResult {
    let started = Instant::now();
    let rows = general_rows(nlp);
    let n = nlp.dimension();
    let m = nlp.num_constraints();

    let failure = |z: DVector<f64>, iterations: usize| SolveResult {
        z,
        status: SolveStatus::NumericalFailure,
        kkt_residual: f64::INFINITY,
        constraint_violation: f64::INFINITY,
        iterations,
        solve_time: started.elapsed().as_secs_f64(),
        objective: f64::NAN,
        multipliers: DVector::zeros(m),
        merit_trace: Vec::new(),
    };

    if z0.len() != n || z0.iter().any(|v| !v.is_finite()) {
        return failure(DVector::zeros(n), 0);
    }
    let Some(mut point) = Point::eval(nlp, clip_to_bounds(nlp, z0)) else {
        return failure(z0.clone(), 0);
    };

    let mut penalty = config.initial_penalty;
    let mut multipliers = DVector::<f64>::zeros(m);
    let mut warm: Vec<usize> = Vec::new();
    let mut merit_trace = Vec::new();
    // (z, cost, kkt, multipliers) of the best feasible iterate seen.
    let mut best: Option<(DVector<f64>, f64, f64, DVector<f64>)> = None;
    let mut last_kkt = f64::INFINITY;
    let mut stalled_restoration = 0;

    for iteration in 0..config.max_iterations {
        let violation = violation_max(&point.values);
        let curvature = nlp.constraint_curvature(&point.z, &multipliers);
        let h = convexify(&(&point.gauss_newton - curvature), config.regularization);

        let step = match solve_step(nlp, &point, &h, &rows, penalty, &warm) {
            Ok(s) => s,
            Err(_) => return finish(nlp, config, point, best, last_kkt, iteration, merit_trace, started, SolveStatus::NumericalFailure),
        };
        if step.d.iter().any(|v| !v.is_finite()) {
            return finish(nlp, config, point, best, last_kkt, iteration, merit_trace, started, SolveStatus::NumericalFailure);
        }

        let kkt = kkt_residual(&point, &step.multipliers);
        last_kkt = kkt;
        if violation <= config.constraint_tolerance {
            let better = best.as_ref().is_none_or(|b| point.cost < b.1);
            if better {
                best = Some((point.z.clone(), point.cost, kkt, step.multipliers.clone()));
            }
            if kkt <= config.kkt_tolerance && step.elastic == 0.0 {
                let result = SolveResult {
                    objective: point.cost,
                    z: point.z,
                    status: SolveStatus::Optimal,
                    kkt_residual: kkt,
                    constraint_violation: violation,
                    iterations: iteration,
                    solve_time: started.elapsed().as_secs_f64(),
                    multipliers: step.multipliers,
                    merit_trace,
                };
                return result;
            }
        }

        let mult_max = rows.iter().fold(0.0f64, |a, &i| a.max(step.multipliers[i].abs()));
        if penalty < config.penalty_factor * mult_max {
            penalty = config.penalty_factor * mult_max * 1.5;
        }
        if step.elastic > 0.0 {
            // Restoration: push harder on feasibility each time.
            penalty = (penalty * 10.0).min(1e10);
        }

        let phi0 = merit(point.cost, &point.values, &rows, penalty);
        let viol_l1 = violation_l1(&point.values, &rows);
        let slope = point.gradient.dot(&step.d) - penalty * (viol_l1 - step.elastic);
        let slope = slope.min(-1e-12 * step.d.norm_squared()).min(0.0);

        let mut accepted: Option<Point> = None;
        let mut alpha = 1.0;
        while alpha > 1e-10 {
            let trial_z = clip_to_bounds(nlp, &(&point.z + &step.d * alpha));
            let Some(trial) = Point::eval(nlp, trial_z) else {
                alpha *= config.backtrack;
                continue;
            };
            let phi = merit(trial.cost, &trial.values, &rows, penalty);
            if phi <= phi0 + config.sufficient_decrease * alpha * slope {
                accepted = Some(trial);
                break;
            }
            if alpha == 1.0 {
                // Second-order correction for the curvature of the constraints.
                if let Some(corrected) = second_order_correction(nlp, &point, &trial, &h, &rows, &step) {
                    let phi_c = merit(corrected.cost, &corrected.values, &rows, penalty);
                    if phi_c <= phi0 + config.sufficient_decrease * slope {
                        accepted = Some(corrected);
                        break;
                    }
                }
            }
            alpha *= config.backtrack;
        }

        let Some(next) = accepted else {
            if step.elastic > 0.0 {
                stalled_restoration += 1;
                if stalled_restoration >= 2 {
                    return finish(nlp, config, point, best, kkt, iteration + 1, merit_trace, started, SolveStatus::InfeasibleDetected);
                }
                continue;
            }
            // No descent possible along the model step; stop here.
            return finish(nlp, config, point, best, kkt, iteration + 1, merit_trace, started, SolveStatus::MaxIter);
        };
        if step.elastic > 0.0 && violation_l1(&next.values, &rows) >= viol_l1 * (1.0 - 1e-6) {
            stalled_restoration += 1;
            if stalled_restoration >= 3 {
                return finish(nlp, config, next, best, kkt, iteration + 1, merit_trace, started, SolveStatus::InfeasibleDetected);
            }
        } else {
            stalled_restoration = 0;
        }
        merit_trace.push((phi0, merit(next.cost, &next.values, &rows, penalty)));
        multipliers = step.multipliers;
        warm = step.active;
        point = next;
    }
    finish(nlp, config, point, best, last_kkt, config.max_iterations, merit_trace, started, SolveStatus::MaxIter)
}

fn second_order_correction(
    nlp: &Nlp,
    point: &Point,
    trial: &Point,
    h: &DMatrix<f64>,
    rows: &[usize],
    step: &Step,
) -> Option<Point> {
    if step.elastic > 0.0 {
        return None;
    }
    // Shift each linearization by its curvature error along the full step.
    let shift = &trial.values - &point.values - &point.jacobian * &step.d;
    let sub = subproblem(nlp, point, rows, Some(&shift));
    let sol = qp::solve(h, &point.gradient, &sub.a, &sub.b, &step.active).ok()?;
    Point::eval(nlp, clip_to_bounds(nlp, &(&point.z + sol.x)))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    nlp: &Nlp,
    config: &SolverConfig,
    point: Point,
    best: Option<(DVector<f64>, f64, f64, DVector<f64>)>,
    kkt: f64,
    iterations: usize,
    merit_trace: Vec<(f64, f64)>,
    started: Instant,
    status: SolveStatus,
) -> SolveResult {
    let violation = violation_max(&point.values);
    let (z, objective, kkt, multipliers, violation, status) = match (status, best) {
        (SolveStatus::MaxIter, Some((z, cost, best_kkt, mult))) => {
            let v = violation_max(&nlp.eval_constraints(&z).values);
            (z, cost, best_kkt, mult, v, SolveStatus::MaxIter)
        }
        (SolveStatus::MaxIter, None) => (
            point.z,
            point.cost,
            kkt,
            DVector::zeros(nlp.num_constraints()),
            violation,
            if violation <= config.constraint_tolerance {
                SolveStatus::MaxIter
            } else {
                SolveStatus::InfeasibleDetected
            },
        ),
        (s, _) => (point.z, point.cost, kkt, DVector::zeros(nlp.num_constraints()), violation, s),
    };
    SolveResult {
        z,
        status,
        kkt_residual: kkt,
        constraint_violation: violation,
        iterations,
        solve_time: started.elapsed().as_secs_f64(),
        objective,
        multipliers,
        merit_trace,
    }
}
