//! Finite-horizon MPCC program over LIP footsteps, condensed onto inputs.
//!
//! Decision vector layout for horizon `N`:
//! `z = (ux_0, uy_0, ut_0, ..., ux_{N-1}, uy_{N-1}, ut_{N-1}, v_0, ..., v_{N-1})`.
//! COM states are affine in the footstep offsets, so they are eliminated
//! exactly; the path parameter is `p_l = p_init + sum_{j<l} v_j`.
//!
//! Every constraint is reported as a residual that is non-negative when
//! satisfied, together with its analytic gradient and (for the solver's
//! Lagrangian curvature) its analytic Hessian.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{self, ErrorWeights};
use crate::lip::{LipInput, LipParams, LipState};
use crate::obstacle::Obstacle;
use crate::path::Path;

/// Foot in stance during a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Foot {
    Left,
    Right,
}

impl std::str::FromStr for Foot {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "left" => Ok(Foot::Left),
            "right" => Ok(Foot::Right),
            other => Err(format!("unknown foot `{other}`")),
        }
    }
}

impl Foot {
    pub fn as_str(&self) -> &'static str {
        match self {
            Foot::Left => "left",
            Foot::Right => "right",
        }
    }

    pub fn other(self) -> Foot {
        match self {
            Foot::Left => Foot::Right,
            Foot::Right => Foot::Left,
        }
    }

    /// Sign of the body-frame lateral COM-minus-foot offset: a right stance
    /// foot sits on the COM's right, so the offset points left (positive).
    pub fn lateral_sign(self) -> f64 {
        match self {
            Foot::Left => -1.0,
            Foot::Right => 1.0,
        }
    }

    /// Stance foot `stages` steps after this one.
    pub fn after(self, stages: usize) -> Foot {
        if stages.is_multiple_of(2) {
            self
        } else {
            self.other()
        }
    }
}

/// Body-frame bounds on `Rot(heading)^T u`. The lateral range is given for
/// a right stance foot and mirrored for the left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rectangle {
    pub x_c: [f64; 2],
    pub y_c: [f64; 2],
    pub theta: [f64; 2],
}

impl Default for Rectangle {
    fn default() -> Self {
        Self {
            x_c: [-0.25, 0.6],
            y_c: [0.1, 0.4],
            theta: [-0.3, 0.3],
        }
    }
}

impl Rectangle {
    /// `[lo_x, hi_x, lo_y, hi_y, lo_theta, hi_theta]` for a stance foot.
    pub fn bounds_for(&self, foot: Foot) -> [f64; 6] {
        let [ylo, yhi] = match foot {
            Foot::Right => self.y_c,
            Foot::Left => [-self.y_c[1], -self.y_c[0]],
        };
        [self.x_c[0], self.x_c[1], ylo, yhi, self.theta[0], self.theta[1]]
    }

    fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("rectangle.x_c", self.x_c), ("rectangle.y_c", self.y_c), ("rectangle.theta", self.theta)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(name, format!("need lower < upper, got [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Declarative description of the MPCC program.
#[derive(Debug, Clone, PartialEq)]
pub struct OcpSpec {
    pub horizon: usize,
    pub weights: ErrorWeights,
    /// Diagonal of `R` for `(ux, uy, utheta)`.
    pub input_weight: [f64; 3],
    pub progress_weight: f64,
    pub v_max: f64,
    pub rectangle: Rectangle,
    pub step_distance: [f64; 2],
    pub gamma: f64,
    pub obstacles: Vec<Obstacle>,
    pub lip: LipParams,
}

impl Default for OcpSpec {
    fn default() -> Self {
        Self {
            horizon: 5,
            weights: ErrorWeights::Contouring {
                running_contour: 300.0,
                running_lag: 3.0,
                terminal_contour: 300.0,
                terminal_lag: 3.0,
            },
            input_weight: [100.0, 100.0, 5.0],
            progress_weight: 10.0,
            v_max: 0.3,
            rectangle: Rectangle::default(),
            step_distance: [0.02, 0.7],
            gamma: 0.3,
            obstacles: Vec::new(),
            lip: LipParams::default(),
        }
    }
}

impl OcpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::invalid("horizon", "must be >= 1"));
        }
        self.weights.validate()?;
        if !self.input_weight.iter().all(|r| r.is_finite() && *r > 0.0) {
            return Err(Error::invalid("input_weight", "entries must be > 0"));
        }
        if !(self.progress_weight.is_finite() && self.progress_weight > 0.0) {
            return Err(Error::invalid("progress_weight", "must be > 0"));
        }
        if !(self.v_max.is_finite() && self.v_max > 0.0) {
            return Err(Error::invalid("v_max", "must be > 0"));
        }
        self.rectangle.validate()?;
        let [dmin, dmax] = self.step_distance;
        if !(dmin.is_finite() && dmax.is_finite() && 0.0 <= dmin && dmin < dmax) {
            return Err(Error::invalid("step_distance", format!("need 0 <= min < max, got [{dmin}, {dmax}]")));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid("gamma", "must lie in (0, 1)"));
        }
        for o in &self.obstacles {
            o.validate()?;
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        4 * self.horizon
    }
}

/// What a residual row encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintTag {
    Rectangle { stage: usize },
    Distance { stage: usize },
    Cbf { stage: usize, obstacle: usize },
    /// Variable bound on a progress increment; solvers impose it natively.
    VBound { stage: usize },
    Domain,
}

/// Residuals and their Jacobian (one row per residual).
#[derive(Debug, Clone)]
pub struct Constraints {
    pub values: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

/// Cost value, gradient and Gauss-Newton curvature.
#[derive(Debug, Clone)]
pub struct CostEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub gauss_newton: DMatrix<f64>,
}

#[derive(Debug, Clone)]
struct ObstacleTrack {
    positions: Vec<Vector2<f64>>,
    radius: f64,
}

/// Compiled program for one MPC step.
#[derive(Debug, Clone)]
pub struct Nlp {
    horizon: usize,
    weights: ErrorWeights,
    input_weight: [f64; 3],
    progress_weight: f64,
    v_max: f64,
    path: Path,
    x_init: LipState,
    param_init: f64,
    /// Unforced position/velocity per axis at each stage `0..=N`.
    free: Vec<[f64; 4]>,
    /// Position and velocity `m + 1` steps after a unit input.
    pos_gain: Vec<f64>,
    vel_gain: Vec<f64>,
    rect: Vec<[f64; 6]>,
    dist_sq: [f64; 2],
    dist_lower: bool,
    gamma: f64,
    obstacles: Vec<ObstacleTrack>,
    tags: Vec<ConstraintTag>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

/// Positions, path parameters and headings implied by a decision vector.
#[derive(Debug, Clone)]
struct Rollout {
    pos: Vec<Vector2<f64>>,
    param: Vec<f64>,
    heading: Vec<f64>,
}

pub fn build(spec: &OcpSpec, x_init: &LipState, param_init: f64, path: &Path, stance: Foot) -> Result<Nlp> {
    spec.validate()?;
    assemble(spec, x_init, param_init, path, stance)
}

/// `build` without validating the spec; lets tests switch the progress reward off.
pub(crate) fn assemble(spec: &OcpSpec, x_init: &LipState, param_init: f64, path: &Path, stance: Foot) -> Result<Nlp> {
    if !x_init.is_finite() {
        return Err(Error::invalid("x_init", "state must be finite"));
    }
    let end = path.domain_end();
    if !(0.0..=end).contains(&param_init) {
        return Err(Error::OutOfDomain { param: param_init, end });
    }
    let n = spec.horizon;
    let axis = spec.lip.axis_coefficients();

    let mut free = Vec::with_capacity(n + 1);
    let mut s = [x_init.x, x_init.xdot, x_init.y, x_init.ydot];
    free.push(s);
    for _ in 0..n {
        let (x, xd) = axis.apply(s[0], s[1], 0.0);
        let (y, yd) = axis.apply(s[2], s[3], 0.0);
        s = [x, xd, y, yd];
        free.push(s);
    }
    let mut pos_gain = Vec::with_capacity(n);
    let mut vel_gain = Vec::with_capacity(n);
    let (mut gp, mut gv) = axis.apply(0.0, 0.0, 1.0);
    for _ in 0..n {
        pos_gain.push(gp);
        vel_gain.push(gv);
        (gp, gv) = axis.apply(gp, gv, 0.0);
    }

    let rect = (0..n).map(|l| spec.rectangle.bounds_for(stance.after(l))).collect();
    let dt = spec.lip.step_duration();
    let obstacles: Vec<ObstacleTrack> = spec
        .obstacles
        .iter()
        .map(|o| ObstacleTrack {
            positions: (0..=n).map(|l| o.predict(l, dt)).collect(),
            radius: o.effective_radius(),
        })
        .collect();

    let mut tags = Vec::new();
    for stage in 0..n {
        tags.extend(std::iter::repeat_n(ConstraintTag::Rectangle { stage }, 6));
        // A zero minimum distance is always met; its linearization is not.
        let rows = if spec.step_distance[0] > 0.0 { 2 } else { 1 };
        tags.extend(std::iter::repeat_n(ConstraintTag::Distance { stage }, rows));
        tags.extend((0..obstacles.len()).map(|obstacle| ConstraintTag::Cbf { stage, obstacle }));
    }
    for stage in 0..n {
        tags.extend(std::iter::repeat_n(ConstraintTag::VBound { stage }, 2));
    }
    tags.push(ConstraintTag::Domain);

    let dim = 4 * n;
    let mut lower = DVector::from_element(dim, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(dim, f64::INFINITY);
    for l in 0..n {
        lower[3 * n + l] = 0.0;
        upper[3 * n + l] = spec.v_max;
    }

    Ok(Nlp {
        horizon: n,
        weights: spec.weights,
        input_weight: spec.input_weight,
        progress_weight: spec.progress_weight,
        v_max: spec.v_max,
        path: path.clone(),
        x_init: *x_init,
        param_init,
        free,
        pos_gain,
        vel_gain,
        rect,
        dist_sq: [spec.step_distance[0].powi(2), spec.step_distance[1].powi(2)],
        dist_lower: spec.step_distance[0] > 0.0,
        gamma: spec.gamma,
        obstacles,
        tags,
        lower,
        upper,
    })
}

/// Applies `Rot(psi)^T` to the planar part of `u`; `utheta` is unchanged.
pub fn rotate_input(psi: f64, u: &LipInput) -> LipInput {
    let (s, c) = psi.sin_cos();
    LipInput::new(c * u.ux + s * u.uy, -s * u.ux + c * u.uy, u.utheta)
}

impl Nlp {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dimension(&self) -> usize {
        4 * self.horizon
    }

    pub fn num_constraints(&self) -> usize {
        self.tags.len()
    }

    pub fn tags(&self) -> &[ConstraintTag] {
        &self.tags
    }

    pub fn lower_bounds(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper_bounds(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn param_init(&self) -> f64 {
        self.param_init
    }

    pub fn x_init(&self) -> &LipState {
        &self.x_init
    }

    fn ux(&self, l: usize) -> usize {
        3 * l
    }
    fn uy(&self, l: usize) -> usize {
        3 * l + 1
    }
    fn ut(&self, l: usize) -> usize {
        3 * l + 2
    }
    fn v(&self, l: usize) -> usize {
        3 * self.horizon + l
    }

    /// Sensitivity of the stage-`l` position to the footstep at stage `j`.
    fn gain(&self, l: usize, j: usize) -> f64 {
        if j < l {
            self.pos_gain[l - 1 - j]
        } else {
            0.0
        }
    }

    pub fn inputs(&self, z: &DVector<f64>) -> Vec<LipInput> {
        (0..self.horizon)
            .map(|l| LipInput::new(z[self.ux(l)], z[self.uy(l)], z[self.ut(l)]))
            .collect()
    }

    pub fn increments<'a>(&self, z: &'a DVector<f64>) -> &'a [f64] {
        &z.as_slice()[3 * self.horizon..]
    }

    /// Path parameters `p_0..=p_N` along the horizon.
    pub fn params(&self, z: &DVector<f64>) -> Vec<f64> {
        self.rollout(z).param
    }

    /// States `x_0..=x_N` reconstructed from the condensed dynamics.
    pub fn states(&self, z: &DVector<f64>) -> Vec<LipState> {
        (0..=self.horizon)
            .map(|l| {
                let mut s = self.free[l];
                let mut heading = self.x_init.theta;
                for j in 0..l {
                    let (gp, gv) = (self.pos_gain[l - 1 - j], self.vel_gain[l - 1 - j]);
                    s[0] += gp * z[self.ux(j)];
                    s[1] += gv * z[self.ux(j)];
                    s[2] += gp * z[self.uy(j)];
                    s[3] += gv * z[self.uy(j)];
                    heading += z[self.ut(j)];
                }
                LipState::new(s[0], s[1], s[2], s[3], heading)
            })
            .collect()
    }

    fn rollout(&self, z: &DVector<f64>) -> Rollout {
        let n = self.horizon;
        let mut pos = Vec::with_capacity(n + 1);
        let mut param = Vec::with_capacity(n + 1);
        let mut heading = Vec::with_capacity(n);
        let mut p = self.param_init;
        let mut psi = self.x_init.theta;
        for l in 0..=n {
            let mut xy = Vector2::new(self.free[l][0], self.free[l][2]);
            for j in 0..l {
                let g = self.pos_gain[l - 1 - j];
                xy.x += g * z[self.ux(j)];
                xy.y += g * z[self.uy(j)];
            }
            pos.push(xy);
            param.push(p);
            if l < n {
                p += z[self.v(l)];
                psi += z[self.ut(l)];
                heading.push(psi);
            }
        }
        Rollout { pos, param, heading }
    }

    /// Weighted error at one stage and its Jacobians with respect to the
    /// stage position and path parameter.
    fn stage_error(&self, pos: &Vector2<f64>, param: f64) -> (Vector2<f64>, Matrix2<f64>, Vector2<f64>) {
        let sample = self.path.eval(param);
        let e = pos - sample.point;
        let d_param_scale = if sample.clamped { 0.0 } else { 1.0 };
        if !self.weights.is_contouring() {
            return (e, Matrix2::identity(), -sample.d1 * d_param_scale);
        }
        // A degenerate tangent is excluded by path construction.
        let frame = Path::frame_of(&sample, param).expect("regular path");
        let p = frames::frame_of(&frame);
        let dp = frames::frame_derivative(frame.cos, frame.sin);
        let ebar = p * e;
        let d_param = (dp * e * frame.slope_rate - p * sample.d1) * d_param_scale;
        (ebar, p, d_param)
    }

    pub fn eval_cost(&self, z: &DVector<f64>) -> (f64, DVector<f64>) {
        let c = self.eval_cost_full(z);
        (c.value, c.gradient)
    }

    pub fn cost(&self, z: &DVector<f64>) -> f64 {
        let r = self.rollout(z);
        let mut value = 0.0;
        for l in 0..=self.horizon {
            let (err, _, _) = self.stage_error(&r.pos[l], r.param[l]);
            let d = self.weights.diagonal(l == self.horizon);
            value += d.x * err.x * err.x + d.y * err.y * err.y;
        }
        for l in 0..self.horizon {
            for k in 0..3 {
                value += self.input_weight[k] * z[3 * l + k].powi(2);
            }
            value -= self.progress_weight * z[self.v(l)].powi(2);
        }
        value
    }

    pub fn eval_cost_full(&self, z: &DVector<f64>) -> CostEval {
        let n = self.horizon;
        let dim = self.dimension();
        let r = self.rollout(z);
        let mut value = 0.0;
        let mut gradient = DVector::zeros(dim);
        let mut gn = DMatrix::zeros(dim, dim);
        let mut jac = DMatrix::<f64>::zeros(2, dim);

        for l in 0..=n {
            let (err, d_pos, d_param) = self.stage_error(&r.pos[l], r.param[l]);
            let d = self.weights.diagonal(l == n);
            value += d.x * err.x * err.x + d.y * err.y * err.y;
            if l == 0 {
                continue;
            }
            jac.fill(0.0);
            for j in 0..l {
                let g = self.gain(l, j);
                for row in 0..2 {
                    jac[(row, self.ux(j))] = d_pos[(row, 0)] * g;
                    jac[(row, self.uy(j))] = d_pos[(row, 1)] * g;
                    jac[(row, self.v(j))] = d_param[row];
                }
            }
            let weighted = Vector2::new(d.x * err.x, d.y * err.y);
            gradient += jac.transpose() * weighted * 2.0;
            let mut scaled = jac.clone();
            scaled.row_mut(0).scale_mut(d.x);
            scaled.row_mut(1).scale_mut(d.y);
            gn += jac.transpose() * scaled * 2.0;
        }
        for l in 0..n {
            for k in 0..3 {
                let i = 3 * l + k;
                value += self.input_weight[k] * z[i] * z[i];
                gradient[i] += 2.0 * self.input_weight[k] * z[i];
                gn[(i, i)] += 2.0 * self.input_weight[k];
            }
            let i = self.v(l);
            value -= self.progress_weight * z[i] * z[i];
            gradient[i] -= 2.0 * self.progress_weight * z[i];
            gn[(i, i)] -= 2.0 * self.progress_weight;
        }
        CostEval {
            value,
            gradient,
            gauss_newton: gn,
        }
    }

    pub fn eval_constraints(&self, z: &DVector<f64>) -> Constraints {
        let n = self.horizon;
        let dim = self.dimension();
        let m = self.num_constraints();
        let r = self.rollout(z);
        let mut values = DVector::zeros(m);
        let mut jac = DMatrix::zeros(m, dim);
        let mut row = 0;

        for l in 0..n {
            let [xlo, xhi, ylo, yhi, tlo, thi] = self.rect[l];
            let (ux, uy, ut) = (z[self.ux(l)], z[self.uy(l)], z[self.ut(l)]);
            let psi = r.heading[l];
            let (s, c) = psi.sin_cos();
            let body_x = c * ux + s * uy;
            let body_y = -s * ux + c * uy;
            // d/dux, d/duy, d/dpsi for each body coordinate.
            let grads = [(c, s, body_y), (-s, c, -body_x)];
            let specs = [(body_x, xlo, xhi, grads[0]), (body_y, ylo, yhi, grads[1])];
            for (value, lo, hi, (gx, gy, gpsi)) in specs {
                for (sign, bound) in [(1.0, lo), (-1.0, hi)] {
                    values[row] = sign * (value - bound);
                    jac[(row, self.ux(l))] = sign * gx;
                    jac[(row, self.uy(l))] = sign * gy;
                    for j in 0..=l {
                        jac[(row, self.ut(j))] = sign * gpsi;
                    }
                    row += 1;
                }
            }
            values[row] = ut - tlo;
            jac[(row, self.ut(l))] = 1.0;
            values[row + 1] = thi - ut;
            jac[(row + 1, self.ut(l))] = -1.0;
            row += 2;

            let delta = r.pos[l + 1] - r.pos[l];
            let dsq = delta.norm_squared();
            let signs: &[f64] = if self.dist_lower { &[1.0, -1.0] } else { &[-1.0] };
            for &sign in signs {
                values[row] = if sign > 0.0 { dsq - self.dist_sq[0] } else { self.dist_sq[1] - dsq };
                for j in 0..=l {
                    let m_j = self.gain(l + 1, j) - self.gain(l, j);
                    jac[(row, self.ux(j))] = sign * 2.0 * delta.x * m_j;
                    jac[(row, self.uy(j))] = sign * 2.0 * delta.y * m_j;
                }
                row += 1;
            }

            for track in &self.obstacles {
                let (o0, o1) = (track.positions[l], track.positions[l + 1]);
                let (d0, d1) = (r.pos[l] - o0, r.pos[l + 1] - o1);
                let rr = track.radius * track.radius;
                let keep = 1.0 - self.gamma;
                values[row] = (d1.norm_squared() - rr) - keep * (d0.norm_squared() - rr);
                for j in 0..=l {
                    let (g1, g0) = (self.gain(l + 1, j), self.gain(l, j));
                    jac[(row, self.ux(j))] = 2.0 * (d1.x * g1 - keep * d0.x * g0);
                    jac[(row, self.uy(j))] = 2.0 * (d1.y * g1 - keep * d0.y * g0);
                }
                row += 1;
            }
        }
        for l in 0..n {
            let v = z[self.v(l)];
            values[row] = v;
            jac[(row, self.v(l))] = 1.0;
            values[row + 1] = self.v_max - v;
            jac[(row + 1, self.v(l))] = -1.0;
            row += 2;
        }
        values[row] = self.path.domain_end() - r.param[n];
        for l in 0..n {
            jac[(row, self.v(l))] = -1.0;
        }
        debug_assert_eq!(row + 1, m);
        Constraints { values, jacobian: jac }
    }

    /// `sum_i weights_i * Hessian(c_i)` over all residual rows.
    pub fn constraint_curvature(&self, z: &DVector<f64>, weights: &DVector<f64>) -> DMatrix<f64> {
        let n = self.horizon;
        let dim = self.dimension();
        let r = self.rollout(z);
        let mut h = DMatrix::zeros(dim, dim);
        let mut row = 0;
        for l in 0..n {
            let (ux, uy) = (z[self.ux(l)], z[self.uy(l)]);
            let (s, c) = r.heading[l].sin_cos();
            let body_x = c * ux + s * uy;
            let body_y = -s * ux + c * uy;
            // (d2/dux dpsi, d2/duy dpsi, d2/dpsi2)
            let second = [(-s, c, -body_x), (-c, -s, -body_y)];
            for (k, (hx, hy, hpp)) in second.into_iter().enumerate() {
                let w = weights[row + 2 * k] - weights[row + 2 * k + 1];
                if w != 0.0 {
                    for j in 0..=l {
                        let t = self.ut(j);
                        h[(self.ux(l), t)] += w * hx;
                        h[(t, self.ux(l))] += w * hx;
                        h[(self.uy(l), t)] += w * hy;
                        h[(t, self.uy(l))] += w * hy;
                        for i in 0..=l {
                            h[(self.ut(i), t)] += w * hpp;
                        }
                    }
                }
            }
            row += 6;

            let w = if self.dist_lower { weights[row] - weights[row + 1] } else { -weights[row] };
            if w != 0.0 {
                for i in 0..=l {
                    let mi = self.gain(l + 1, i) - self.gain(l, i);
                    for j in 0..=l {
                        let mj = self.gain(l + 1, j) - self.gain(l, j);
                        h[(self.ux(i), self.ux(j))] += 2.0 * w * mi * mj;
                        h[(self.uy(i), self.uy(j))] += 2.0 * w * mi * mj;
                    }
                }
            }
            row += if self.dist_lower { 2 } else { 1 };

            for _ in &self.obstacles {
                let w = weights[row];
                if w != 0.0 {
                    let keep = 1.0 - self.gamma;
                    for i in 0..=l {
                        for j in 0..=l {
                            let v = 2.0 * w
                                * (self.gain(l + 1, i) * self.gain(l + 1, j) - keep * self.gain(l, i) * self.gain(l, j));
                            h[(self.ux(i), self.ux(j))] += v;
                            h[(self.uy(i), self.uy(j))] += v;
                        }
                    }
                }
                row += 1;
            }
        }
        h
    }

    /// A decision vector with `v_max` progress and inputs that keep every
    /// stage centered in its rectangle, at the initial heading.
    pub fn nominal_guess(&self) -> DVector<f64> {
        let mut z = DVector::zeros(self.dimension());
        for l in 0..self.horizon {
            let [xlo, xhi, ylo, yhi, _, _] = self.rect[l];
            let body = Vector2::new(0.5 * (xlo + xhi).min(0.0).max(xlo), 0.5 * (ylo + yhi));
            let (s, c) = self.x_init.theta.sin_cos();
            z[self.ux(l)] = c * body.x - s * body.y;
            z[self.uy(l)] = s * body.x + c * body.y;
            z[self.v(l)] = self.v_max;
        }
        z
    }
}
