//! Planar reference paths `y_d(p)` over the parameter domain `[0, p_end]`.
//!
//! Lines and arcs are parametrized by arc length times an optional speed
//! factor. Splines are natural cubics through waypoints parametrized by
//! cumulative chord length, which is close to but not exactly arc length.

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tangents shorter than this are treated as degenerate.
const MIN_TANGENT: f64 = 1e-12;

/// Sample spacing of the coarse projection scan, in parameter units.
const PROJECTION_SPACING: f64 = 0.05;
const PROJECTION_MIN_SAMPLES: usize = 200;

/// Scenario-file description of a path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum PathSpec {
    Line {
        start: [f64; 2],
        end: [f64; 2],
    },
    Arc {
        center: [f64; 2],
        radius: f64,
        start_angle: f64,
        sweep: f64,
    },
    Spline {
        waypoints: Vec<[f64; 2]>,
    },
}

impl PathSpec {
    pub fn build(&self) -> Result<Path> {
        match self {
            PathSpec::Line { start, end } => Path::line(v2(start), v2(end)),
            PathSpec::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => Path::arc(v2(center), *radius, *start_angle, *sweep),
            PathSpec::Spline { waypoints } => {
                Path::spline(&waypoints.iter().map(v2).collect::<Vec<_>>())
            }
        }
    }
}

fn v2(p: &[f64; 2]) -> Vector2<f64> {
    Vector2::new(p[0], p[1])
}

/// Point and parameter derivatives at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub point: Vector2<f64>,
    pub d1: Vector2<f64>,
    pub d2: Vector2<f64>,
    /// Set when the requested parameter was outside the domain and clamped.
    pub clamped: bool,
}

/// Unit tangent frame and slope rate at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentFrame {
    pub cos: f64,
    pub sin: f64,
    /// d(slope)/d(parameter).
    pub slope_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Line {
        start: Vector2<f64>,
        /// Velocity with respect to the parameter.
        velocity: Vector2<f64>,
    },
    Arc {
        center: Vector2<f64>,
        radius: f64,
        start_angle: f64,
        /// Signed angle per unit parameter.
        angle_rate: f64,
    },
    Spline(CubicSpline),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    shape: Shape,
    end: f64,
}

impl Path {
    pub fn line(start: Vector2<f64>, end: Vector2<f64>) -> Result<Self> {
        Self::line_with_speed(start, end, 1.0)
    }

    /// Line whose parameter advances `speed` units per meter.
    pub fn line_with_speed(start: Vector2<f64>, end: Vector2<f64>, speed: f64) -> Result<Self> {
        check_positive("speed", speed)?;
        let delta = end - start;
        let length = delta.norm();
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::invalid("path", "line start and end must differ"));
        }
        Ok(Self {
            shape: Shape::Line {
                start,
                velocity: delta / (length * speed),
            },
            end: length * speed,
        })
    }

    pub fn arc(center: Vector2<f64>, radius: f64, start_angle: f64, sweep: f64) -> Result<Self> {
        Self::arc_with_speed(center, radius, start_angle, sweep, 1.0)
    }

    /// Arc whose parameter advances `speed` units per meter of arc length.
    /// Negative `sweep` runs clockwise.
    pub fn arc_with_speed(
        center: Vector2<f64>,
        radius: f64,
        start_angle: f64,
        sweep: f64,
        speed: f64,
    ) -> Result<Self> {
        check_positive("radius", radius)?;
        check_positive("speed", speed)?;
        if !(sweep.is_finite() && sweep != 0.0) {
            return Err(Error::invalid("sweep", "must be finite and non-zero"));
        }
        if !start_angle.is_finite() || !center.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("path", "arc center and start angle must be finite"));
        }
        Ok(Self {
            shape: Shape::Arc {
                center,
                radius,
                start_angle,
                angle_rate: sweep.signum() / (radius * speed),
            },
            end: radius * sweep.abs() * speed,
        })
    }

    /// Natural cubic spline through `waypoints`, chord-length parametrized.
    pub fn spline(waypoints: &[Vector2<f64>]) -> Result<Self> {
        let spline = CubicSpline::new(waypoints)?;
        let end = *spline.knots.last().unwrap();
        let path = Self {
            shape: Shape::Spline(spline),
            end,
        };
        // Chord parametrization can still produce cusps for wild waypoint
        // sets; reject those up front.
        let samples = 64 * waypoints.len();
        for i in 0..=samples {
            let p = end * i as f64 / samples as f64;
            if path.eval(p).d1.norm() < 1e-6 {
                return Err(Error::DegenerateTangent { param: p });
            }
        }
        Ok(path)
    }

    /// Upper end of the parameter domain.
    pub fn domain_end(&self) -> f64 {
        self.end
    }

    pub fn clamp(&self, param: f64) -> f64 {
        param.clamp(0.0, self.end)
    }

    pub fn eval(&self, param: f64) -> PathSample {
        let p = self.clamp(param);
        let clamped = p != param;
        let (point, d1, d2) = match &self.shape {
            Shape::Line { start, velocity } => (start + velocity * p, *velocity, Vector2::zeros()),
            Shape::Arc {
                center,
                radius,
                start_angle,
                angle_rate,
            } => {
                let a = start_angle + angle_rate * p;
                let (s, c) = a.sin_cos();
                (
                    center + Vector2::new(c, s) * *radius,
                    Vector2::new(-s, c) * (radius * angle_rate),
                    Vector2::new(-c, -s) * (radius * angle_rate * angle_rate),
                )
            }
            Shape::Spline(spline) => spline.eval(p),
        };
        PathSample {
            point,
            d1,
            d2,
            clamped,
        }
    }

    /// Tangent angle via the two-argument arctangent.
    pub fn slope(&self, param: f64) -> Result<f64> {
        let frame = self.tangent_frame(param)?;
        Ok(frame.sin.atan2(frame.cos))
    }

    /// Slopes at a sequence of parameters, unwrapped to be continuous.
    pub fn slopes(&self, params: &[f64]) -> Result<Vec<f64>> {
        let mut out: Vec<f64> = Vec::with_capacity(params.len());
        for &p in params {
            let mut phi = self.slope(p)?;
            if let Some(&prev) = out.last() {
                phi += 2.0 * PI * ((prev - phi) / (2.0 * PI)).round();
            }
            out.push(phi);
        }
        Ok(out)
    }

    pub fn tangent_frame(&self, param: f64) -> Result<TangentFrame> {
        let s = self.eval(param);
        Self::frame_of(&s, param)
    }

    pub(crate) fn frame_of(s: &PathSample, param: f64) -> Result<TangentFrame> {
        let n2 = s.d1.norm_squared();
        if s.d1.x.abs() < MIN_TANGENT && s.d1.y.abs() < MIN_TANGENT {
            return Err(Error::DegenerateTangent { param });
        }
        let n = n2.sqrt();
        Ok(TangentFrame {
            cos: s.d1.x / n,
            sin: s.d1.y / n,
            slope_rate: (s.d1.x * s.d2.y - s.d1.y * s.d2.x) / n2,
        })
    }

    /// Global minimizer of `|point - y_d(p)|^2` over the domain.
    ///
    /// A coarse scan locates every discrete local minimum; each is refined
    /// with a bracketed Newton iteration and the best is returned. Exact
    /// ties go to the smallest parameter.
    pub fn project(&self, point: &Vector2<f64>) -> f64 {
        let samples = PROJECTION_MIN_SAMPLES.max((self.end / PROJECTION_SPACING).ceil() as usize + 1);
        let step = self.end / (samples - 1) as f64;
        let params: Vec<f64> = (0..samples).map(|i| (i as f64 * step).min(self.end)).collect();
        let costs: Vec<f64> = params.iter().map(|&p| self.sq_dist(point, p)).collect();

        let mut best = (params[0], costs[0]);
        // Costs within rounding of each other count as ties.
        let tie = 1e-14 * costs.iter().fold(1.0f64, |m, c| m.max(*c));
        let mut consider = |p: f64, c: f64| {
            if c < best.1 - tie || (c <= best.1 + tie && p < best.0) {
                best = (p, c);
            }
        };
        for i in 0..samples {
            let left = if i > 0 { costs[i - 1] } else { f64::INFINITY };
            let right = if i + 1 < samples { costs[i + 1] } else { f64::INFINITY };
            if costs[i] > left || costs[i] > right {
                continue;
            }
            consider(params[i], costs[i]);
            let lo = params[i.saturating_sub(1)];
            let hi = params[(i + 1).min(samples - 1)];
            let p = self.refine(point, params[i], lo, hi);
            consider(p, self.sq_dist(point, p));
        }
        best.0
    }

    fn sq_dist(&self, point: &Vector2<f64>, param: f64) -> f64 {
        (point - self.eval(param).point).norm_squared()
    }

    fn refine(&self, point: &Vector2<f64>, start: f64, mut lo: f64, mut hi: f64) -> f64 {
        let mut p = start;
        for _ in 0..60 {
            let s = self.eval(p);
            let r = point - s.point;
            let grad = -r.dot(&s.d1);
            let curv = s.d1.norm_squared() - r.dot(&s.d2);
            if grad > 0.0 {
                hi = p;
            } else if grad < 0.0 {
                lo = p;
            } else {
                break;
            }
            let newton = if curv > 0.0 { p - grad / curv } else { f64::NAN };
            let next = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (next - p).abs() <= 1e-14 * (1.0 + p.abs()) {
                p = next;
                break;
            }
            p = next;
        }
        p
    }
}

fn check_positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and > 0, got {value}")))
    }
}

/// Natural cubic spline in each coordinate over shared knots.
#[derive(Debug, Clone, PartialEq)]
struct CubicSpline {
    knots: Vec<f64>,
    /// Per segment: `[a, b, c, d]` for x and y, in powers of `(p - knot)`.
    coeffs: Vec<[[f64; 4]; 2]>,
}

impl CubicSpline {
    fn new(waypoints: &[Vector2<f64>]) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::invalid("waypoints", "need at least two waypoints"));
        }
        if waypoints.iter().any(|w| !w.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("waypoints", "must be finite"));
        }
        let mut knots = vec![0.0];
        for w in waypoints.windows(2) {
            let h = (w[1] - w[0]).norm();
            if h <= 1e-9 {
                return Err(Error::invalid("waypoints", "consecutive waypoints must differ"));
            }
            knots.push(knots.last().unwrap() + h);
        }
        let xs: Vec<f64> = waypoints.iter().map(|w| w.x).collect();
        let ys: Vec<f64> = waypoints.iter().map(|w| w.y).collect();
        let cx = natural_coefficients(&knots, &xs);
        let cy = natural_coefficients(&knots, &ys);
        let coeffs = cx.into_iter().zip(cy).map(|(a, b)| [a, b]).collect();
        Ok(Self { knots, coeffs })
    }

    fn eval(&self, p: f64) -> (Vector2<f64>, Vector2<f64>, Vector2<f64>) {
        let seg = match self.knots.binary_search_by(|k| k.total_cmp(&p)) {
            Ok(i) => i.min(self.coeffs.len() - 1),
            Err(i) => i.saturating_sub(1).min(self.coeffs.len() - 1),
        };
        let t = p - self.knots[seg];
        let mut out = [[0.0; 3]; 2];
        for (axis, c) in self.coeffs[seg].iter().enumerate() {
            out[axis] = [
                c[0] + t * (c[1] + t * (c[2] + t * c[3])),
                c[1] + t * (2.0 * c[2] + 3.0 * t * c[3]),
                2.0 * c[2] + 6.0 * t * c[3],
            ];
        }
        (
            Vector2::new(out[0][0], out[1][0]),
            Vector2::new(out[0][1], out[1][1]),
            Vector2::new(out[0][2], out[1][2]),
        )
    }
}

/// Per-segment cubic coefficients with zero end curvature.
fn natural_coefficients(knots: &[f64], values: &[f64]) -> Vec<[f64; 4]> {
    let n = knots.len();
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    let mut m = vec![0.0; n];
    if n > 2 {
        // Thomas algorithm on the interior second derivatives.
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            rhs[i] = 6.0 * ((values[i + 2] - values[i + 1]) / h[i + 1] - (values[i + 1] - values[i]) / h[i]);
        }
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * h[i];
            rhs[i] -= w * rhs[i - 1];
        }
        m[k] = rhs[k - 1] / diag[k - 1];
        for i in (0..k - 1).rev() {
            m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
        }
    }
    (0..n - 1)
        .map(|i| {
            [
                values[i],
                (values[i + 1] - values[i]) / h[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0,
                m[i] / 2.0,
                (m[i + 1] - m[i]) / (6.0 * h[i]),
            ]
        })
        .collect()
}
