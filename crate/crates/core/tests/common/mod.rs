//! Shared support for integration tests: an independent statement of the
//! single-step program and an exhaustive grid search over it.

#![allow(dead_code)]

use mpcc_core::frames::{self, ErrorWeights};
use mpcc_core::lip::{self, LipInput, LipState};
use mpcc_core::obstacle::{self, Obstacle};
use mpcc_core::ocp::{Foot, OcpSpec};
use mpcc_core::path::Path;
use nalgebra::Vector2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// A horizon-one program: decisions `[ux, uy, utheta, v]`.
#[derive(Debug, Clone)]
pub struct Instance {
    pub spec: OcpSpec,
    pub x0: LipState,
    pub path: Path,
    pub param: f64,
    pub stance: Foot,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let path = if rng.random_bool(0.5) {
        let heading: f64 = rng.random_range(-3.1..3.1);
        let start = Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        Path::line(start, start + 6.0 * Vector2::new(heading.cos(), heading.sin())).unwrap()
    } else {
        let radius = rng.random_range(1.5..4.0);
        let sweep = if rng.random_bool(0.5) { 3.0 } else { -3.0 };
        Path::arc(Vector2::zeros(), radius, rng.random_range(-3.1..3.1), sweep).unwrap()
    };
    let stance = if rng.random_bool(0.5) { Foot::Left } else { Foot::Right };
    let p = rng.random_range(0.0..1.5);
    let frame = path.tangent_frame(p).unwrap();
    let tangent = Vector2::new(frame.cos, frame.sin);
    let normal = Vector2::new(-frame.sin, frame.cos);
    let pos = path.eval(p).point + normal * rng.random_range(-0.15..0.15);
    // Lateral velocity of a periodic gait: toward the stance foot.
    let lateral = -stance.lateral_sign() * 0.191 * rng.random_range(0.5..1.5);
    let vel = tangent * rng.random_range(0.2..0.8) + normal * lateral;
    let heading = frame.sin.atan2(frame.cos) + rng.random_range(-0.1..0.1);
    let x0 = LipState::new(pos.x, vel.x, pos.y, vel.y, heading);

    let weights = if rng.random_bool(0.5) {
        let (c, l) = (rng.random_range(1.0..300.0), rng.random_range(1.0..1000.0));
        ErrorWeights::Contouring {
            running_contour: c,
            running_lag: l,
            terminal_contour: c * rng.random_range(0.5..2.0),
            terminal_lag: l * rng.random_range(0.5..2.0),
        }
    } else {
        let a = rng.random_range(10.0..300.0);
        ErrorWeights::Cartesian {
            running: a,
            terminal: a * rng.random_range(0.5..2.0),
        }
    };
    let mut obstacles = Vec::new();
    if rng.random_bool(0.5) {
        let ahead = rng.random_range(0.6..1.2);
        let side = rng.random_range(-0.3..0.3);
        let heading: f64 = rng.random_range(-3.1..3.1);
        let speed = rng.random_range(0.0..0.3);
        obstacles.push(Obstacle::new(
            0.25,
            pos + tangent * ahead + normal * side,
            speed * Vector2::new(heading.cos(), heading.sin()),
        ));
    }
    let spec = OcpSpec {
        horizon: 1,
        weights,
        progress_weight: rng.random_range(1.0..50.0),
        obstacles,
        ..OcpSpec::default()
    };
    let param = path.project(&pos);
    Instance {
        spec,
        x0,
        path,
        param,
        stance,
    }
}

fn weighted_error(weights: &ErrorWeights, terminal: bool, pos: &Vector2<f64>, path: &Path, param: f64) -> f64 {
    let d = weights.diagonal(terminal);
    let e = if weights.is_contouring() {
        frames::contour_lag_error(pos, path, param).unwrap()
    } else {
        pos - path.eval(param).point
    };
    d.x * e.x * e.x + d.y * e.y * e.y
}

impl Instance {
    fn next_state(&self, z: &[f64; 4]) -> LipState {
        lip::step(&self.x0, &LipInput::new(z[0], z[1], z[2]), &self.spec.lip)
    }

    pub fn cost(&self, z: &[f64; 4]) -> f64 {
        let s = &self.spec;
        let pos0 = lip::output(&self.x0);
        let pos1 = lip::output(&self.next_state(z));
        let r = s.input_weight;
        weighted_error(&s.weights, false, &pos0, &self.path, self.param)
            + weighted_error(&s.weights, true, &pos1, &self.path, self.param + z[3])
            + r[0] * z[0] * z[0]
            + r[1] * z[1] * z[1]
            + r[2] * z[2] * z[2]
            - s.progress_weight * z[3] * z[3]
    }

    /// Smallest constraint residual; feasible when `>= 0`.
    pub fn margin(&self, z: &[f64; 4]) -> f64 {
        let s = &self.spec;
        let [xlo, xhi, ylo, yhi, tlo, thi] = s.rectangle.bounds_for(self.stance);
        let psi = self.x0.theta + z[2];
        let (sn, cs) = psi.sin_cos();
        let bx = cs * z[0] + sn * z[1];
        let by = -sn * z[0] + cs * z[1];
        let pos0 = lip::output(&self.x0);
        let pos1 = lip::output(&self.next_state(z));
        let dsq = (pos1 - pos0).norm_squared();
        let [dlo, dhi] = s.step_distance;
        let mut m = [
            bx - xlo,
            xhi - bx,
            by - ylo,
            yhi - by,
            z[2] - tlo,
            thi - z[2],
            dsq - dlo * dlo,
            dhi * dhi - dsq,
            z[3],
            s.v_max - z[3],
            self.path.domain_end() - (self.param + z[3]),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min);
        let dt = s.lip.step_duration();
        for o in &s.obstacles {
            let u = LipInput::new(z[0], z[1], z[2]);
            let r = obstacle::cbf_residual(&self.x0, &u, &o.predict(0, dt), &o.predict(1, dt), o.effective_radius(), s.gamma, &s.lip);
            m = m.min(r);
        }
        m
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GridBest {
    pub value: f64,
    pub z: [f64; 4],
    /// Cost change attainable within half a grid cell, from the local slope.
    pub slack: f64,
    pub feasible: usize,
}

/// Exhaustive search over `ux, uy` in `[-0.75, 0.75]`, `utheta` over the
/// rectangle's heading range and `v` over `[0, v_max]`.
pub fn grid_search(inst: &Instance, counts: [usize; 4]) -> Option<GridBest> {
    let s = &inst.spec;
    let [_, _, _, _, tlo, thi] = s.rectangle.bounds_for(inst.stance);
    let axis = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    };
    let axes = [
        axis(-0.75, 0.75, counts[0]),
        axis(-0.75, 0.75, counts[1]),
        axis(tlo, thi, counts[2]),
        axis(0.0, s.v_max, counts[3]),
    ];
    let spacing: Vec<f64> = axes.iter().map(|a| a[1] - a[0]).collect();

    let pos0 = lip::output(&inst.x0);
    let running = weighted_error(&s.weights, false, &pos0, &inst.path, inst.param);
    let r = s.input_weight;
    let mut best: Option<GridBest> = None;
    let mut feasible = 0;
    for &ux in &axes[0] {
        for &uy in &axes[1] {
            for &ut in &axes[2] {
                // At v = 0 the progress rows hold, so this margin is the
                // footstep's alone.
                if inst.margin(&[ux, uy, ut, 0.0]) < 0.0 {
                    continue;
                }
                let pos1 = lip::output(&inst.next_state(&[ux, uy, ut, 0.0]));
                let base = running + r[0] * ux * ux + r[1] * uy * uy + r[2] * ut * ut;
                for &v in &axes[3] {
                    if inst.param + v > inst.path.domain_end() {
                        continue;
                    }
                    feasible += 1;
                    let value = base + weighted_error(&s.weights, true, &pos1, &inst.path, inst.param + v)
                        - s.progress_weight * v * v;
                    if best.is_none_or(|b| value < b.value) {
                        best = Some(GridBest {
                            value,
                            z: [ux, uy, ut, v],
                            slack: 0.0,
                            feasible: 0,
                        });
                    }
                }
            }
        }
    }
    let mut best = best?;
    best.feasible = feasible;
    let h = 1e-6;
    best.slack = (0..4)
        .map(|i| {
            let mut zp = best.z;
            let mut zm = best.z;
            zp[i] += h;
            zm[i] -= h;
            ((inst.cost(&zp) - inst.cost(&zm)) / (2.0 * h)).abs() * 0.5 * spacing[i]
        })
        .sum::<f64>()
        + 1e-9 * (1.0 + best.value.abs());
    Some(best)
}
