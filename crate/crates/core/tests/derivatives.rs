//! Analytic derivatives of the condensed program against central differences.

use mpcc_core::frames::ErrorWeights;
use mpcc_core::lip::LipState;
use mpcc_core::obstacle::Obstacle;
use mpcc_core::ocp::{self, Foot, Nlp, OcpSpec};
use mpcc_core::path::Path;
use nalgebra::{DMatrix, DVector, Vector2};

const H: f64 = 1e-6;
const TOL: f64 = 1e-5;

fn rel_err(analytic: &DVector<f64>, fd: &DVector<f64>) -> f64 {
    (analytic - fd).amax() / fd.amax().max(1.0)
}

fn specs() -> Vec<OcpSpec> {
    let obstacles = vec![
        Obstacle::new(0.25, Vector2::new(1.2, 0.2), Vector2::new(0.1, 0.0)),
        Obstacle::new(0.3, Vector2::new(0.5, 1.5), Vector2::new(-0.2, 0.3)),
    ];
    vec![
        OcpSpec {
            obstacles: obstacles.clone(),
            ..OcpSpec::default()
        },
        OcpSpec {
            weights: ErrorWeights::Cartesian {
                running: 200.0,
                terminal: 200.0,
            },
            progress_weight: 50.0,
            step_distance: [0.0, 0.7],
            obstacles,
            ..OcpSpec::default()
        },
    ]
}

fn paths() -> Vec<Path> {
    vec![
        Path::line(Vector2::zeros(), Vector2::new(10.0, 0.0)).unwrap(),
        Path::arc(Vector2::new(0.0, 2.0), 2.0, -std::f64::consts::FRAC_PI_2, 6.0).unwrap(),
        Path::spline(&[
            Vector2::new(0.0, 0.0),
            Vector2::new(1.0, 0.5),
            Vector2::new(2.0, -0.3),
            Vector2::new(3.5, 0.4),
            Vector2::new(5.0, 0.0),
        ])
        .unwrap(),
    ]
}

fn problems() -> Vec<Nlp> {
    let x0 = LipState::new(0.05, 0.4, -0.03, 0.15, 0.1);
    let mut out = Vec::new();
    for spec in specs() {
        for path in paths() {
            for stance in [Foot::Left, Foot::Right] {
                out.push(ocp::build(&spec, &x0, 0.2, &path, stance).unwrap());
            }
        }
    }
    out
}

fn sample(nlp: &Nlp, seed: usize) -> DVector<f64> {
    DVector::from_fn(nlp.dimension(), |i, _| {
        let t = (0.37 * seed as f64 + 1.91 * i as f64).sin();
        if i >= 3 * nlp.horizon() {
            nlp.v_max() * (0.55 + 0.4 * t)
        } else {
            0.25 * t
        }
    })
}

fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, z: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(z.len(), |i, _| {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[i] += H;
        zm[i] -= H;
        (f(&zp) - f(&zm)) / (2.0 * H)
    })
}

#[test]
fn cost_gradient_matches_finite_differences() {
    for nlp in problems() {
        for seed in 0..5 {
            let z = sample(&nlp, seed);
            let (_, g) = nlp.eval_cost(&z);
            let fd = fd_gradient(|z| nlp.cost(z), &z);
            assert!(rel_err(&g, &fd) <= TOL, "error {}", rel_err(&g, &fd));
        }
    }
}

#[test]
fn cost_value_agrees_between_entry_points() {
    for nlp in problems() {
        let z = sample(&nlp, 3);
        assert_eq!(nlp.cost(&z), nlp.eval_cost(&z).0);
    }
}

#[test]
fn gauss_newton_is_exact_hessian_for_straight_cartesian_tracking() {
    // Errors are affine in the decisions on a straight line.
    let spec = OcpSpec {
        weights: ErrorWeights::Cartesian {
            running: 200.0,
            terminal: 100.0,
        },
        ..OcpSpec::default()
    };
    let path = Path::line(Vector2::zeros(), Vector2::new(10.0, 0.0)).unwrap();
    let nlp = ocp::build(&spec, &LipState::new(0.1, 0.3, 0.0, 0.1, 0.0), 0.0, &path, Foot::Left).unwrap();
    let z = sample(&nlp, 1);
    let gn = nlp.eval_cost_full(&z).gauss_newton;
    let n = z.len();
    let fd = DMatrix::from_fn(n, n, |i, j| {
        let mut zp = z.clone();
        let mut zm = z.clone();
        zp[j] += H;
        zm[j] -= H;
        (nlp.eval_cost(&zp).1[i] - nlp.eval_cost(&zm).1[i]) / (2.0 * H)
    });
    assert!((gn - &fd).amax() / fd.amax().max(1.0) <= TOL);
}

#[test]
fn constraint_jacobian_matches_finite_differences() {
    for nlp in problems() {
        for seed in 0..5 {
            let z = sample(&nlp, seed);
            let jac = nlp.eval_constraints(&z).jacobian;
            for row in 0..nlp.num_constraints() {
                let fd = fd_gradient(|z| nlp.eval_constraints(z).values[row], &z);
                let a = jac.row(row).transpose();
                assert!(rel_err(&a, &fd) <= TOL, "row {row} ({:?}) error {}", nlp.tags()[row], rel_err(&a, &fd));
            }
        }
    }
}

#[test]
fn constraint_curvature_matches_finite_differences() {
    for nlp in problems() {
        let m = nlp.num_constraints();
        let weights = DVector::from_fn(m, |i, _| ((i as f64) * 0.77).cos());
        let z = sample(&nlp, 2);
        let h = nlp.constraint_curvature(&z, &weights);
        let n = z.len();
        let fd = DMatrix::from_fn(n, n, |i, j| {
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[j] += H;
            zm[j] -= H;
            let jp = nlp.eval_constraints(&zp).jacobian.transpose() * &weights;
            let jm = nlp.eval_constraints(&zm).jacobian.transpose() * &weights;
            (jp[i] - jm[i]) / (2.0 * H)
        });
        assert!((&h - &fd).amax() / fd.amax().max(1.0) <= TOL, "{}", (&h - &fd).amax());
        assert!((&h - h.transpose()).amax() < 1e-12);
    }
}
