//! Dense strictly convex QP by the Goldfarb-Idnani dual active-set method.
//!
//! Solves `min 1/2 x^T H x + g^T x` subject to `a_i^T x >= b_i`. The
//! iteration starts from the unconstrained minimizer and adds violated
//! constraints one at a time while keeping dual feasibility, so no feasible
//! starting point is needed and an empty feasible set is detected directly.

use nalgebra::{Cholesky, DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpError {
    NotPositiveDefinite,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint row, zero for inactive rows.
    pub multipliers: DVector<f64>,
    /// Active rows at the solution, in the order they were added.
    pub active: Vec<usize>,
    pub iterations: usize,
}

/// `warm` lists rows to try first whenever they are violated.
pub fn solve(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    warm: &[usize],
) -> Result<QpSolution, QpError> {
    let n = g.len();
    let m = b.len();
    let chol = Cholesky::new(h.clone()).ok_or(QpError::NotPositiveDefinite)?;
    // H^-1 = J J^T with J = L^-T.
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(QpError::NotPositiveDefinite)?;
    let j = l_inv.transpose();

    let mut x = -chol.solve(g);
    let mut active: Vec<usize> = Vec::new();
    let mut duals: Vec<f64> = Vec::new();
    let row_norm: Vec<f64> = (0..m).map(|i| a.row(i).norm()).collect();
    let tol = |i: usize, x: &DVector<f64>| 1e-12 * (1.0 + b[i].abs() + row_norm[i] * x.amax());
    let slack = |i: usize, x: &DVector<f64>| a.row(i).dot(&x.transpose()) - b[i];

    let max_iter = 10 * (n + m) + 50;
    let mut iterations = 0;
    loop {
        // Pick the row to add: a violated warm row first, otherwise the most
        // violated row after normalization.
        let candidate = warm
            .iter()
            .copied()
            .filter(|&i| i < m && !active.contains(&i))
            .find(|&i| slack(i, &x) < -tol(i, &x))
            .or_else(|| {
                (0..m)
                    .filter(|i| !active.contains(i))
                    .map(|i| (i, slack(i, &x)))
                    .filter(|&(i, s)| s < -tol(i, &x))
                    .min_by(|p, q| (p.1 / row_norm[p.0].max(1e-300)).total_cmp(&(q.1 / row_norm[q.0].max(1e-300))))
                    .map(|(i, _)| i)
            });
        let Some(p) = candidate else {
            let mut multipliers = DVector::zeros(m);
            for (&i, &u) in active.iter().zip(&duals) {
                multipliers[i] = u;
            }
            return Ok(QpSolution {
                x,
                multipliers,
                active,
                iterations,
            });
        };

        let normal = a.row(p).transpose();
        let mut dual_p = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::IterationLimit);
            }
            let d = j.transpose() * &normal;
            let (primal, dual_dir) = directions(&j, &l_inv, a, &active, &d);
            // Partial step: the largest move keeping active duals >= 0.
            let mut partial = (f64::INFINITY, usize::MAX);
            for (k, &r) in dual_dir.iter().enumerate() {
                if r > 0.0 {
                    let t = duals[k] / r;
                    if t < partial.0 {
                        partial = (t, k);
                    }
                }
            }
            let curvature = primal.dot(&normal);
            let full = if primal.norm() <= 1e-12 * d.norm().max(1e-300) || curvature <= 0.0 {
                f64::INFINITY
            } else {
                -slack(p, &x) / curvature
            };
            if full.is_infinite() && partial.0.is_infinite() {
                return Err(QpError::Infeasible);
            }
            let t = full.min(partial.0);
            if full.is_finite() {
                x += &primal * t;
            }
            for (u, r) in duals.iter_mut().zip(dual_dir.iter()) {
                *u -= t * r;
            }
            dual_p += t;
            if t == full {
                active.push(p);
                duals.push(dual_p);
                break;
            }
            let k = partial.1;
            active.remove(k);
            duals.remove(k);
        }
    }
}

/// Primal step direction `z = J (I - Q Q^T) d` and dual direction
/// `r = R^-1 Q^T d`, where `L^-1 N_A = Q R`.
fn directions(
    j: &DMatrix<f64>,
    l_inv: &DMatrix<f64>,
    a: &DMatrix<f64>,
    active: &[usize],
    d: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    if active.is_empty() {
        return (j * d, DVector::zeros(0));
    }
    let n = d.len();
    let mut nhat = DMatrix::zeros(n, active.len());
    for (k, &i) in active.iter().enumerate() {
        nhat.set_column(k, &(l_inv * a.row(i).transpose()));
    }
    let qr = nhat.qr();
    let q = qr.q();
    let r = qr.r();
    let qtd = q.transpose() * d;
    let projected = d - &q * &qtd;
    let dual = r.solve_upper_triangular(&qtd).unwrap_or_else(|| DVector::from_element(active.len(), f64::NAN));
    (j * projected, dual)
}
