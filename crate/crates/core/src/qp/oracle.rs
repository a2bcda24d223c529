//! Brute-force verification oracle: enumerates active sets of a small QP and
//! solves each equality-constrained KKT system directly.
//!
//! Dense linear algebra, independent of the interior-point path, intended as
//! ground truth in tests.

use super::problem::{QpError, QpProblem, QpSolution, SolveStatus};

/// Enumeration bound on the number of inequality rows.
pub const ORACLE_INEQ_LIMIT: usize = 20;

/// Enumerates all active sets and returns the best feasible candidate with
/// sign-feasible multipliers.
pub fn active_set_oracle(problem: &QpProblem) -> Result<QpSolution, QpError> {
    let mi = problem.num_in();
    if mi > ORACLE_INEQ_LIMIT {
        return Err(QpError::TooLarge { inequalities: mi, limit: ORACLE_INEQ_LIMIT });
    }
    let n = problem.num_vars;
    let me = problem.num_eq();
    let h = problem.h_dense();
    let a_eq = problem.a_eq.to_dense();
    let a_in = problem.a_in.to_dense();

    let scale = 1.0
        + problem.b_in.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        + problem.b_eq.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let feas_tol = 1e-7 * scale;
    let sign_tol = 1e-7;

    let mut best: Option<QpSolution> = None;
    for mask in 0u64..(1u64 << mi) {
        let active: Vec<usize> = (0..mi).filter(|&i| mask >> i & 1 == 1).collect();
        let k = active.len();
        let dim = n + me + k;

        let mut m = nalgebra::DMatrix::<f64>::zeros(dim, dim);
        m.view_mut((0, 0), (n, n)).copy_from(&h);
        for r in 0..me {
            for c in 0..n {
                m[(n + r, c)] = a_eq[(r, c)];
                m[(c, n + r)] = a_eq[(r, c)];
            }
        }
        for (j, &r) in active.iter().enumerate() {
            for c in 0..n {
                m[(n + me + j, c)] = a_in[(r, c)];
                m[(c, n + me + j)] = a_in[(r, c)];
            }
        }
        let mut rhs = nalgebra::DVector::<f64>::zeros(dim);
        for i in 0..n {
            rhs[i] = -problem.q[i];
        }
        for r in 0..me {
            rhs[n + r] = problem.b_eq[r];
        }
        for (j, &r) in active.iter().enumerate() {
            rhs[n + me + j] = problem.b_in[r];
        }

        let lu = m.clone().lu();
        let sol = match lu.solve(&rhs) {
            Some(sol) => sol,
            None => continue,
        };
        if (&m * &sol - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
            continue; // singular or ill-conditioned subsystem
        }

        let x: Vec<f64> = sol.as_slice()[..n].to_vec();
        let y_eq: Vec<f64> = sol.as_slice()[n..n + me].to_vec();
        let mut y_in = vec![0.0; mi];
        let mut signs_ok = true;
        for (j, &r) in active.iter().enumerate() {
            y_in[r] = sol[n + me + j];
            if y_in[r] < -sign_tol {
                signs_ok = false;
            }
        }
        if !signs_ok {
            continue;
        }
        let ax = problem.a_in.mul_vec(&x);
        let feasible = (0..mi).all(|i| ax[i] - problem.b_in[i] <= feas_tol);
        if !feasible {
            continue;
        }

        let objective = problem.objective(&x);
        if best.as_ref().map_or(true, |b| objective < b.objective - 1e-12 * (1.0 + b.objective.abs())) {
            let residuals = problem.residuals_at(&x, &y_eq, &y_in);
            best = Some(QpSolution {
                x,
                y_eq,
                y_in,
                objective,
                status: SolveStatus::Optimal,
                residuals,
            });
        }
    }
    best.ok_or(QpError::Infeasible)
}
