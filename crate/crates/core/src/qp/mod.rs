//! Dense/sparse convex quadratic programming with certified dual values.

mod ipm;
mod linalg;
mod oracle;
mod problem;

pub use ipm::solve;
pub use oracle::{active_set_oracle, ORACLE_INEQ_LIMIT};
pub use problem::{
    CsrMatrix, KktResiduals, QpError, QpProblem, QpProblemBuilder, QpSolution, SolveOptions,
    SolveStatus,
};

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;

    fn opts() -> SolveOptions {
        SolveOptions::default()
    }

    /// min 1/2 x^2 s.t. x = 3 has x = 3, y_eq = -3 under the Lagrangian
    /// convention L = f + y(x - 3).
    #[test]
    fn equality_constrained_scalar() {
        let mut b = QpProblemBuilder::new();
        let x = b.add_var("x");
        b.add_quadratic(x, x, 1.0);
        b.add_eq_row(&[(x, 1.0)], 3.0);
        let p = b.build();
        let sol = solve(&p, &opts()).unwrap();
        assert_abs_diff_eq!(sol.x[0], 3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.y_eq[0], -3.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.objective, 4.5, epsilon = 1e-9);
    }

    /// min 1/2 x^2 s.t. -x <= -1 has x = 1 with multiplier 1.
    #[test]
    fn active_bound_scalar() {
        let mut b = QpProblemBuilder::new();
        let x = b.add_var("x");
        b.add_quadratic(x, x, 1.0);
        b.add_in_row(&[(x, -1.0)], -1.0);
        let p = b.build();
        let sol = solve(&p, &opts()).unwrap();
        assert_abs_diff_eq!(sol.x[0], 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(sol.y_in[0], 1.0, epsilon = 1e-8);
        assert!(sol.residuals.within(1e-8));

        let oracle = active_set_oracle(&p).unwrap();
        assert_abs_diff_eq!(oracle.x[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(oracle.y_in[0], 1.0, epsilon = 1e-10);
    }

    /// Two-period storage dispatch in pool form: d = (10, 20), C = 1/2 g^2.
    /// Variables (g1, g2, u1, u2, x1, x2); capacity E enters the right-hand
    /// sides only.
    fn two_period_pool(e: f64) -> QpProblem {
        let mut b = QpProblemBuilder::new();
        let g1 = b.add_var("g1");
        let g2 = b.add_var("g2");
        let u1 = b.add_var("u1");
        let u2 = b.add_var("u2");
        let x1 = b.add_var("x1");
        let x2 = b.add_var("x2");
        b.add_quadratic(g1, g1, 1.0);
        b.add_quadratic(g2, g2, 1.0);
        b.add_eq_row(&[(g1, 1.0), (u1, -1.0)], 10.0);
        b.add_eq_row(&[(g2, 1.0), (u2, -1.0)], 20.0);
        b.add_eq_row(&[(x1, 1.0), (u1, -1.0)], e / 2.0);
        b.add_eq_row(&[(x2, 1.0), (x1, -1.0), (u2, -1.0)], 0.0);
        b.add_eq_row(&[(x2, 1.0)], e / 2.0);
        b.add_in_row(&[(x1, 1.0)], e);
        b.add_in_row(&[(x2, 1.0)], e);
        b.add_in_row(&[(x1, -1.0)], 0.0);
        b.add_in_row(&[(x2, -1.0)], 0.0);
        b.build()
    }

    #[test]
    fn two_period_pool_no_storage() {
        let p = two_period_pool(0.0);
        let sol = solve(&p, &opts()).unwrap();
        assert_abs_diff_eq!(sol.objective, 250.0, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.x[0], 10.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.x[1], 20.0, epsilon = 1e-6);

        let oracle = active_set_oracle(&p).unwrap();
        assert_abs_diff_eq!(oracle.objective, 250.0, epsilon = 1e-9);
    }

    #[test]
    fn two_period_pool_with_storage() {
        let p = two_period_pool(10.0);
        let sol = solve(&p, &opts()).unwrap();
        assert_abs_diff_eq!(sol.objective, 225.0, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.x[0], 15.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.x[1], 15.0, epsilon = 1e-6);
        // Balance duals recover the prices: p_t = -nu_t = 15.
        assert_abs_diff_eq!(-sol.y_eq[0], 15.0, epsilon = 1e-6);
        assert_abs_diff_eq!(-sol.y_eq[1], 15.0, epsilon = 1e-6);
        assert!(sol.residuals.within(1e-8));
    }

    #[test]
    fn infeasible_problem_detected() {
        // x <= -1 and -x <= -1 cannot hold together.
        let mut b = QpProblemBuilder::new();
        let x = b.add_var("x");
        b.add_quadratic(x, x, 1.0);
        b.add_in_row(&[(x, 1.0)], -1.0);
        b.add_in_row(&[(x, -1.0)], -1.0);
        let p = b.build();
        match solve(&p, &opts()) {
            Err(QpError::Infeasible) => {}
            other => panic!("expected Infeasible, got {other:?}"),
        }
        match active_set_oracle(&p) {
            Err(QpError::Infeasible) => {}
            other => panic!("expected Infeasible from oracle, got {other:?}"),
        }
    }

    #[test]
    fn oracle_rejects_oversized_problems() {
        let mut b = QpProblemBuilder::new();
        let x = b.add_var("x");
        b.add_quadratic(x, x, 1.0);
        for i in 0..(ORACLE_INEQ_LIMIT + 1) {
            b.add_in_row(&[(x, 1.0)], 1.0 + i as f64);
        }
        let p = b.build();
        assert!(matches!(active_set_oracle(&p), Err(QpError::TooLarge { .. })));
    }

    fn random_qp(rng: &mut impl Rng, n: usize, me: usize, mi: usize) -> QpProblem {
        let mut b = QpProblemBuilder::new();
        for i in 0..n {
            b.add_var(format!("x{i}"));
            b.add_linear(i, rng.random_range(-2.0..2.0));
        }
        // H = M'M + 0.1 I, positive definite.
        let m = nalgebra::DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let h = m.transpose() * &m + nalgebra::DMatrix::identity(n, n) * 0.1;
        for i in 0..n {
            for j in i..n {
                b.add_quadratic(i, j, h[(i, j)]);
            }
        }
        // Constraints through a known interior point keep the problem feasible.
        let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..me {
            let coeffs: Vec<(usize, f64)> =
                (0..n).map(|i| (i, rng.random_range(-1.0..1.0))).collect();
            let rhs: f64 = coeffs.iter().map(|&(i, v)| v * x0[i]).sum();
            b.add_eq_row(&coeffs, rhs);
        }
        for _ in 0..mi {
            let coeffs: Vec<(usize, f64)> =
                (0..n).map(|i| (i, rng.random_range(-1.0..1.0))).collect();
            let at_x0: f64 = coeffs.iter().map(|&(i, v)| v * x0[i]).sum();
            b.add_in_row(&coeffs, at_x0 + rng.random_range(0.0..1.5));
        }
        b.build()
    }

    #[test]
    fn randomized_oracle_agreement_smoke() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..25 {
            let n = rng.random_range(2..5);
            let me = rng.random_range(0..2.min(n));
            let mi = rng.random_range(1..7);
            let p = random_qp(&mut rng, n, me, mi);
            let sol = solve(&p, &opts()).unwrap();
            let oracle = active_set_oracle(&p).unwrap();
            assert!(
                (sol.objective - oracle.objective).abs() <= 1e-6,
                "objective mismatch: ipm {} vs oracle {}",
                sol.objective,
                oracle.objective
            );
            for i in 0..n {
                assert!(
                    (sol.x[i] - oracle.x[i]).abs() <= 1e-5,
                    "primal mismatch at {i}"
                );
            }
        }
    }

    /// Perturbing b_eq by delta moves the optimal objective by -y_eq'delta.
    #[test]
    fn dual_is_sensitivity_of_objective() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let n = rng.random_range(3..6);
            let p = random_qp(&mut rng, n, 2, 3);
            let sol = solve(&p, &opts()).unwrap();
            let delta = 1e-4 * (1.0 + sol.objective.abs()).min(10.0);
            for r in 0..p.num_eq() {
                let mut pp = p.clone();
                pp.b_eq[r] += delta;
                let sol2 = solve(&pp, &opts()).unwrap();
                let predicted = -sol.y_eq[r] * delta;
                let actual = sol2.objective - sol.objective;
                assert!(
                    (predicted - actual).abs() <= 1e-6 * (1.0 + actual.abs()) + 10.0 * delta * delta,
                    "sensitivity mismatch row {r}: predicted {predicted}, actual {actual}"
                );
            }
        }
    }

    /// Scaling H and q by s > 0 scales objective and multipliers by s and
    /// leaves the primal solution unchanged.
    #[test]
    fn scaling_covariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let p = random_qp(&mut rng, 4, 1, 5);
        let sol = solve(&p, &opts()).unwrap();
        for s in [0.5, 3.0, 17.0] {
            let mut ps = p.clone();
            let triplets: Vec<(usize, usize, f64)> =
                p.h_upper.iter().map(|(i, j, v)| (i, j, s * v)).collect();
            ps.h_upper = CsrMatrix::from_triplets(p.num_vars, p.num_vars, &triplets);
            ps.q = p.q.iter().map(|v| s * v).collect();
            let sols = solve(&ps, &opts()).unwrap();
            assert!((sols.objective - s * sol.objective).abs() <= 1e-6 * (1.0 + sol.objective.abs() * s));
            for i in 0..p.num_vars {
                assert!((sols.x[i] - sol.x[i]).abs() <= 1e-5);
            }
            for r in 0..p.num_eq() {
                assert!((sols.y_eq[r] - s * sol.y_eq[r]).abs() <= 1e-5 * s.max(1.0));
            }
            for r in 0..p.num_in() {
                assert!((sols.y_in[r] - s * sol.y_in[r]).abs() <= 1e-5 * s.max(1.0));
            }
        }
    }

    #[test]
    fn maxiter_reports_partial_solution() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let p = random_qp(&mut rng, 4, 1, 4);
        let opts = SolveOptions { tol: 1e-10, max_iter: 2 };
        match solve(&p, &opts) {
            Err(QpError::MaxIterations { solution }) => {
                assert_eq!(solution.status, SolveStatus::MaxIter);
                assert!(solution.residuals.worst().is_finite());
            }
            Ok(sol) => {
                // Tiny problems occasionally converge (and polish) in 2 steps.
                assert!(sol.residuals.within(1e-10));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }
}
