//! Primal-dual interior-point solver with a Mehrotra predictor-corrector
//! step, an active-set polish for exact degenerate optima, and a phase-I
//! fallback for infeasibility certification.

use log::{debug, trace};

use super::linalg::KktSystem;
use super::problem::{QpError, QpProblem, QpSolution, SolveOptions, SolveStatus};

/// Solves a convex QP to the requested absolute KKT tolerance.
pub fn solve(problem: &QpProblem, options: &SolveOptions) -> Result<QpSolution, QpError> {
    validate(problem)?;
    if problem.num_in() == 0 {
        return solve_equality_constrained(problem, options);
    }
    ipm(problem, options, true)
}

fn validate(problem: &QpProblem) -> Result<(), QpError> {
    let n = problem.num_vars;
    if n == 0 {
        return Err(QpError::BadProblem("problem has no variables".into()));
    }
    if problem.q.len() != n || problem.variable_names.len() != n {
        return Err(QpError::BadProblem("q / variable_names length mismatch".into()));
    }
    if problem.a_eq.ncols() != n || problem.a_in.ncols() != n {
        return Err(QpError::BadProblem("constraint matrix column count mismatch".into()));
    }
    if problem.a_eq.nrows() != problem.b_eq.len() || problem.a_in.nrows() != problem.b_in.len() {
        return Err(QpError::BadProblem("constraint rhs length mismatch".into()));
    }
    let finite = problem.q.iter().all(|v| v.is_finite())
        && problem.b_eq.iter().all(|v| v.is_finite())
        && problem.b_in.iter().all(|v| v.is_finite())
        && problem.h_upper.iter().all(|(_, _, v)| v.is_finite())
        && problem.a_eq.iter().all(|(_, _, v)| v.is_finite())
        && problem.a_in.iter().all(|(_, _, v)| v.is_finite());
    if !finite {
        return Err(QpError::BadProblem("non-finite problem data".into()));
    }
    Ok(())
}

/// No inequalities: one Newton solve of the equality KKT system.
fn solve_equality_constrained(
    problem: &QpProblem,
    options: &SolveOptions,
) -> Result<QpSolution, QpError> {
    let n = problem.num_vars;
    let me = problem.num_eq();
    let mut sys = KktSystem::new(problem);
    sys.factor(&[]).map_err(QpError::Numerical)?;
    let mut rhs = vec![0.0; n + me];
    for i in 0..n {
        rhs[i] = -problem.q[i];
    }
    rhs[n..].copy_from_slice(&problem.b_eq);
    let sol = sys.solve(&rhs);
    let x = sol[..n].to_vec();
    let y_eq = sol[n..].to_vec();
    let residuals = problem.residuals_at(&x, &y_eq, &[]);
    if !residuals.within(options.tol) {
        return Err(QpError::Numerical(format!(
            "singular equality-constrained KKT system (worst residual {:.3e})",
            residuals.worst()
        )));
    }
    Ok(QpSolution {
        objective: problem.objective(&x),
        x,
        y_eq,
        y_in: Vec::new(),
        status: SolveStatus::Optimal,
        residuals,
    })
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
    s: Vec<f64>,
}

fn ipm(problem: &QpProblem, options: &SolveOptions, phase1_allowed: bool) -> Result<QpSolution, QpError> {
    let n = problem.num_vars;
    let me = problem.num_eq();
    let mi = problem.num_in();
    let eps = (options.tol * 0.25).min(1e-9).max(1e-13);

    let mut sys = KktSystem::new(problem);

    let mut it = Iterate {
        x: vec![0.0; n],
        y: vec![0.0; me],
        z: vec![1.0; mi],
        s: problem.b_in.iter().map(|&b| b.max(1.0)).collect(),
    };
    let mu0 = dot(&it.s, &it.z) / mi as f64;

    let mut best: Option<(QpSolution, f64)> = None;
    let mut prim_hist: Vec<f64> = Vec::new();
    let mut worst_hist: Vec<f64> = Vec::new();
    let mut restarted = false;
    let mut polish_attempts = 0usize;

    let mut iter = 0;
    while iter < options.max_iter {
        iter += 1;

        // True residuals drive convergence; the slack-based ones drive the step.
        let res = problem.residuals_at(&it.x, &it.y, &it.z);
        let worst = res.worst();
        trace!(
            "ipm iter {iter}: stat={:.2e} eq={:.2e} in={:.2e} comp={:.2e}",
            res.stationarity, res.primal_eq, res.primal_in, res.complementarity
        );
        if best.as_ref().map_or(true, |(_, w)| worst < *w) {
            best = Some((
                QpSolution {
                    x: it.x.clone(),
                    y_eq: it.y.clone(),
                    y_in: it.z.clone(),
                    objective: problem.objective(&it.x),
                    status: SolveStatus::Optimal,
                    residuals: res,
                    },
                worst,
            ));
        }
        if res.within(eps) {
            break;
        }
        // Zigzag guard: once the best residual stops improving, the central
        // path has delivered what it can and the polish takes over. On
        // degenerate problems without a strict interior this is the only
        // road to high accuracy.
        worst_hist.push(best.as_ref().map(|(_, w)| *w).unwrap_or(worst));
        let b_scale = 1.0
            + problem.b_eq.iter().fold(0.0f64, |m, v| m.max(v.abs()))
            + problem.b_in.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if worst_hist.len() >= 16 && iter >= 20 && polish_attempts < 2 {
            let then = worst_hist[worst_hist.len() - 16];
            let now = *worst_hist.last().unwrap();
            let prim_now = res.primal_eq.max(res.primal_in.max(0.0));
            if now > 0.5 * then && prim_now <= 1e-4 * b_scale {
                polish_attempts += 1;
                debug!("ipm progress stalled at {now:.2e} after {iter} iterations; polishing");
                let (cand, cand_worst) = best.clone().expect("best iterate exists");
                if let Some(polished) = try_polish(problem, &cand, options.tol) {
                    let pw = polished.residuals.worst();
                    if pw < cand_worst {
                        best = Some((polished, pw));
                    }
                }
                if best.as_ref().is_some_and(|(b, _)| b.residuals.within(options.tol)) {
                    break;
                }
                if polish_attempts >= 2 {
                    break;
                }
                worst_hist.clear();
            }
        }

        // Stall and divergence handling.
        let prim = res.primal_eq.max(res.primal_in.max(0.0));
        prim_hist.push(prim);
        let mu = dot(&it.s, &it.z) / mi as f64;
        let iterate_huge = inf_norm(&it.x) > 1e13 || inf_norm(&it.z) > 1e13;
        let stalled = prim_hist.len() >= 25
            && prim > 1e3 * eps.max(1e-12)
            && mu < 1e-8 * mu0
            && prim > 0.5 * prim_hist[prim_hist.len() - 10];
        if iterate_huge && prim <= 1e-4 * b_scale {
            // Feasible but degenerate: the dual face is unbounded and the
            // iterates run away along it. Stop and rely on the polish.
            debug!("ipm iterates diverging on a feasible problem; stopping for polish");
            break;
        }
        if iterate_huge || stalled {
            if phase1_allowed && !restarted {
                debug!("ipm stalled (prim={prim:.2e}, mu={mu:.2e}); invoking phase-I");
                match phase1_restart(problem, options)? {
                    Some(x0) => {
                        it.x = x0;
                        let ax = problem.a_in.mul_vec(&it.x);
                        for i in 0..mi {
                            it.s[i] = (problem.b_in[i] - ax[i]).max(1e-8);
                            it.z[i] = 1.0;
                        }
                        it.y.iter_mut().for_each(|v| *v = 0.0);
                        prim_hist.clear();
                        restarted = true;
                        continue;
                    }
                    None => return Err(QpError::Infeasible),
                }
            }
            if iterate_huge {
                return Err(QpError::Numerical("iterates diverged".into()));
            }
        }

        // Residuals in the slack formulation.
        let mut rd = problem.mul_h(&it.x);
        for i in 0..n {
            rd[i] += problem.q[i];
        }
        problem.a_eq.add_mul_transpose_vec(&it.y, &mut rd);
        problem.a_in.add_mul_transpose_vec(&it.z, &mut rd);
        let ax_eq = problem.a_eq.mul_vec(&it.x);
        let rp: Vec<f64> = (0..me).map(|i| ax_eq[i] - problem.b_eq[i]).collect();
        let ax_in = problem.a_in.mul_vec(&it.x);
        let ri: Vec<f64> = (0..mi).map(|i| ax_in[i] + it.s[i] - problem.b_in[i]).collect();

        let w: Vec<f64> = (0..mi).map(|i| it.z[i] / it.s[i]).collect();
        sys.factor(&w).map_err(QpError::Numerical)?;

        // Predictor.
        let rc_aff: Vec<f64> = (0..mi).map(|i| -it.s[i] * it.z[i]).collect();
        let (dx_a, _dy_a, dz_a, ds_a) = newton_step(problem, &sys, &it, &w, &rd, &rp, &ri, &rc_aff);
        if !all_finite(&dx_a) {
            break; // fall through to best-iterate handling
        }
        let ap_aff = max_step(&it.s, &ds_a);
        let ad_aff = max_step(&it.z, &dz_a);
        let mut mu_aff = 0.0;
        for i in 0..mi {
            mu_aff += (it.s[i] + ap_aff * ds_a[i]) * (it.z[i] + ad_aff * dz_a[i]);
        }
        mu_aff /= mi as f64;
        let sigma = (mu_aff / mu).powi(3).clamp(1e-10, 1.0);

        // Corrector.
        let rc: Vec<f64> = (0..mi)
            .map(|i| -it.s[i] * it.z[i] + sigma * mu - ds_a[i] * dz_a[i])
            .collect();
        let (dx, dy, dz, ds) = newton_step(problem, &sys, &it, &w, &rd, &rp, &ri, &rc);
        if !all_finite(&dx) || !all_finite(&dz) {
            break;
        }

        let tau = if mu > 1e-6 * mu0 { 0.995 } else { 0.9995 };
        let ap = (tau * max_step(&it.s, &ds)).min(1.0);
        let ad = (tau * max_step(&it.z, &dz)).min(1.0);
        for i in 0..n {
            it.x[i] += ap * dx[i];
        }
        for i in 0..mi {
            it.s[i] += ap * ds[i];
            it.z[i] += ad * dz[i];
        }
        for i in 0..me {
            it.y[i] += ad * dy[i];
        }
    }

    let (mut solution, mut worst) = best.ok_or_else(|| QpError::Numerical("no iterate produced".into()))?;

    // Active-set polish: on degenerate optima the central path only reaches
    // the solution to O(sqrt(mu)); one exact face solve removes the blur.
    if let Some(polished) = try_polish(problem, &solution, options.tol) {
        let pw = polished.residuals.worst();
        if pw < worst {
            solution = polished;
            worst = pw;
        }
    }

    if solution.residuals.within(options.tol) {
        debug!("ipm converged in {iter} iterations (worst residual {worst:.2e})");
        Ok(solution)
    } else {
        solution.status = SolveStatus::MaxIter;
        Err(QpError::MaxIterations { solution: Box::new(solution) })
    }
}

#[allow(clippy::too_many_arguments)]
fn newton_step(
    problem: &QpProblem,
    sys: &KktSystem,
    it: &Iterate,
    w: &[f64],
    rd: &[f64],
    rp: &[f64],
    ri: &[f64],
    rc: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = problem.num_vars;
    let me = problem.num_eq();
    let mi = problem.num_in();

    // rhs1 = -rd - Ain'(w .* ri + rc ./ s)
    let packed: Vec<f64> = (0..mi).map(|i| w[i] * ri[i] + rc[i] / it.s[i]).collect();
    let mut rhs = vec![0.0; n + me];
    problem.a_in.add_mul_transpose_vec(&packed, &mut rhs[..n]);
    for i in 0..n {
        rhs[i] = -rd[i] - rhs[i];
    }
    for i in 0..me {
        rhs[n + i] = -rp[i];
    }
    let sol = sys.solve(&rhs);
    let dx = sol[..n].to_vec();
    let dy = sol[n..].to_vec();

    let ain_dx = problem.a_in.mul_vec(&dx);
    let mut dz = vec![0.0; mi];
    let mut ds = vec![0.0; mi];
    for i in 0..mi {
        dz[i] = w[i] * (ain_dx[i] + ri[i]) + rc[i] / it.s[i];
        ds[i] = -ri[i] - ain_dx[i];
    }
    (dx, dy, dz, ds)
}

/// Largest step in [0, 1] keeping `v + alpha dv` strictly positive.
fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    let mut alpha: f64 = 1.0;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            alpha = alpha.min(-v[i] / dv[i]);
        }
    }
    alpha
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Phase-I: minimize slack infeasibility. Returns a feasible starting point,
/// or `None` when the problem is certified infeasible.
fn phase1_restart(problem: &QpProblem, options: &SolveOptions) -> Result<Option<Vec<f64>>, QpError> {
    let n = problem.num_vars;
    let me = problem.num_eq();
    let mi = problem.num_in();

    let mut b = super::problem::QpProblemBuilder::new();
    for name in &problem.variable_names {
        b.add_var(format!("p1_{name}"));
    }
    let t0 = b.num_vars();
    for i in 0..mi {
        b.add_var(format!("p1_t{i}"));
    }
    let r0 = b.num_vars();
    for i in 0..me {
        b.add_var(format!("p1_r{i}"));
    }
    // Objective: 1/2 ||t||^2 + 1/2 ||r||^2 + tiny ridge on x for a
    // nonsingular KKT system.
    for i in 0..n {
        b.add_quadratic(i, i, 1e-8);
    }
    for i in 0..(mi + me) {
        b.add_quadratic(t0 + i, t0 + i, 1.0);
    }
    for r in 0..me {
        let (cols, vals) = problem.a_eq.row(r);
        let mut coeffs: Vec<(usize, f64)> = cols.iter().zip(vals).map(|(c, v)| (*c, *v)).collect();
        coeffs.push((r0 + r, -1.0));
        b.add_eq_row(&coeffs, problem.b_eq[r]);
    }
    for r in 0..mi {
        let (cols, vals) = problem.a_in.row(r);
        let mut coeffs: Vec<(usize, f64)> = cols.iter().zip(vals).map(|(c, v)| (*c, *v)).collect();
        coeffs.push((t0 + r, -1.0));
        b.add_in_row(&coeffs, problem.b_in[r]);
        b.add_in_row(&[(t0 + r, -1.0)], 0.0);
    }
    let phase1 = b.build();
    let opts = SolveOptions { tol: options.tol.max(1e-9), max_iter: options.max_iter };
    let sol = match ipm(&phase1, &opts, false) {
        Ok(sol) => sol,
        Err(QpError::MaxIterations { solution }) => *solution,
        Err(e) => return Err(e),
    };

    let x = sol.x[..n].to_vec();
    let scale = 1.0
        + problem.b_eq.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        + problem.b_in.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let eq_res = problem
        .a_eq
        .mul_vec(&x)
        .iter()
        .zip(&problem.b_eq)
        .fold(0.0f64, |m, (ax, b)| m.max((ax - b).abs()));
    let in_res = problem
        .a_in
        .mul_vec(&x)
        .iter()
        .zip(&problem.b_in)
        .fold(f64::NEG_INFINITY, |m, (ax, b)| m.max(ax - b));
    debug!("phase-I residuals: eq={eq_res:.2e} in={in_res:.2e}");
    if eq_res <= 1e-7 * scale && in_res <= 1e-7 * scale {
        Ok(Some(x))
    } else {
        Ok(None)
    }
}

const POLISH_DENSE_LIMIT: usize = 1600;

/// Solves the equality-constrained KKT system of the guessed optimal face:
/// `[H A'; A 0] [x; y] = [-q; b]` with `A` the equality rows stacked with the
/// active inequality rows. Small systems go through dense LU, large ones
/// through the sparse quasi-definite path. Returns `None` when the system is
/// inconsistent (wrong face guess).
fn solve_face(problem: &QpProblem, active: &[usize]) -> Option<Vec<f64>> {
    let n = problem.num_vars;
    let me = problem.num_eq();
    let dim = n + me + active.len();
    let mut rhs = vec![0.0; dim];
    for i in 0..n {
        rhs[i] = -problem.q[i];
    }
    rhs[n..n + me].copy_from_slice(&problem.b_eq);
    for (k, &r) in active.iter().enumerate() {
        rhs[n + me + k] = problem.b_in[r];
    }

    if dim <= POLISH_DENSE_LIMIT {
        let mut m = nalgebra::DMatrix::<f64>::zeros(dim, dim);
        m.view_mut((0, 0), (n, n)).copy_from(&problem.h_dense());
        for (r, c, v) in problem.a_eq.iter() {
            m[(n + r, c)] = v;
            m[(c, n + r)] = v;
        }
        for (k, &r) in active.iter().enumerate() {
            let (cols, vals) = problem.a_in.row(r);
            for (c, v) in cols.iter().zip(vals) {
                m[(n + me + k, *c)] = *v;
                m[(*c, n + me + k)] = *v;
            }
        }
        let b = nalgebra::DVector::from_column_slice(&rhs);
        return solve_face_system(&m, &b, n).map(|sol| sol.as_slice().to_vec());
    }

    // Sparse route: phrase the face as an equality-only problem and reuse
    // the Newton-system machinery (regularized LDL' plus refinement).
    let mut fb = super::problem::QpProblemBuilder::new();
    for name in &problem.variable_names {
        fb.add_var(name.clone());
    }
    for (i, j, v) in problem.h_upper.iter() {
        fb.add_quadratic(i, j, v);
    }
    for (i, &qi) in problem.q.iter().enumerate() {
        fb.add_linear(i, qi);
    }
    for r in 0..me {
        let (cols, vals) = problem.a_eq.row(r);
        let coeffs: Vec<(usize, f64)> = cols.iter().zip(vals).map(|(c, v)| (*c, *v)).collect();
        fb.add_eq_row(&coeffs, problem.b_eq[r]);
    }
    for &r in active {
        let (cols, vals) = problem.a_in.row(r);
        let coeffs: Vec<(usize, f64)> = cols.iter().zip(vals).map(|(c, v)| (*c, *v)).collect();
        fb.add_eq_row(&coeffs, problem.b_in[r]);
    }
    let face = fb.build();
    let mut sys = KktSystem::new(&face);
    sys.factor(&[]).ok()?;
    let (sol, residual) = sys.solve_with_residual(&rhs);
    let scale = 1.0 + rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if residual <= 1e-9 * scale {
        Some(sol)
    } else {
        None
    }
}

/// Solves the KKT system restricted to the apparently-active constraints and
/// keeps the result only if it certifiably improves the residuals.
///
/// Degenerate complementarity is accepted as-is: an included row may come
/// back with a zero multiplier.
fn try_polish(problem: &QpProblem, current: &QpSolution, tol: f64) -> Option<QpSolution> {
    let n = problem.num_vars;
    let me = problem.num_eq();
    let mi = problem.num_in();
    let ax = problem.a_in.mul_vec(&current.x);
    let z_scale = 1.0 + inf_norm(&current.y_in);

    let mut candidate: Option<QpSolution> = None;
    // Successively wider classification cuts: degenerate rows approach the
    // face only as O(sqrt(mu)), so the tight cut can miss them.
    for slack_cut in [1e-7, 1e-5, 1e-3] {
        if candidate.as_ref().is_some_and(|c| c.residuals.worst() < 1e-11) {
            break;
        }
        let mut active: Vec<usize> = (0..mi)
            .filter(|&i| {
                let slack = problem.b_in[i] - ax[i];
                slack <= slack_cut * (1.0 + problem.b_in[i].abs())
                    || current.y_in[i] >= 1e-6 * z_scale
            })
            .collect();

        'attempts: for _attempt in 0..6 {
            let sol = match solve_face(problem, &active) {
                Some(sol) => sol,
                None => break 'attempts,
            };
            let zs: Vec<f64> = (0..active.len()).map(|k| sol[n + me + k]).collect();
            let x: Vec<f64> = (0..n).map(|i| sol[i]).collect();

            // Active-set refinement: drop rows with negative multipliers,
            // add rows the face solution violates.
            let neg: Vec<usize> = (0..active.len())
                .filter(|&k| zs[k] < -1e-9 * z_scale)
                .map(|k| active[k])
                .collect();
            let ax_face = problem.a_in.mul_vec(&x);
            let violated: Vec<usize> = (0..mi)
                .filter(|&r| {
                    !active.contains(&r)
                        && ax_face[r] - problem.b_in[r] > 1e-9 * (1.0 + problem.b_in[r].abs())
                })
                .collect();
            if !neg.is_empty() || !violated.is_empty() {
                active.retain(|r| !neg.contains(r));
                active.extend(&violated);
                active.sort_unstable();
                continue 'attempts;
            }

            let y_eq: Vec<f64> = (0..me).map(|i| sol[n + i]).collect();
            let mut y_in = vec![0.0; mi];
            for (k, &r) in active.iter().enumerate() {
                y_in[r] = zs[k];
            }
            let residuals = problem.residuals_at(&x, &y_eq, &y_in);
            let better = candidate
                .as_ref()
                .map_or(true, |c| residuals.worst() < c.residuals.worst());
            if better && (residuals.worst() <= current.residuals.worst() || residuals.within(tol * 0.5)) {
                candidate = Some(QpSolution {
                    objective: problem.objective(&x),
                    x,
                    y_eq,
                    y_in,
                    status: SolveStatus::Optimal,
                    residuals,
                });
            }
            break 'attempts;
        }
    }
    candidate
}

/// Solves the symmetric face system. Degenerate faces make it singular but
/// consistent, so factor a sign-regularized copy and refine against the true
/// matrix; the residual check rejects inconsistent (wrongly guessed) faces.
fn solve_face_system(
    m: &nalgebra::DMatrix<f64>,
    rhs: &nalgebra::DVector<f64>,
    n_primal: usize,
) -> Option<nalgebra::DVector<f64>> {
    let dim = m.nrows();
    let scale = m.amax();
    let delta = 1e-10 * (1.0 + scale.min(1e6));
    let mut m_reg = m.clone();
    for i in 0..dim {
        m_reg[(i, i)] += if i < n_primal { delta } else { -delta };
    }
    let lu = m_reg.lu();
    let mut sol = lu.solve(rhs)?;
    let tol = 1e-11 * (1.0 + rhs.amax());
    for _ in 0..8 {
        let r = rhs - m * &sol;
        if r.amax() <= tol {
            break;
        }
        sol += lu.solve(&r)?;
    }
    let res = (m * &sol - rhs).amax();
    if res <= 1e-9 * (1.0 + rhs.amax()) {
        Some(sol)
    } else {
        None
    }
}
