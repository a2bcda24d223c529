//! Parametric analysis over total storage capacity: sweeps the capacity
//! budget, assembles the cost/price/bound curves, and numerically verifies
//! their structural properties (monotonicity, convexity, bound behavior,
//! equal marginal value of storage, convergence to the time-averaged
//! dispatch).

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dispatch::{
    build_p3_qp, compute_prices, mci_bounds, solve_dispatch, Baseline, BoundScope, BuildOptions,
    DispatchCase, DispatchConfig, DispatchError, DispatchSolution, MciBounds, ModelKind,
    PriceSchedule,
};
use crate::qp;

#[derive(Debug, Error)]
pub enum ParametricError {
    #[error("bad sweep grid: {0}")]
    BadGrid(String),
    #[error("sweep point {index} (E = {e}) failed: {source}")]
    Point { index: usize, e: f64, source: DispatchError },
    #[error("check applies to {expected} sweeps only")]
    WrongModel { expected: &'static str },
    #[error("prices have not converged on this grid (worst deviation {worst_deviation:.3e} > {tol:.3e})")]
    NotReached { worst_deviation: f64, tol: f64 },
    #[error("generation at bus {bus} still varies over time ({variation:.3e} > {tol:.3e})")]
    NotConverged { bus: usize, variation: f64, tol: f64 },
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
}

/// Per-capacity-point curves assembled by [`sweep`].
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub model: ModelKind,
    pub n_buses: usize,
    pub horizon: usize,
    /// Strictly increasing capacity grid.
    pub grid: Vec<f64>,
    /// Minimal cost per grid point.
    pub cost: Vec<f64>,
    pub prices: Vec<PriceSchedule>,
    /// Global (ubmci, lbmci) per point.
    pub bounds_global: Vec<(f64, f64)>,
    pub bounds_per_bus: Vec<MciBounds>,
    /// Sited capacity per bus per point.
    pub siting: Vec<Vec<f64>>,
    /// Marginal value of capacity (budget dual) per point.
    pub rho: Vec<f64>,
    /// Discrete `-dC*/dE` (central differences, one-sided at the ends).
    pub marginal: Vec<f64>,
    pub generation: Vec<Vec<Vec<f64>>>,
    pub storage_action: Vec<Vec<Vec<f64>>>,
    /// Per-bus price targets of the large-capacity limit.
    pub targets: Vec<f64>,
}

impl SweepResult {
    pub fn point_index_of(&self, e: f64) -> Option<usize> {
        self.grid.iter().position(|&g| (g - e).abs() <= 1e-9 * (1.0 + e.abs()))
    }
}

/// Sweep execution knobs.
#[derive(Debug, Clone, Copy, Default)]
pub struct SweepConfig {
    pub dispatch: DispatchConfig,
    /// Worker threads for the grid; `None` uses the process default.
    pub jobs: Option<usize>,
}

/// Default capacity grid: 51 uniform points from 0 to twice the spread of
/// total demand, which brackets the convergence threshold for the bundled
/// cases.
pub fn default_grid(case: &DispatchCase) -> Vec<f64> {
    let totals: Vec<f64> = match case {
        DispatchCase::Network(i) => i.total_demand(),
        DispatchCase::Pool(p) => p.demand.clone(),
    };
    let max = totals.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let min = totals.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let span = if (max - min) > 0.0 { 2.0 * (max - min) } else { 1.0 };
    let points = 51;
    (0..points).map(|i| span * i as f64 / (points - 1) as f64).collect()
}

fn validate_grid(grid: &[f64]) -> Result<(), ParametricError> {
    if grid.is_empty() {
        return Err(ParametricError::BadGrid("grid is empty".into()));
    }
    if grid[0] < 0.0 {
        return Err(ParametricError::BadGrid("grid values must be non-negative".into()));
    }
    for w in grid.windows(2) {
        if w[1] <= w[0] {
            return Err(ParametricError::BadGrid(format!(
                "grid must be strictly increasing, got {} after {}",
                w[1], w[0]
            )));
        }
    }
    Ok(())
}

/// Solves the dispatch at every grid point and assembles the parametric
/// curves. Points run in parallel; output order follows the grid.
pub fn sweep(
    case: DispatchCase,
    grid: &[f64],
    cfg: &SweepConfig,
) -> Result<SweepResult, ParametricError> {
    validate_grid(grid)?;
    let targets = convergence_target(case, &cfg.dispatch)?;

    // The zero-storage baseline prices the deviation components (and the
    // pure-load buses in a network).
    let zero_solution = solve_dispatch(case, 0.0, &cfg.dispatch)
        .map_err(|source| ParametricError::Point { index: 0, e: 0.0, source })?;
    let baseline = match case.kind() {
        ModelKind::Network => Some(Baseline::from_zero_storage(&zero_solution)?),
        ModelKind::Pool => None,
    };

    let solve_point = |i: usize| -> Result<(DispatchSolution, PriceSchedule), ParametricError> {
        let e = grid[i];
        let solution = if e == 0.0 {
            zero_solution.clone()
        } else {
            solve_dispatch(case, e, &cfg.dispatch)
                .map_err(|source| ParametricError::Point { index: i, e, source })?
        };
        let prices = compute_prices(&solution, &case, baseline.as_ref())
            .map_err(|source| ParametricError::Point { index: i, e, source })?;
        Ok((solution, prices))
    };

    let run = || -> Result<Vec<_>, ParametricError> {
        (0..grid.len()).into_par_iter().map(solve_point).collect()
    };
    let points = match cfg.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| ParametricError::BadGrid(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }?;

    let mut cost = Vec::with_capacity(points.len());
    let mut prices = Vec::with_capacity(points.len());
    let mut bounds_global = Vec::with_capacity(points.len());
    let mut bounds_per_bus = Vec::with_capacity(points.len());
    let mut siting = Vec::with_capacity(points.len());
    let mut rho = Vec::with_capacity(points.len());
    let mut generation = Vec::with_capacity(points.len());
    let mut storage_action = Vec::with_capacity(points.len());
    for (solution, schedule) in points {
        cost.push(solution.objective);
        let g = mci_bounds(&schedule, BoundScope::Global);
        bounds_global.push((g.ubmci[0], g.lbmci[0]));
        bounds_per_bus.push(mci_bounds(&schedule, BoundScope::PerBus));
        prices.push(schedule);
        siting.push(solution.siting.clone());
        rho.push(solution.duals.rho);
        generation.push(solution.generation.clone());
        storage_action.push(solution.storage_action.clone());
    }
    let marginal = discrete_marginal(grid, &cost);

    Ok(SweepResult {
        model: case.kind(),
        n_buses: case.bus_count(),
        horizon: case.horizon(),
        grid: grid.to_vec(),
        cost,
        prices,
        bounds_global,
        bounds_per_bus,
        siting,
        rho,
        marginal,
        generation,
        storage_action,
        targets,
    })
}

/// `-dC*/dE` by central differences, one-sided at the grid ends.
fn discrete_marginal(grid: &[f64], cost: &[f64]) -> Vec<f64> {
    let n = grid.len();
    if n < 2 {
        return vec![0.0; n];
    }
    (0..n)
        .map(|i| {
            let (lo, hi) = if i == 0 {
                (0, 1)
            } else if i == n - 1 {
                (n - 2, n - 1)
            } else {
                (i - 1, i + 1)
            };
            -(cost[hi] - cost[lo]) / (grid[hi] - grid[lo])
        })
        .collect()
}

/// Monotonicity/convexity report on the cost curve.
#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub monotone_pass: bool,
    pub convex_pass: bool,
    /// Largest cost increase along the grid (should be <= tol).
    pub worst_increase: f64,
    /// Most negative second difference (should be >= -tol).
    pub worst_concavity: f64,
    /// Index of the first monotonicity violation, if any.
    pub first_violation: Option<usize>,
    pub tol: f64,
}

impl ConvexityReport {
    pub fn passed(&self) -> bool {
        self.monotone_pass && self.convex_pass
    }
}

pub fn check_convexity(sweep: &SweepResult, tol: f64) -> ConvexityReport {
    check_convexity_curve(&sweep.grid, &sweep.cost, tol)
}

/// Checks non-increase and convexity of samples of a curve. With fewer than
/// three points the convexity clause is vacuous.
pub fn check_convexity_curve(grid: &[f64], cost: &[f64], tol: f64) -> ConvexityReport {
    let mut worst_increase = f64::NEG_INFINITY;
    let mut first_violation = None;
    for i in 0..cost.len().saturating_sub(1) {
        let inc = cost[i + 1] - cost[i];
        if inc > worst_increase {
            worst_increase = inc;
        }
        if inc > tol && first_violation.is_none() {
            first_violation = Some(i + 1);
        }
    }
    if !worst_increase.is_finite() {
        worst_increase = 0.0;
    }

    let mut worst_concavity = f64::INFINITY;
    for i in 1..cost.len().saturating_sub(1) {
        // Slope-based second difference handles non-uniform grids; on a
        // uniform grid it reduces to the plain second difference.
        let h0 = grid[i] - grid[i - 1];
        let h1 = grid[i + 1] - grid[i];
        let s0 = (cost[i] - cost[i - 1]) / h0;
        let s1 = (cost[i + 1] - cost[i]) / h1;
        let second = (s1 - s0) * 0.5 * (h0 + h1);
        if second < worst_concavity {
            worst_concavity = second;
        }
    }
    if !worst_concavity.is_finite() {
        worst_concavity = 0.0;
    }

    ConvexityReport {
        monotone_pass: worst_increase <= tol,
        convex_pass: worst_concavity >= -tol,
        worst_increase,
        worst_concavity,
        first_violation,
        tol,
    }
}

/// Bound-curve monotonicity report for pool sweeps.
#[derive(Debug, Clone, Serialize)]
pub struct BoundMonotonicityReport {
    pub ub_non_increasing: bool,
    pub lb_non_decreasing: bool,
    pub worst_ub_increase: f64,
    pub worst_lb_decrease: f64,
    pub tol: f64,
}

impl BoundMonotonicityReport {
    pub fn passed(&self) -> bool {
        self.ub_non_increasing && self.lb_non_decreasing
    }
}

/// Verifies that the attainable MCI bounds tighten monotonically along a pool
/// sweep. Network sweeps are rejected: congestion makes the bounds
/// non-monotone there, which is observed rather than asserted.
pub fn check_bound_monotonicity(
    sweep: &SweepResult,
    tol: f64,
) -> Result<BoundMonotonicityReport, ParametricError> {
    if sweep.model != ModelKind::Pool {
        return Err(ParametricError::WrongModel { expected: "pool" });
    }
    let mut worst_ub_increase = 0.0f64;
    let mut worst_lb_decrease = 0.0f64;
    for w in sweep.bounds_global.windows(2) {
        worst_ub_increase = worst_ub_increase.max(w[1].0 - w[0].0);
        worst_lb_decrease = worst_lb_decrease.max(w[0].1 - w[1].1);
    }
    Ok(BoundMonotonicityReport {
        ub_non_increasing: worst_ub_increase <= tol,
        lb_non_decreasing: worst_lb_decrease <= tol,
        worst_ub_increase,
        worst_lb_decrease,
        tol,
    })
}

/// Per-bus price targets of the large-capacity limit: the marginal cost of
/// the time-averaged dispatch. Pool targets are the single value
/// `a * mean(d) + b`; network targets come from the single-period
/// time-averaged problem (pure-load buses use its balance dual).
pub fn convergence_target(
    case: DispatchCase,
    cfg: &DispatchConfig,
) -> Result<Vec<f64>, ParametricError> {
    match case {
        DispatchCase::Pool(pool) => Ok(vec![pool.cost.marginal(pool.mean_demand())]),
        DispatchCase::Network(instance) => {
            let opts = BuildOptions { reg_eps: 0.0, reference_bus: cfg.reference_bus };
            let (problem, layout) = build_p3_qp(instance, &opts)?;
            let solve_opts = qp::SolveOptions { tol: cfg.tol, max_iter: cfg.max_iter };
            let sol = qp::solve(&problem, &solve_opts).map_err(DispatchError::from_qp)?;
            let targets = instance
                .buses
                .iter()
                .enumerate()
                .map(|(i, bus)| match &bus.cost {
                    Some(cost) => cost.marginal(sol.x[layout.g(i)]),
                    None => -sol.y_eq[layout.row_balance(i)],
                })
                .collect();
            Ok(targets)
        }
    }
}

/// Convergence detection along a sweep.
#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    /// Smallest grid capacity from which prices stay within `tol` of the
    /// targets.
    pub e_con: f64,
    pub index: usize,
    /// Worst price deviation from the targets per grid point.
    pub deviations: Vec<f64>,
    pub tol: f64,
}

/// Finds the smallest grid capacity at which every price sits within `tol`
/// of its target and stays there for all larger capacities.
pub fn detect_convergence(
    sweep: &SweepResult,
    tol: f64,
) -> Result<ConvergenceReport, ParametricError> {
    let deviations: Vec<f64> = sweep
        .prices
        .iter()
        .map(|schedule| {
            let mut worst = 0.0f64;
            for (n, row) in schedule.p.iter().enumerate() {
                for p in row {
                    worst = worst.max((p - sweep.targets[n]).abs());
                }
            }
            worst
        })
        .collect();
    let mut start = None;
    for i in (0..deviations.len()).rev() {
        if deviations[i] <= tol {
            start = Some(i);
        } else {
            break;
        }
    }
    match start {
        Some(index) => Ok(ConvergenceReport {
            e_con: sweep.grid[index],
            index,
            deviations,
            tol,
        }),
        None => Err(ParametricError::NotReached {
            worst_deviation: *deviations.last().unwrap_or(&f64::INFINITY),
            tol,
        }),
    }
}

/// Equal-marginal-value report: the per-bus dual sums against the budget
/// multiplier, and the budget multiplier against the discrete cost slope.
#[derive(Debug, Clone, Serialize)]
pub struct EqualMarginalReport {
    pub rho: f64,
    pub rho_nonnegative: bool,
    /// `sum_t lambda + phi0/2 + phiT/2` per bus.
    pub per_bus_sums: Vec<f64>,
    /// Worst `|per-bus sum - rho|`.
    pub max_deviation: f64,
    /// Discrete `-dC*/dE` at the matching grid point, where the curve is
    /// locally smooth.
    pub slope: Option<f64>,
    pub slope_relative_error: Option<f64>,
    pub tol: f64,
}

impl EqualMarginalReport {
    pub fn passed(&self) -> bool {
        self.rho_nonnegative
            && self.max_deviation <= self.tol
            && self.slope_relative_error.map_or(true, |e| e <= 0.05)
    }
}

/// Verifies that the marginal value of storage is equal across buses and
/// matches the cost curve's slope where the discrete curve is smooth.
pub fn check_equal_marginal_value(
    solution: &DispatchSolution,
    sweep: &SweepResult,
    tol: f64,
) -> EqualMarginalReport {
    let rho = solution.duals.rho;
    let per_bus_sums: Vec<f64> = (0..solution.n_buses)
        .map(|n| {
            solution.duals.lambda[n].iter().sum::<f64>()
                + 0.5 * solution.duals.phi0[n]
                + 0.5 * solution.duals.phi_t[n]
        })
        .collect();
    let max_deviation = per_bus_sums.iter().fold(0.0f64, |m, s| m.max((s - rho).abs()));

    let mut slope = None;
    let mut slope_relative_error = None;
    if let Some(i) = sweep.point_index_of(solution.e_total) {
        if i > 0 && i + 1 < sweep.grid.len() {
            let d1 = (sweep.cost[i + 1] - sweep.cost[i - 1]) / 2.0;
            let d2 = sweep.cost[i + 1] - 2.0 * sweep.cost[i] + sweep.cost[i - 1];
            // Smooth: curvature step small against the cost level, with a
            // guard against slope kinks hiding inside a large level.
            let smooth =
                d2.abs() <= 0.01 * sweep.cost[i].abs().max(1e-9) && d2.abs() <= 0.25 * d1.abs();
            if smooth {
                let s =
                    -(sweep.cost[i + 1] - sweep.cost[i - 1]) / (sweep.grid[i + 1] - sweep.grid[i - 1]);
                slope = Some(s);
                slope_relative_error = Some((rho - s).abs() / s.abs().max(1e-9));
            }
        }
    }

    EqualMarginalReport {
        rho,
        rho_nonnegative: rho >= -1e-8,
        per_bus_sums,
        max_deviation,
        slope,
        slope_relative_error,
        tol,
    }
}

/// Large-capacity equivalence report between the multi-period dispatch and
/// the time-averaged single-period dispatch.
#[derive(Debug, Clone, Serialize)]
pub struct P3EquivalenceReport {
    /// Worst per-bus spread of generation over time at the large capacity.
    pub max_time_variation: f64,
    /// Worst deviation between the time-constant generation and the
    /// time-averaged problem's solution.
    pub max_generation_deviation: f64,
    pub p1_objective: f64,
    /// `T x` the time-averaged problem's objective.
    pub p3_objective_scaled: f64,
    pub relative_gap: f64,
    pub tol: f64,
}

impl P3EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.max_time_variation <= self.tol
            && self.max_generation_deviation <= self.tol
            && self.relative_gap <= 1e-6
    }
}

/// Solves the dispatch at a capacity beyond the convergence threshold and
/// checks it against the independently solved time-averaged problem.
pub fn verify_p3_equivalence(
    instance: &crate::model::NetworkInstance,
    e_large: f64,
    cfg: &DispatchConfig,
    tol: f64,
) -> Result<P3EquivalenceReport, ParametricError> {
    let sol = solve_dispatch(DispatchCase::Network(instance), e_large, cfg)?;
    let spread = |row: &Vec<f64>| {
        row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
            - row.iter().fold(f64::INFINITY, |m, v| m.min(*v))
    };
    let mut max_time_variation = 0.0f64;
    for row in &sol.generation {
        max_time_variation = max_time_variation.max(spread(row));
    }
    if max_time_variation > tol {
        let bus = sol
            .generation
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| spread(a).total_cmp(&spread(b)))
            .map(|(i, _)| i + 1)
            .unwrap_or(0);
        return Err(ParametricError::NotConverged { bus, variation: max_time_variation, tol });
    }

    let opts = BuildOptions { reg_eps: 0.0, reference_bus: cfg.reference_bus };
    let (p3, layout) = build_p3_qp(instance, &opts)?;
    let solve_opts = qp::SolveOptions { tol: cfg.tol, max_iter: cfg.max_iter };
    let p3_sol = qp::solve(&p3, &solve_opts).map_err(DispatchError::from_qp)?;

    let mut max_generation_deviation = 0.0f64;
    for i in 0..instance.bus_count() {
        let mean = sol.generation[i].iter().sum::<f64>() / instance.horizon as f64;
        max_generation_deviation =
            max_generation_deviation.max((mean - p3_sol.x[layout.g(i)]).abs());
    }
    let constants: f64 =
        instance.buses.iter().filter_map(|b| b.cost.as_ref()).map(|c| c.c).sum();
    let p3_objective_scaled = instance.horizon as f64 * (p3_sol.objective + constants);
    let relative_gap =
        (sol.objective - p3_objective_scaled).abs() / p3_objective_scaled.abs().max(1.0);

    Ok(P3EquivalenceReport {
        max_time_variation,
        max_generation_deviation,
        p1_objective: sol.objective,
        p3_objective_scaled,
        relative_gap,
        tol,
    })
}

/// Jensen floor report for pool sweeps: `C*(E) >= T * C(mean demand)` with
/// equality in the large-capacity limit.
#[derive(Debug, Clone, Serialize)]
pub struct JensenReport {
    pub floor: f64,
    /// Most negative `cost - floor` over the grid.
    pub worst_gap: f64,
    /// `cost - floor` at the largest grid capacity.
    pub gap_at_max_e: f64,
    pub tol: f64,
}

impl JensenReport {
    pub fn passed(&self) -> bool {
        self.worst_gap >= -self.tol
    }
}

pub fn check_jensen_floor(
    sweep: &SweepResult,
    pool: &crate::model::PoolInstance,
    tol: f64,
) -> Result<JensenReport, ParametricError> {
    if sweep.model != ModelKind::Pool {
        return Err(ParametricError::WrongModel { expected: "pool" });
    }
    let floor = pool.horizon as f64 * pool.cost.eval(pool.mean_demand());
    let worst_gap = sweep.cost.iter().map(|c| c - floor).fold(f64::INFINITY, f64::min);
    let gap_at_max_e = sweep.cost.last().map(|c| c - floor).unwrap_or(0.0);
    Ok(JensenReport { floor, worst_gap, gap_at_max_e, tol })
}
