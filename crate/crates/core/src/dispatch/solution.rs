//! Dispatch solving and the mapping from QP primal/dual vectors back to
//! named dispatch quantities.

use serde::Serialize;

use crate::model::{NetworkInstance, PoolInstance};
use crate::qp::{self, KktResiduals, SolveOptions};

use super::builder::{
    build_network_qp, build_pool_qp, network_objective_constant, pool_objective_constant,
    BuildOptions, NetworkLayout, PoolLayout,
};
use super::DispatchError;

/// Which dispatch formulation produced a solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ModelKind {
    Pool,
    Network,
}

/// The dispatch problem to solve: a network instance or its pool reduction.
#[derive(Debug, Clone, Copy)]
pub enum DispatchCase<'a> {
    Network(&'a NetworkInstance),
    Pool(&'a PoolInstance),
}

impl<'a> DispatchCase<'a> {
    pub fn kind(&self) -> ModelKind {
        match self {
            DispatchCase::Network(_) => ModelKind::Network,
            DispatchCase::Pool(_) => ModelKind::Pool,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            DispatchCase::Network(i) => i.horizon,
            DispatchCase::Pool(p) => p.horizon,
        }
    }

    pub fn bus_count(&self) -> usize {
        match self {
            DispatchCase::Network(i) => i.bus_count(),
            DispatchCase::Pool(_) => 1,
        }
    }

    /// Demand matrix view: pool demand becomes a single row.
    pub fn demand(&self, n: usize, t: usize) -> f64 {
        match self {
            DispatchCase::Network(i) => i.demand[n][t],
            DispatchCase::Pool(p) => p.demand[t],
        }
    }

    /// Cost curvature and linear term of bus `n`, if it has a generator.
    pub fn cost(&self, n: usize) -> Option<crate::model::QuadraticCost> {
        match self {
            DispatchCase::Network(i) => i.buses[n].cost,
            DispatchCase::Pool(p) => {
                if n == 0 {
                    Some(p.cost)
                } else {
                    None
                }
            }
        }
    }
}

/// Solver and builder knobs for a dispatch solve.
#[derive(Debug, Clone, Copy)]
pub struct DispatchConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub reg_eps: f64,
    pub reference_bus: Option<usize>,
}

impl Default for DispatchConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100, reg_eps: 0.0, reference_bus: None }
    }
}

impl DispatchConfig {
    fn build_options(&self) -> BuildOptions {
        BuildOptions { reg_eps: self.reg_eps, reference_bus: self.reference_bus }
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions { tol: self.tol, max_iter: self.max_iter }
    }
}

/// Multipliers of the dispatch constraints, in the sign convention of the
/// solver's Lagrangian (multipliers added onto the cost).
#[derive(Debug, Clone, Serialize)]
pub struct DualValues {
    /// Power-balance multipliers; the price is `-nu`.
    pub nu: Vec<Vec<f64>>,
    /// Directed line-capacity multipliers, forward orientation (from -> to).
    pub pi_fwd: Vec<Vec<f64>>,
    /// Directed line-capacity multipliers, reverse orientation.
    pub pi_rev: Vec<Vec<f64>>,
    /// SoC recursion multipliers, all periods (the first period's row carries
    /// the substituted initial state).
    pub xi: Vec<Vec<f64>>,
    /// SoC upper-bound multipliers (x <= e).
    pub lambda: Vec<Vec<f64>>,
    /// SoC lower-bound multipliers (-x <= 0).
    pub mu: Vec<Vec<f64>>,
    /// Initial-state multipliers, recovered as the first recursion multiplier.
    pub phi0: Vec<f64>,
    /// Terminal-state multipliers.
    pub phi_t: Vec<f64>,
    /// Capacity-budget multiplier; the marginal value of total storage.
    pub rho: f64,
}

/// Optimal dispatch with all named primal and dual quantities.
#[derive(Debug, Clone, Serialize)]
pub struct DispatchSolution {
    pub model: ModelKind,
    pub n_buses: usize,
    pub horizon: usize,
    /// Total capacity parameter the problem was solved at.
    pub e_total: f64,
    /// Minimal generation cost, including fixed cost constants.
    pub objective: f64,
    pub generation: Vec<Vec<f64>>,
    /// Storage action, positive when charging.
    pub storage_action: Vec<Vec<f64>>,
    pub state_of_charge: Vec<Vec<f64>>,
    /// Phase angles; empty for the pool model.
    pub theta: Vec<Vec<f64>>,
    /// Directed flow per line (from -> to); empty for the pool model.
    pub flow: Vec<Vec<f64>>,
    /// Net outflow per bus; zero in the pool model.
    pub netflow: Vec<Vec<f64>>,
    /// Sited capacity per bus; `[E]` for the pool model.
    pub siting: Vec<f64>,
    pub duals: DualValues,
    pub residuals: KktResiduals,
}

impl DispatchSolution {
    /// Locational marginal price `p[n][t] = -nu[n][t]`, the sensitivity of
    /// the minimal cost to demand at bus `n` and period `t`.
    pub fn prices(&self) -> Vec<Vec<f64>> {
        self.duals
            .nu
            .iter()
            .map(|row| row.iter().map(|v| -v).collect())
            .collect()
    }

    /// Writes the full primal/dual solution as JSON.
    pub fn write_json(&self, path: &std::path::Path) -> std::io::Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }
}

/// Solves the dispatch problem at total storage capacity `e_total`.
pub fn solve_dispatch(
    case: DispatchCase,
    e_total: f64,
    cfg: &DispatchConfig,
) -> Result<DispatchSolution, DispatchError> {
    match case {
        DispatchCase::Network(instance) => solve_network(instance, e_total, cfg),
        DispatchCase::Pool(pool) => solve_pool(pool, e_total, cfg),
    }
}

fn solve_network(
    instance: &NetworkInstance,
    e_total: f64,
    cfg: &DispatchConfig,
) -> Result<DispatchSolution, DispatchError> {
    let problem = build_network_qp(instance, e_total, &cfg.build_options())?;
    let sol = qp::solve(&problem, &cfg.solve_options()).map_err(DispatchError::from_qp)?;
    let layout = NetworkLayout::new(instance, &cfg.build_options());
    let n = layout.n_buses;
    let t_len = layout.horizon;

    let grid2 = |f: &dyn Fn(usize, usize) -> usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| (0..t_len).map(|t| sol.x[f(i, t)]).collect())
            .collect()
    };
    let generation = grid2(&|i, t| layout.g(i, t));
    let storage_action = grid2(&|i, t| layout.u(i, t));
    let state_of_charge = grid2(&|i, t| layout.x(i, t));
    let theta = grid2(&|i, t| layout.theta(i, t));
    let siting: Vec<f64> = (0..n).map(|i| sol.x[layout.e(i)]).collect();

    let mut flow = Vec::with_capacity(instance.lines.len());
    let mut netflow = vec![vec![0.0; t_len]; n];
    for line in &instance.lines {
        let (from, to) = (line.from - 1, line.to - 1);
        let mut row = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let f = line.susceptance * (theta[from][t] - theta[to][t]);
            row.push(f);
            netflow[from][t] += f;
            netflow[to][t] -= f;
        }
        flow.push(row);
    }

    let dual2 = |f: &dyn Fn(usize, usize) -> usize, from_eq: bool| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                (0..t_len)
                    .map(|t| if from_eq { sol.y_eq[f(i, t)] } else { sol.y_in[f(i, t)] })
                    .collect()
            })
            .collect()
    };
    let nu = dual2(&|i, t| layout.row_balance(i, t), true);
    let xi = dual2(&|i, t| layout.row_recursion(i, t), true);
    let lambda = dual2(&|i, t| layout.row_x_upper(i, t), false);
    let mu = dual2(&|i, t| layout.row_x_lower(i, t), false);
    let phi0: Vec<f64> = xi.iter().map(|row| row[0]).collect();
    let phi_t: Vec<f64> = (0..n).map(|i| sol.y_eq[layout.row_terminal(i)]).collect();
    let pi_fwd: Vec<Vec<f64>> = (0..layout.n_lines)
        .map(|l| (0..t_len).map(|t| sol.y_in[layout.row_line(l, false, t)]).collect())
        .collect();
    let pi_rev: Vec<Vec<f64>> = (0..layout.n_lines)
        .map(|l| (0..t_len).map(|t| sol.y_in[layout.row_line(l, true, t)]).collect())
        .collect();
    let rho = sol.y_in[layout.row_budget()];

    // The reported objective is the generation cost alone: fixed costs are
    // added back and the siting regularizer (a solver stabilizer) removed.
    let reg_term: f64 = cfg.reg_eps * siting.iter().map(|e| e * e).sum::<f64>();

    Ok(DispatchSolution {
        model: ModelKind::Network,
        n_buses: n,
        horizon: t_len,
        e_total,
        objective: sol.objective + network_objective_constant(instance) - reg_term,
        generation,
        storage_action,
        state_of_charge,
        theta,
        flow,
        netflow,
        siting,
        duals: DualValues { nu, pi_fwd, pi_rev, xi, lambda, mu, phi0, phi_t, rho },
        residuals: sol.residuals,
    })
}

fn solve_pool(
    pool: &PoolInstance,
    e_total: f64,
    cfg: &DispatchConfig,
) -> Result<DispatchSolution, DispatchError> {
    let problem = build_pool_qp(pool, e_total)?;
    let sol = qp::solve(&problem, &cfg.solve_options()).map_err(DispatchError::from_qp)?;
    let layout = PoolLayout::new(pool);
    let t_len = layout.horizon;

    let generation: Vec<f64> = (0..t_len).map(|t| sol.x[layout.g(t)]).collect();
    let storage_action: Vec<f64> = (0..t_len).map(|t| sol.x[layout.u(t)]).collect();
    let state_of_charge: Vec<f64> = (0..t_len).map(|t| sol.x[layout.x(t)]).collect();

    let nu: Vec<f64> = (0..t_len).map(|t| sol.y_eq[layout.row_balance(t)]).collect();
    let xi: Vec<f64> = (0..t_len).map(|t| sol.y_eq[layout.row_recursion(t)]).collect();
    let lambda: Vec<f64> = (0..t_len).map(|t| sol.y_in[layout.row_x_upper(t)]).collect();
    let mu: Vec<f64> = (0..t_len).map(|t| sol.y_in[layout.row_x_lower(t)]).collect();
    let phi0 = xi[0];
    let phi_t = sol.y_eq[layout.row_terminal()];

    // The pool has no budget row; the marginal value of capacity comes from
    // the rows whose right-hand sides carry E: the SoC upper bounds (E), the
    // substituted initial state (E/2), and the terminal state (E/2), giving
    // rho = sum_t lambda_t + phi0/2 + phiT/2 = -dC*/dE.
    let rho = lambda.iter().sum::<f64>() + 0.5 * phi0 + 0.5 * phi_t;

    Ok(DispatchSolution {
        model: ModelKind::Pool,
        n_buses: 1,
        horizon: t_len,
        e_total,
        objective: sol.objective + pool_objective_constant(pool),
        generation: vec![generation],
        storage_action: vec![storage_action],
        state_of_charge: vec![state_of_charge],
        theta: Vec::new(),
        flow: Vec::new(),
        netflow: vec![vec![0.0; t_len]],
        siting: vec![e_total],
        duals: DualValues {
            nu: vec![nu],
            pi_fwd: Vec::new(),
            pi_rev: Vec::new(),
            xi: vec![xi],
            lambda: vec![lambda],
            mu: vec![mu],
            phi0: vec![phi0],
            phi_t: vec![phi_t],
            rho,
        },
        residuals: sol.residuals,
    })
}
