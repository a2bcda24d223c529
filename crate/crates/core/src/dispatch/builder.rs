//! QP builders for the dispatch problems and the variable/row layouts shared
//! with dual extraction.

use crate::model::{validate_network, NetworkInstance, PoolInstance};
use crate::qp::{QpProblem, QpProblemBuilder};

use super::DispatchError;

/// Options shared by the network builders.
#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    /// Tikhonov weight on sited capacities (objective term `eps * sum e^2`);
    /// stabilizes non-unique sitings when positive. Off by default because it
    /// perturbs dual values.
    pub reg_eps: f64,
    /// 0-based reference bus whose angle is pinned to zero each period.
    /// Defaults to the lowest-indexed bus.
    pub reference_bus: Option<usize>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { reg_eps: 0.0, reference_bus: None }
    }
}

/// Column/row indexing of the multi-period network QP.
///
/// Variables are ordered `g, u, x, theta` (each bus-major, period-minor)
/// followed by the sited capacities `e`. Equality rows are ordered power
/// balance, SoC recursion, SoC terminal, reference angle, and fixed
/// generation at pure-load buses. Inequality rows are the two directed
/// capacity rows per line, SoC upper bounds, SoC lower bounds, and the
/// capacity budget last.
#[derive(Debug, Clone)]
pub struct NetworkLayout {
    pub n_buses: usize,
    pub horizon: usize,
    pub n_lines: usize,
    pub load_buses: Vec<usize>,
    pub reference_bus: usize,
}

impl NetworkLayout {
    pub fn new(instance: &NetworkInstance, opts: &BuildOptions) -> Self {
        Self {
            n_buses: instance.bus_count(),
            horizon: instance.horizon,
            n_lines: instance.line_count(),
            load_buses: instance.load_buses(),
            reference_bus: opts.reference_bus.unwrap_or(0),
        }
    }

    fn nt(&self) -> usize {
        self.n_buses * self.horizon
    }

    pub fn num_vars(&self) -> usize {
        4 * self.nt() + self.n_buses
    }

    pub fn g(&self, n: usize, t: usize) -> usize {
        n * self.horizon + t
    }

    pub fn u(&self, n: usize, t: usize) -> usize {
        self.nt() + n * self.horizon + t
    }

    pub fn x(&self, n: usize, t: usize) -> usize {
        2 * self.nt() + n * self.horizon + t
    }

    pub fn theta(&self, n: usize, t: usize) -> usize {
        3 * self.nt() + n * self.horizon + t
    }

    pub fn e(&self, n: usize) -> usize {
        4 * self.nt() + n
    }

    // Equality rows.
    pub fn row_balance(&self, n: usize, t: usize) -> usize {
        n * self.horizon + t
    }

    pub fn row_recursion(&self, n: usize, t: usize) -> usize {
        self.nt() + n * self.horizon + t
    }

    pub fn row_terminal(&self, n: usize) -> usize {
        2 * self.nt() + n
    }

    pub fn row_reference(&self, t: usize) -> usize {
        2 * self.nt() + self.n_buses + t
    }

    pub fn num_eq(&self) -> usize {
        2 * self.nt() + self.n_buses + self.horizon + self.load_buses.len() * self.horizon
    }

    // Inequality rows.
    pub fn row_line(&self, l: usize, reverse: bool, t: usize) -> usize {
        (2 * l + reverse as usize) * self.horizon + t
    }

    pub fn row_x_upper(&self, n: usize, t: usize) -> usize {
        2 * self.n_lines * self.horizon + n * self.horizon + t
    }

    pub fn row_x_lower(&self, n: usize, t: usize) -> usize {
        2 * self.n_lines * self.horizon + self.nt() + n * self.horizon + t
    }

    pub fn row_budget(&self) -> usize {
        2 * self.n_lines * self.horizon + 2 * self.nt()
    }

    pub fn num_in(&self) -> usize {
        2 * self.n_lines * self.horizon + 2 * self.nt() + 1
    }
}

fn checked_instance(instance: &NetworkInstance) -> Result<(), DispatchError> {
    let report = validate_network(instance);
    if !report.is_empty() {
        return Err(DispatchError::InvalidInstance {
            violations: report.iter().map(|v| v.to_string()).collect(),
        });
    }
    Ok(())
}

/// Builds the multi-period storage-augmented dispatch QP over a network.
///
/// The initial state of charge is substituted as `e/2` into the first
/// recursion row, the terminal state is pinned by an explicit equality, and
/// pure-load buses carry `g = 0` rows.
pub fn build_network_qp(
    instance: &NetworkInstance,
    e_total: f64,
    opts: &BuildOptions,
) -> Result<QpProblem, DispatchError> {
    checked_instance(instance)?;
    if !(e_total >= 0.0) {
        return Err(DispatchError::NegativeCapacity { e: e_total });
    }
    let layout = NetworkLayout::new(instance, opts);
    let n = layout.n_buses;
    let t_len = layout.horizon;
    if layout.reference_bus >= n {
        return Err(DispatchError::InvalidInstance {
            violations: vec![format!("reference bus index {} out of range", layout.reference_bus)],
        });
    }

    let mut b = QpProblemBuilder::new();
    for bus in &instance.buses {
        for t in 0..t_len {
            b.add_var(format!("g[b{}][t{}]", bus.id, t + 1));
        }
    }
    for bus in &instance.buses {
        for t in 0..t_len {
            b.add_var(format!("u[b{}][t{}]", bus.id, t + 1));
        }
    }
    for bus in &instance.buses {
        for t in 0..t_len {
            b.add_var(format!("x[b{}][t{}]", bus.id, t + 1));
        }
    }
    for bus in &instance.buses {
        for t in 0..t_len {
            b.add_var(format!("theta[b{}][t{}]", bus.id, t + 1));
        }
    }
    for bus in &instance.buses {
        b.add_var(format!("e[b{}]", bus.id));
    }
    debug_assert_eq!(b.num_vars(), layout.num_vars());

    for (i, bus) in instance.buses.iter().enumerate() {
        if let Some(cost) = &bus.cost {
            for t in 0..t_len {
                b.add_quadratic(layout.g(i, t), layout.g(i, t), cost.a);
                b.add_linear(layout.g(i, t), cost.b);
            }
        }
        if opts.reg_eps > 0.0 {
            b.add_quadratic(layout.e(i), layout.e(i), 2.0 * opts.reg_eps);
        }
    }

    // Power balance: g - u - sum of outflows = d.
    for i in 0..n {
        for t in 0..t_len {
            let mut coeffs = vec![(layout.g(i, t), 1.0), (layout.u(i, t), -1.0)];
            for line in &instance.lines {
                let (from, to) = (line.from - 1, line.to - 1);
                if from == i {
                    coeffs.push((layout.theta(from, t), -line.susceptance));
                    coeffs.push((layout.theta(to, t), line.susceptance));
                } else if to == i {
                    coeffs.push((layout.theta(to, t), -line.susceptance));
                    coeffs.push((layout.theta(from, t), line.susceptance));
                }
            }
            let row = b.add_eq_row(&coeffs, instance.demand[i][t]);
            debug_assert_eq!(row, layout.row_balance(i, t));
        }
    }
    // SoC recursion with x_0 = e/2 substituted into the first period.
    for i in 0..n {
        for t in 0..t_len {
            let row = if t == 0 {
                b.add_eq_row(
                    &[(layout.x(i, 0), 1.0), (layout.u(i, 0), -1.0), (layout.e(i), -0.5)],
                    0.0,
                )
            } else {
                b.add_eq_row(
                    &[(layout.x(i, t), 1.0), (layout.x(i, t - 1), -1.0), (layout.u(i, t), -1.0)],
                    0.0,
                )
            };
            debug_assert_eq!(row, layout.row_recursion(i, t));
        }
    }
    // Terminal state of charge.
    for i in 0..n {
        let row = b.add_eq_row(&[(layout.x(i, t_len - 1), 1.0), (layout.e(i), -0.5)], 0.0);
        debug_assert_eq!(row, layout.row_terminal(i));
    }
    // Reference angle.
    for t in 0..t_len {
        let row = b.add_eq_row(&[(layout.theta(layout.reference_bus, t), 1.0)], 0.0);
        debug_assert_eq!(row, layout.row_reference(t));
    }
    // Pure-load buses generate nothing.
    for &i in &layout.load_buses {
        for t in 0..t_len {
            b.add_eq_row(&[(layout.g(i, t), 1.0)], 0.0);
        }
    }

    // Directed line capacities.
    for (l, line) in instance.lines.iter().enumerate() {
        let (from, to) = (line.from - 1, line.to - 1);
        for reverse in [false, true] {
            let (a, z) = if reverse { (to, from) } else { (from, to) };
            for t in 0..t_len {
                let row = b.add_in_row(
                    &[
                        (layout.theta(a, t), line.susceptance),
                        (layout.theta(z, t), -line.susceptance),
                    ],
                    line.fmax,
                );
                debug_assert_eq!(row, layout.row_line(l, reverse, t));
            }
        }
    }
    // State-of-charge bounds 0 <= x <= e.
    for i in 0..n {
        for t in 0..t_len {
            let row = b.add_in_row(&[(layout.x(i, t), 1.0), (layout.e(i), -1.0)], 0.0);
            debug_assert_eq!(row, layout.row_x_upper(i, t));
        }
    }
    for i in 0..n {
        for t in 0..t_len {
            let row = b.add_in_row(&[(layout.x(i, t), -1.0)], 0.0);
            debug_assert_eq!(row, layout.row_x_lower(i, t));
        }
    }
    // Total capacity budget.
    let coeffs: Vec<(usize, f64)> = (0..n).map(|i| (layout.e(i), 1.0)).collect();
    let row = b.add_in_row(&coeffs, e_total);
    debug_assert_eq!(row, layout.row_budget());

    Ok(b.build())
}

/// Column/row indexing of the pool QP (single aggregate bus, capacity `E`
/// enters the constraint data rather than as a variable).
#[derive(Debug, Clone)]
pub struct PoolLayout {
    pub horizon: usize,
}

impl PoolLayout {
    pub fn new(pool: &PoolInstance) -> Self {
        Self { horizon: pool.horizon }
    }

    pub fn num_vars(&self) -> usize {
        3 * self.horizon
    }

    pub fn g(&self, t: usize) -> usize {
        t
    }

    pub fn u(&self, t: usize) -> usize {
        self.horizon + t
    }

    pub fn x(&self, t: usize) -> usize {
        2 * self.horizon + t
    }

    pub fn row_balance(&self, t: usize) -> usize {
        t
    }

    pub fn row_recursion(&self, t: usize) -> usize {
        self.horizon + t
    }

    pub fn row_terminal(&self) -> usize {
        2 * self.horizon
    }

    pub fn row_x_upper(&self, t: usize) -> usize {
        t
    }

    pub fn row_x_lower(&self, t: usize) -> usize {
        self.horizon + t
    }
}

/// Builds the pool dispatch QP.
pub fn build_pool_qp(pool: &PoolInstance, e_total: f64) -> Result<QpProblem, DispatchError> {
    if !(e_total >= 0.0) {
        return Err(DispatchError::NegativeCapacity { e: e_total });
    }
    if pool.horizon == 0 || pool.demand.len() != pool.horizon {
        return Err(DispatchError::InvalidInstance {
            violations: vec!["pool demand length must equal horizon".into()],
        });
    }
    let layout = PoolLayout::new(pool);
    let t_len = layout.horizon;
    let mut b = QpProblemBuilder::new();
    for t in 0..t_len {
        b.add_var(format!("g[t{}]", t + 1));
    }
    for t in 0..t_len {
        b.add_var(format!("u[t{}]", t + 1));
    }
    for t in 0..t_len {
        b.add_var(format!("x[t{}]", t + 1));
    }
    for t in 0..t_len {
        b.add_quadratic(layout.g(t), layout.g(t), pool.cost.a);
        b.add_linear(layout.g(t), pool.cost.b);
    }
    for t in 0..t_len {
        let row = b.add_eq_row(&[(layout.g(t), 1.0), (layout.u(t), -1.0)], pool.demand[t]);
        debug_assert_eq!(row, layout.row_balance(t));
    }
    for t in 0..t_len {
        let row = if t == 0 {
            b.add_eq_row(&[(layout.x(0), 1.0), (layout.u(0), -1.0)], e_total / 2.0)
        } else {
            b.add_eq_row(&[(layout.x(t), 1.0), (layout.x(t - 1), -1.0), (layout.u(t), -1.0)], 0.0)
        };
        debug_assert_eq!(row, layout.row_recursion(t));
    }
    let row = b.add_eq_row(&[(layout.x(t_len - 1), 1.0)], e_total / 2.0);
    debug_assert_eq!(row, layout.row_terminal());
    for t in 0..t_len {
        let row = b.add_in_row(&[(layout.x(t), 1.0)], e_total);
        debug_assert_eq!(row, layout.row_x_upper(t));
    }
    for t in 0..t_len {
        let row = b.add_in_row(&[(layout.x(t), -1.0)], 0.0);
        debug_assert_eq!(row, layout.row_x_lower(t));
    }
    Ok(b.build())
}

/// Column/row indexing of the single-period time-averaged problem.
#[derive(Debug, Clone)]
pub struct AveragedLayout {
    pub n_buses: usize,
    pub n_lines: usize,
    pub load_buses: Vec<usize>,
    pub reference_bus: usize,
}

impl AveragedLayout {
    pub fn g(&self, n: usize) -> usize {
        n
    }

    pub fn theta(&self, n: usize) -> usize {
        self.n_buses + n
    }

    pub fn row_balance(&self, n: usize) -> usize {
        n
    }

    pub fn row_line(&self, l: usize, reverse: bool) -> usize {
        2 * l + reverse as usize
    }
}

/// Builds the single-period dispatch of the time-averaged demand; the limit
/// problem of the capacity sweep.
pub fn build_p3_qp(
    instance: &NetworkInstance,
    opts: &BuildOptions,
) -> Result<(QpProblem, AveragedLayout), DispatchError> {
    checked_instance(instance)?;
    let layout = AveragedLayout {
        n_buses: instance.bus_count(),
        n_lines: instance.line_count(),
        load_buses: instance.load_buses(),
        reference_bus: opts.reference_bus.unwrap_or(0),
    };
    let n = layout.n_buses;
    let mean = instance.mean_demand();

    let mut b = QpProblemBuilder::new();
    for bus in &instance.buses {
        b.add_var(format!("g[b{}]", bus.id));
    }
    for bus in &instance.buses {
        b.add_var(format!("theta[b{}]", bus.id));
    }
    for (i, bus) in instance.buses.iter().enumerate() {
        if let Some(cost) = &bus.cost {
            b.add_quadratic(layout.g(i), layout.g(i), cost.a);
            b.add_linear(layout.g(i), cost.b);
        }
    }
    for i in 0..n {
        let mut coeffs = vec![(layout.g(i), 1.0)];
        for line in &instance.lines {
            let (from, to) = (line.from - 1, line.to - 1);
            if from == i {
                coeffs.push((layout.theta(from), -line.susceptance));
                coeffs.push((layout.theta(to), line.susceptance));
            } else if to == i {
                coeffs.push((layout.theta(to), -line.susceptance));
                coeffs.push((layout.theta(from), line.susceptance));
            }
        }
        let row = b.add_eq_row(&coeffs, mean[i]);
        debug_assert_eq!(row, layout.row_balance(i));
    }
    b.add_eq_row(&[(layout.theta(layout.reference_bus), 1.0)], 0.0);
    for &i in &layout.load_buses {
        b.add_eq_row(&[(layout.g(i), 1.0)], 0.0);
    }
    for (l, line) in instance.lines.iter().enumerate() {
        let (from, to) = (line.from - 1, line.to - 1);
        for reverse in [false, true] {
            let (a, z) = if reverse { (to, from) } else { (from, to) };
            let row = b.add_in_row(
                &[(layout.theta(a), line.susceptance), (layout.theta(z), -line.susceptance)],
                line.fmax,
            );
            debug_assert_eq!(row, layout.row_line(l, reverse));
        }
    }
    Ok((b.build(), layout))
}

/// Objective constant excluded from the QP: fixed costs of generator buses
/// over the horizon.
pub fn network_objective_constant(instance: &NetworkInstance) -> f64 {
    instance.horizon as f64
        * instance
            .buses
            .iter()
            .filter_map(|b| b.cost.as_ref())
            .map(|c| c.c)
            .sum::<f64>()
}

pub fn pool_objective_constant(pool: &PoolInstance) -> f64 {
    pool.horizon as f64 * pool.cost.c
}
