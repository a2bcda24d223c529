//! Domain types for the grid, loads, users, and problem instances.
//!
//! All types are immutable after construction and safe to share read-only
//! across parallel workers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Quadratic generation cost `C(g) = 1/2 * a * g^2 + b * g + c`.
///
/// Note the half: a curve written as `0.05 g^2 + 5 g + 100` is entered with
/// `a = 0.1`, `b = 5`, `c = 100`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCost {
    /// Cost curvature in $/MWh^2. Must be strictly positive.
    pub a: f64,
    /// Linear cost in $/MWh.
    pub b: f64,
    /// Fixed cost in $ per dispatch period.
    pub c: f64,
}

impl QuadraticCost {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    /// Evaluates `1/2 * a * g^2 + b * g + c`.
    pub fn eval(&self, g: f64) -> f64 {
        0.5 * self.a * g * g + self.b * g + self.c
    }

    /// Marginal cost `a * g + b`.
    pub fn marginal(&self, g: f64) -> f64 {
        self.a * g + self.b
    }
}

/// A bus. Buses without a cost function are pure-load buses whose generation
/// is fixed to zero by the dispatch builders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// 1-based bus id; ids must be unique and contiguous from 1 to N.
    pub id: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<QuadraticCost>,
}

/// A transmission line under the DC approximation. The capacity applies in
/// both directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Susceptance Y; flow on the line is `Y * (theta_from - theta_to)`.
    pub susceptance: f64,
    /// Directed flow limit in MW.
    pub fmax: f64,
}

/// A network dispatch instance: buses, lines, and per-bus hourly demand over
/// a horizon of `horizon` periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInstance {
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    /// `demand[n][t]` in MWh, one row per bus in bus order.
    pub demand: Vec<Vec<f64>>,
    pub horizon: usize,
}

/// A pool (copper-plate) dispatch instance: a single aggregate cost serving
/// total demand with no network constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolInstance {
    pub cost: QuadraticCost,
    /// `demand[t]` in MWh.
    pub demand: Vec<f64>,
    pub horizon: usize,
}

/// A user's hourly load at a bus.
#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub user_id: String,
    pub bus_id: usize,
    /// `load[t]` in MWh; non-negative with positive total.
    pub load: Vec<f64>,
}

impl UserProfile {
    /// L1 norm of the load vector.
    pub fn total_load(&self) -> f64 {
        self.load.iter().sum()
    }
}

/// A single validation finding. An empty report means the instance is valid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    NonContiguousBusIds,
    DuplicateBusId { id: usize },
    UnknownBusInLine { line: usize, bus: usize },
    SelfLoop { line: usize },
    DuplicateLine { from: usize, to: usize },
    NonPositiveSusceptance { line: usize },
    NonPositiveCapacity { line: usize },
    NonPositiveCurvature { bus: usize },
    Disconnected { unreachable_buses: Vec<usize> },
    DemandRowCountMismatch { expected: usize, found: usize },
    DemandColumnCountMismatch { bus: usize, expected: usize, found: usize },
    NegativeDemand { bus: usize, period: usize },
    ZeroHorizon,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NonContiguousBusIds => write!(f, "bus ids are not contiguous from 1 to N"),
            Violation::DuplicateBusId { id } => write!(f, "duplicate bus id {id}"),
            Violation::UnknownBusInLine { line, bus } => {
                write!(f, "line {line} references unknown bus {bus}")
            }
            Violation::SelfLoop { line } => write!(f, "line {line} connects a bus to itself"),
            Violation::DuplicateLine { from, to } => {
                write!(f, "duplicate line between buses {from} and {to}")
            }
            Violation::NonPositiveSusceptance { line } => {
                write!(f, "line {line} has non-positive susceptance")
            }
            Violation::NonPositiveCapacity { line } => {
                write!(f, "line {line} has non-positive capacity")
            }
            Violation::NonPositiveCurvature { bus } => {
                write!(f, "bus {bus} has non-positive cost curvature a")
            }
            Violation::Disconnected { unreachable_buses } => {
                write!(f, "graph is disconnected; unreachable buses: {unreachable_buses:?}")
            }
            Violation::DemandRowCountMismatch { expected, found } => {
                write!(f, "demand has {found} rows, expected {expected}")
            }
            Violation::DemandColumnCountMismatch { bus, expected, found } => {
                write!(f, "demand row for bus {bus} has {found} columns, expected {expected}")
            }
            Violation::NegativeDemand { bus, period } => {
                write!(f, "negative demand at bus {bus}, period {period}")
            }
            Violation::ZeroHorizon => write!(f, "horizon must be at least 1"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    /// The pool reduction requires exactly one generator bus.
    #[error("pool reduction requires a single generator bus, found {count}")]
    MultipleCosts { count: usize },
    #[error("pool reduction requires a generator bus, found none")]
    NoCost,
    #[error("invalid instance: {0}")]
    Invalid(String),
}

impl NetworkInstance {
    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn line_count(&self) -> usize {
        self.lines.len()
    }

    /// 0-based index of a bus id, assuming contiguous ids.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        if id >= 1 && id <= self.buses.len() {
            Some(id - 1)
        } else {
            None
        }
    }

    /// Buses with a cost function, as 0-based indices.
    pub fn generator_buses(&self) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.cost.is_some())
            .map(|(i, _)| i)
            .collect()
    }

    /// Pure-load buses (no cost function), as 0-based indices.
    pub fn load_buses(&self) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.cost.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    /// Total demand per period, `sum_n demand[n][t]`.
    pub fn total_demand(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.horizon];
        for row in &self.demand {
            for (t, d) in row.iter().enumerate().take(self.horizon) {
                out[t] += d;
            }
        }
        out
    }

    /// Time-averaged demand per bus, `(1/T) sum_t demand[n][t]`.
    pub fn mean_demand(&self) -> Vec<f64> {
        self.demand
            .iter()
            .map(|row| row.iter().sum::<f64>() / self.horizon as f64)
            .collect()
    }

    pub fn is_valid(&self) -> bool {
        validate_network(self).is_empty()
    }
}

impl PoolInstance {
    /// Mean demand over the horizon.
    pub fn mean_demand(&self) -> f64 {
        self.demand.iter().sum::<f64>() / self.horizon as f64
    }
}

/// Checks structural invariants of a network instance and returns every
/// violation found. An empty report means the instance is valid.
pub fn validate_network(instance: &NetworkInstance) -> Vec<Violation> {
    let mut report = Vec::new();
    let n = instance.buses.len();

    if instance.horizon == 0 {
        report.push(Violation::ZeroHorizon);
    }

    let mut seen = vec![false; n + 1];
    let mut contiguous = true;
    for bus in &instance.buses {
        if bus.id == 0 || bus.id > n {
            contiguous = false;
        } else if seen[bus.id] {
            report.push(Violation::DuplicateBusId { id: bus.id });
        } else {
            seen[bus.id] = true;
        }
        if let Some(cost) = &bus.cost {
            if cost.a <= 0.0 {
                report.push(Violation::NonPositiveCurvature { bus: bus.id });
            }
        }
    }
    if !contiguous || seen.iter().skip(1).any(|s| !s) {
        report.push(Violation::NonContiguousBusIds);
        return report; // bus indexing is unreliable past this point
    }

    let mut pairs = std::collections::HashSet::new();
    for (i, line) in instance.lines.iter().enumerate() {
        let mut endpoints_ok = true;
        for bus in [line.from, line.to] {
            if bus == 0 || bus > n {
                report.push(Violation::UnknownBusInLine { line: i, bus });
                endpoints_ok = false;
            }
        }
        if !endpoints_ok {
            continue;
        }
        if line.from == line.to {
            report.push(Violation::SelfLoop { line: i });
        }
        let key = (line.from.min(line.to), line.from.max(line.to));
        if !pairs.insert(key) {
            report.push(Violation::DuplicateLine { from: key.0, to: key.1 });
        }
        if line.susceptance <= 0.0 {
            report.push(Violation::NonPositiveSusceptance { line: i });
        }
        if line.fmax <= 0.0 {
            report.push(Violation::NonPositiveCapacity { line: i });
        }
    }

    // Connectivity by breadth-first search from bus 1.
    if n > 0 {
        let mut adj = vec![Vec::new(); n];
        for line in &instance.lines {
            if line.from >= 1 && line.from <= n && line.to >= 1 && line.to <= n {
                adj[line.from - 1].push(line.to - 1);
                adj[line.to - 1].push(line.from - 1);
            }
        }
        let mut reached = vec![false; n];
        let mut queue = std::collections::VecDeque::from([0usize]);
        reached[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !reached[w] {
                    reached[w] = true;
                    queue.push_back(w);
                }
            }
        }
        let unreachable: Vec<usize> =
            (0..n).filter(|&i| !reached[i]).map(|i| i + 1).collect();
        if !unreachable.is_empty() {
            report.push(Violation::Disconnected { unreachable_buses: unreachable });
        }
    }

    if instance.demand.len() != n {
        report.push(Violation::DemandRowCountMismatch {
            expected: n,
            found: instance.demand.len(),
        });
    }
    for (i, row) in instance.demand.iter().enumerate() {
        if row.len() != instance.horizon {
            report.push(Violation::DemandColumnCountMismatch {
                bus: i + 1,
                expected: instance.horizon,
                found: row.len(),
            });
        }
        for (t, &d) in row.iter().enumerate() {
            if d < 0.0 {
                report.push(Violation::NegativeDemand { bus: i + 1, period: t });
            }
        }
    }

    report
}

/// Collapses a network instance to the pool model: the single generator's
/// cost serving the summed demand, all network constraints dropped.
pub fn pool_of(instance: &NetworkInstance) -> Result<PoolInstance, ModelError> {
    let report = validate_network(instance);
    if !report.is_empty() {
        return Err(ModelError::Invalid(
            report.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "),
        ));
    }
    let gens = instance.generator_buses();
    let cost = match gens.len() {
        0 => return Err(ModelError::NoCost),
        1 => instance.buses[gens[0]].cost.unwrap(),
        count => return Err(ModelError::MultipleCosts { count }),
    };
    Ok(PoolInstance {
        cost,
        demand: instance.total_demand(),
        horizon: instance.horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_period_pool_network() -> NetworkInstance {
        // Single-bus instance carrying the classic two-period example:
        // d = (10, 20), C(g) = 1/2 g^2.
        NetworkInstance {
            buses: vec![Bus { id: 1, cost: Some(QuadraticCost::new(1.0, 0.0, 0.0)) }],
            lines: vec![],
            demand: vec![vec![10.0, 20.0]],
            horizon: 2,
        }
    }

    #[test]
    fn single_bus_no_lines_is_valid() {
        assert!(validate_network(&two_period_pool_network()).is_empty());
    }

    #[test]
    fn disconnected_buses_reported() {
        let inst = NetworkInstance {
            buses: vec![
                Bus { id: 1, cost: Some(QuadraticCost::new(1.0, 0.0, 0.0)) },
                Bus { id: 2, cost: None },
            ],
            lines: vec![],
            demand: vec![vec![1.0], vec![2.0]],
            horizon: 1,
        };
        let report = validate_network(&inst);
        assert_eq!(report.len(), 1);
        assert!(matches!(&report[0], Violation::Disconnected { unreachable_buses } if unreachable_buses == &vec![2]));
    }

    #[test]
    fn bad_lines_and_demand_reported() {
        let inst = NetworkInstance {
            buses: vec![
                Bus { id: 1, cost: Some(QuadraticCost::new(1.0, 0.0, 0.0)) },
                Bus { id: 2, cost: None },
            ],
            lines: vec![
                Line { from: 1, to: 2, susceptance: 1.0, fmax: 10.0 },
                Line { from: 2, to: 1, susceptance: 1.0, fmax: -1.0 },
                Line { from: 1, to: 1, susceptance: 0.0, fmax: 5.0 },
            ],
            demand: vec![vec![1.0], vec![-2.0]],
            horizon: 1,
        };
        let report = validate_network(&inst);
        assert!(report.contains(&Violation::DuplicateLine { from: 1, to: 2 }));
        assert!(report.contains(&Violation::NonPositiveCapacity { line: 1 }));
        assert!(report.contains(&Violation::SelfLoop { line: 2 }));
        assert!(report.contains(&Violation::NonPositiveSusceptance { line: 2 }));
        assert!(report.contains(&Violation::NegativeDemand { bus: 2, period: 0 }));
    }

    #[test]
    fn pool_of_sums_demand() {
        let inst = NetworkInstance {
            buses: vec![
                Bus { id: 1, cost: Some(QuadraticCost::new(2.0, 1.0, 0.0)) },
                Bus { id: 2, cost: None },
            ],
            lines: vec![Line { from: 1, to: 2, susceptance: 1.0, fmax: 10.0 }],
            demand: vec![vec![4.0], vec![6.0]],
            horizon: 1,
        };
        let pool = pool_of(&inst).unwrap();
        assert_eq!(pool.demand, vec![10.0]);
        assert_eq!(pool.cost, QuadraticCost::new(2.0, 1.0, 0.0));
    }

    #[test]
    fn pool_of_is_identity_on_pool_shaped_instance() {
        let pool = pool_of(&two_period_pool_network()).unwrap();
        assert_eq!(pool.demand, vec![10.0, 20.0]);
        assert_eq!(pool.horizon, 2);
    }

    #[test]
    fn pool_of_rejects_two_generators() {
        let inst = NetworkInstance {
            buses: vec![
                Bus { id: 1, cost: Some(QuadraticCost::new(1.0, 0.0, 0.0)) },
                Bus { id: 2, cost: Some(QuadraticCost::new(1.0, 0.0, 0.0)) },
            ],
            lines: vec![Line { from: 1, to: 2, susceptance: 1.0, fmax: 10.0 }],
            demand: vec![vec![1.0], vec![1.0]],
            horizon: 1,
        };
        assert!(matches!(pool_of(&inst), Err(ModelError::MultipleCosts { count: 2 })));
    }

    #[test]
    fn pool_of_preserves_total_energy() {
        let inst = NetworkInstance {
            buses: vec![
                Bus { id: 1, cost: Some(QuadraticCost::new(1.0, 0.0, 0.0)) },
                Bus { id: 2, cost: None },
                Bus { id: 3, cost: None },
            ],
            lines: vec![
                Line { from: 1, to: 2, susceptance: 1.0, fmax: 10.0 },
                Line { from: 2, to: 3, susceptance: 2.0, fmax: 10.0 },
            ],
            demand: vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![0.5, 0.25]],
            horizon: 2,
        };
        let pool = pool_of(&inst).unwrap();
        let total_pool: f64 = pool.demand.iter().sum();
        let total_net: f64 = inst.demand.iter().flatten().sum();
        assert!((total_pool - total_net).abs() < 1e-12);
    }
}
