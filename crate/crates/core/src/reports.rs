//! CSV emission and parsing of result tables.
//!
//! Every writer has a matching reader so emitted files round-trip through
//! the documented schema. Floats are printed with nine significant digits,
//! keeping outputs deterministic across runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dispatch::{DispatchSolution, MciRecord, PriceSchedule};
use crate::parametric::SweepResult;
use crate::profiling::{Cluster, GroupDynamics, Representative, TrajectorySet};

use crate::cases::CaseError;

/// Nine significant digits, scientific notation.
pub fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRow {
    pub bus: usize,
    pub t: usize,
    pub g: f64,
    pub u: f64,
    pub x: f64,
    pub p: f64,
    pub clmp: f64,
    pub vlmp: f64,
}

/// Per-bus-per-hour solution table.
pub fn write_solution_csv(
    path: &Path,
    solution: &DispatchSolution,
    prices: &PriceSchedule,
) -> Result<(), CaseError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bus", "t", "g", "u", "x", "p", "clmp", "vlmp"])?;
    for bus in 0..solution.n_buses {
        for t in 0..solution.horizon {
            w.write_record(&[
                (bus + 1).to_string(),
                (t + 1).to_string(),
                sig9(solution.generation[bus][t]),
                sig9(solution.storage_action[bus][t]),
                sig9(solution.state_of_charge[bus][t]),
                sig9(prices.p[bus][t]),
                sig9(prices.clmp[bus][t]),
                sig9(prices.vlmp[bus][t]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_solution_csv(path: &Path) -> Result<Vec<SolutionRow>, CaseError> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummaryRow {
    pub e: f64,
    pub cost: f64,
    pub rho: f64,
    pub marginal: f64,
    pub ubmci: f64,
    pub lbmci: f64,
}

/// One summary row per capacity point.
pub fn write_sweep_summary(path: &Path, sweep: &SweepResult) -> Result<(), CaseError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["e", "cost", "rho", "marginal", "ubmci", "lbmci"])?;
    for i in 0..sweep.grid.len() {
        w.write_record(&[
            sig9(sweep.grid[i]),
            sig9(sweep.cost[i]),
            sig9(sweep.rho[i]),
            sig9(sweep.marginal[i]),
            sig9(sweep.bounds_global[i].0),
            sig9(sweep.bounds_global[i].1),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_summary(path: &Path) -> Result<Vec<SweepSummaryRow>, CaseError> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepDetailRow {
    pub e: f64,
    pub bus: usize,
    pub t: usize,
    pub g: f64,
    pub u: f64,
    pub p: f64,
}

/// One detail row per (capacity, bus, hour).
pub fn write_sweep_detail(path: &Path, sweep: &SweepResult) -> Result<(), CaseError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["e", "bus", "t", "g", "u", "p"])?;
    for i in 0..sweep.grid.len() {
        for bus in 0..sweep.n_buses {
            for t in 0..sweep.horizon {
                w.write_record(&[
                    sig9(sweep.grid[i]),
                    (bus + 1).to_string(),
                    (t + 1).to_string(),
                    sig9(sweep.generation[i][bus][t]),
                    sig9(sweep.storage_action[i][bus][t]),
                    sig9(sweep.prices[i].p[bus][t]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_detail(path: &Path) -> Result<Vec<SweepDetailRow>, CaseError> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SitingRow {
    pub e: f64,
    pub bus: usize,
    pub capacity: f64,
}

/// Sited capacity per (capacity point, bus).
pub fn write_sweep_siting(path: &Path, sweep: &SweepResult) -> Result<(), CaseError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["e", "bus", "capacity"])?;
    for i in 0..sweep.grid.len() {
        for bus in 0..sweep.n_buses {
            w.write_record(&[
                sig9(sweep.grid[i]),
                (bus + 1).to_string(),
                sig9(sweep.siting[i][bus]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_siting(path: &Path) -> Result<Vec<SitingRow>, CaseError> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MciRow {
    pub user_id: String,
    pub bus_id: usize,
    pub mci: f64,
    pub cmci: f64,
    pub vmci: f64,
}

pub fn write_mci_csv(path: &Path, records: &[MciRecord]) -> Result<(), CaseError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["user_id", "bus_id", "mci", "cmci", "vmci"])?;
    for r in records {
        w.write_record(&[
            r.user_id.clone(),
            r.bus_id.to_string(),
            sig9(r.mci),
            sig9(r.cmci),
            sig9(r.vmci),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_mci_csv(path: &Path) -> Result<Vec<MciRow>, CaseError> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRow {
    pub user_id: String,
    pub cluster: usize,
}

/// Cluster assignments of a profile clustering.
pub fn write_assignments(path: &Path, clusters: &[Cluster]) -> Result<(), CaseError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["user_id", "cluster"])?;
    for c in clusters {
        for id in &c.member_ids {
            w.write_record(&[id.clone(), c.label.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_assignments(path: &Path) -> Result<Vec<AssignmentRow>, CaseError> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRow {
    pub e: f64,
    pub user_id: String,
    pub cluster: usize,
    pub lo: f64,
    pub hi: f64,
}

/// Per-capacity-point greedy clustering assignments with cluster intervals.
pub fn write_group_dynamics(path: &Path, dynamics: &GroupDynamics) -> Result<(), CaseError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["e", "user_id", "cluster", "lo", "hi"])?;
    for (i, clusters) in dynamics.clusterings.iter().enumerate() {
        for c in clusters {
            let (lo, hi) = match c.representative {
                Representative::Interval { lo, hi } => (lo, hi),
                Representative::Centroid(_) => (f64::NAN, f64::NAN),
            };
            for id in &c.member_ids {
                w.write_record(&[
                    sig9(dynamics.grid[i]),
                    id.clone(),
                    c.label.to_string(),
                    sig9(lo),
                    sig9(hi),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_group_dynamics(path: &Path) -> Result<Vec<DynamicsRow>, CaseError> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRow {
    pub e_from: f64,
    pub e_to: f64,
    pub cluster_from: usize,
    pub cluster_to: usize,
    pub shared: usize,
}

/// Cluster flow map between adjacent capacity points.
pub fn write_cluster_flows(path: &Path, dynamics: &GroupDynamics) -> Result<(), CaseError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["e_from", "e_to", "cluster_from", "cluster_to", "shared"])?;
    for &(i, from, to, shared) in &dynamics.flows {
        w.write_record(&[
            sig9(dynamics.grid[i]),
            sig9(dynamics.grid[i + 1]),
            from.to_string(),
            to.to_string(),
            shared.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cluster_flows(path: &Path) -> Result<Vec<FlowRow>, CaseError> {
    read_rows(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub cluster: usize,
    pub bus: usize,
    pub e: f64,
    pub mci: f64,
    pub cmci: f64,
    pub vmci: f64,
}

/// Per-cluster MCI curves over the sweep grid.
pub fn write_trajectories(path: &Path, set: &TrajectorySet) -> Result<(), CaseError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["cluster", "bus", "e", "mci", "cmci", "vmci"])?;
    for entry in &set.entries {
        for (i, e) in set.grid.iter().enumerate() {
            w.write_record(&[
                entry.cluster.to_string(),
                entry.bus_id.to_string(),
                sig9(*e),
                sig9(entry.mci[i]),
                sig9(entry.cmci),
                sig9(entry.vmci[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectories(path: &Path) -> Result<Vec<TrajectoryRow>, CaseError> {
    read_rows(path)
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, CaseError> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        rows.push(record?);
    }
    Ok(rows)
}
