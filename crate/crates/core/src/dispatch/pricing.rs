//! Locational marginal prices and per-user marginal system cost impact from
//! the dual solution.
//!
//! At a generator bus the price decomposes exactly as
//! `p = (a d + b) + a (u + F)`: a part invariant in the storage capacity and
//! a part that moves with it. Buses without a generator take their
//! storage-invariant part from the zero-storage price schedule instead, so
//! the decomposition `p = clmp + vlmp` holds at every bus.

use serde::Serialize;

use crate::model::UserProfile;

use super::solution::{DispatchCase, DispatchSolution, ModelKind};
use super::DispatchError;

/// Zero-storage reference quantities used for the decomposition: net outflow
/// and prices from the same instance solved at `E = 0`.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub netflow: Vec<Vec<f64>>,
    pub prices: Vec<Vec<f64>>,
}

impl Baseline {
    /// Captures the baseline from a zero-storage solve.
    pub fn from_zero_storage(solution: &DispatchSolution) -> Result<Self, DispatchError> {
        if solution.e_total.abs() > 1e-12 {
            return Err(DispatchError::BaselineNotZeroStorage { e: solution.e_total });
        }
        Ok(Self { netflow: solution.netflow.clone(), prices: solution.prices() })
    }
}

/// Hourly price schedule with the storage-invariant/storage-dependent split
/// and the temporal/spatial decomposition of the deviation from the
/// conventional prices.
#[derive(Debug, Clone, Serialize)]
pub struct PriceSchedule {
    pub n_buses: usize,
    pub horizon: usize,
    /// Locational marginal price `p[n][t]`.
    pub p: Vec<Vec<f64>>,
    /// Storage-invariant component.
    pub clmp: Vec<Vec<f64>>,
    /// Storage-dependent remainder, `p - clmp`.
    pub vlmp: Vec<Vec<f64>>,
    /// `a_n u[n][t]` at generator buses; zero where no generator exists.
    pub temporal: Vec<Vec<f64>>,
    /// `a_n (F(E) - F(0))` at generator buses; `vlmp` at pure-load buses.
    pub spatial: Vec<Vec<f64>>,
}

/// Computes the price schedule of an optimal dispatch.
///
/// Network instances need the zero-storage [`Baseline`] of the same instance
/// for the spatial split and for pricing pure-load buses; the pool model has
/// no flows and needs none.
pub fn compute_prices(
    solution: &DispatchSolution,
    case: &DispatchCase,
    baseline: Option<&Baseline>,
) -> Result<PriceSchedule, DispatchError> {
    let n = solution.n_buses;
    let t_len = solution.horizon;
    let p = solution.prices();
    let mut clmp = vec![vec![0.0; t_len]; n];
    let mut vlmp = vec![vec![0.0; t_len]; n];
    let mut temporal = vec![vec![0.0; t_len]; n];
    let mut spatial = vec![vec![0.0; t_len]; n];

    let baseline = match (solution.model, baseline) {
        (ModelKind::Pool, _) => None,
        (ModelKind::Network, Some(b)) => {
            if b.netflow.len() != n || b.prices.len() != n {
                return Err(DispatchError::BaselineShapeMismatch);
            }
            Some(b)
        }
        (ModelKind::Network, None) => return Err(DispatchError::MissingBaseline),
    };

    for i in 0..n {
        match case.cost(i) {
            Some(cost) => {
                for t in 0..t_len {
                    let d = case.demand(i, t);
                    let u = solution.storage_action[i][t];
                    let f = solution.netflow[i][t];
                    clmp[i][t] = cost.a * d + cost.b;
                    vlmp[i][t] = cost.a * (u + f);
                    temporal[i][t] = cost.a * u;
                    spatial[i][t] = match baseline {
                        Some(b) => cost.a * (f - b.netflow[i][t]),
                        None => 0.0,
                    };
                }
            }
            None => {
                // Pure-load bus: no local marginal generator, so the
                // storage-invariant part is the conventional (E = 0) price
                // and the whole deviation is a network effect.
                let b = baseline.expect("network baseline checked above");
                for t in 0..t_len {
                    clmp[i][t] = b.prices[i][t];
                    vlmp[i][t] = p[i][t] - b.prices[i][t];
                    spatial[i][t] = vlmp[i][t];
                }
            }
        }
    }
    Ok(PriceSchedule { n_buses: n, horizon: t_len, p, clmp, vlmp, temporal, spatial })
}

/// Per-user marginal system cost impact: the load-weighted average of hourly
/// prices at the user's bus, split into the storage-invariant part and the
/// remainder.
#[derive(Debug, Clone, Serialize)]
pub struct MciRecord {
    pub user_id: String,
    pub bus_id: usize,
    pub mci: f64,
    pub cmci: f64,
    pub vmci: f64,
}

/// Computes a user's MCI from a price schedule.
pub fn compute_mci(prices: &PriceSchedule, user: &UserProfile) -> Result<MciRecord, DispatchError> {
    if user.bus_id == 0 || user.bus_id > prices.n_buses {
        return Err(DispatchError::UnknownBus { user: user.user_id.clone(), bus: user.bus_id });
    }
    if user.load.len() != prices.horizon {
        return Err(DispatchError::LoadLengthMismatch {
            user: user.user_id.clone(),
            expected: prices.horizon,
            found: user.load.len(),
        });
    }
    let total = user.total_load();
    if total <= 0.0 {
        return Err(DispatchError::ZeroLoad { user: user.user_id.clone() });
    }
    let bus = user.bus_id - 1;
    let mut mci = 0.0;
    let mut cmci = 0.0;
    for t in 0..prices.horizon {
        let w = user.load[t] / total;
        mci += prices.p[bus][t] * w;
        cmci += prices.clmp[bus][t] * w;
    }
    Ok(MciRecord { user_id: user.user_id.clone(), bus_id: user.bus_id, mci, cmci, vmci: mci - cmci })
}

/// Scope of the attainable MCI bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundScope {
    /// Extremes over all buses and periods.
    Global,
    /// Extremes per bus over periods.
    PerBus,
}

/// Tight bounds on any user's MCI: the extreme hourly prices, attained by
/// single-slot load profiles.
#[derive(Debug, Clone, Serialize)]
pub struct MciBounds {
    /// One entry for [`BoundScope::Global`], one per bus for
    /// [`BoundScope::PerBus`].
    pub ubmci: Vec<f64>,
    pub lbmci: Vec<f64>,
}

pub fn mci_bounds(prices: &PriceSchedule, scope: BoundScope) -> MciBounds {
    let per_bus: Vec<(f64, f64)> = prices
        .p
        .iter()
        .map(|row| {
            let ub = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
            let lb = row.iter().fold(f64::INFINITY, |m, v| m.min(*v));
            (ub, lb)
        })
        .collect();
    match scope {
        BoundScope::Global => {
            let ub = per_bus.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.0));
            let lb = per_bus.iter().fold(f64::INFINITY, |m, v| m.min(v.1));
            MciBounds { ubmci: vec![ub], lbmci: vec![lb] }
        }
        BoundScope::PerBus => MciBounds {
            ubmci: per_bus.iter().map(|v| v.0).collect(),
            lbmci: per_bus.iter().map(|v| v.1).collect(),
        },
    }
}
