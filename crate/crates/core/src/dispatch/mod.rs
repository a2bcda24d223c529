//! Dispatch problem construction, solving, and price/MCI extraction.

mod builder;
mod pricing;
mod solution;

pub use builder::{
    build_network_qp, build_p3_qp, build_pool_qp, network_objective_constant,
    pool_objective_constant, AveragedLayout, BuildOptions, NetworkLayout, PoolLayout,
};
pub use pricing::{
    compute_mci, compute_prices, mci_bounds, Baseline, BoundScope, MciBounds, MciRecord,
    PriceSchedule,
};
pub use solution::{
    solve_dispatch, DispatchCase, DispatchConfig, DispatchSolution, DualValues, ModelKind,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("invalid instance: {}", violations.join("; "))]
    InvalidInstance { violations: Vec<String> },
    #[error("total storage capacity must be non-negative, got {e}")]
    NegativeCapacity { e: f64 },
    #[error("dispatch problem is infeasible")]
    Infeasible,
    #[error("solver failed: {0}")]
    Solver(crate::qp::QpError),
    #[error("price decomposition over a network needs the zero-storage baseline")]
    MissingBaseline,
    #[error("baseline must come from a zero-storage solve, got E = {e}")]
    BaselineNotZeroStorage { e: f64 },
    #[error("baseline shape does not match the solution")]
    BaselineShapeMismatch,
    #[error("user {user} has zero total load")]
    ZeroLoad { user: String },
    #[error("user {user} references unknown bus {bus}")]
    UnknownBus { user: String, bus: usize },
    #[error("user {user} has {found} load entries, expected {expected}")]
    LoadLengthMismatch { user: String, expected: usize, found: usize },
}

impl DispatchError {
    pub(crate) fn from_qp(err: crate::qp::QpError) -> Self {
        match err {
            crate::qp::QpError::Infeasible => DispatchError::Infeasible,
            other => DispatchError::Solver(other),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bus, Line, NetworkInstance, PoolInstance, QuadraticCost, UserProfile};
    use crate::qp;
    use approx::assert_abs_diff_eq;

    pub(crate) fn two_period_pool() -> PoolInstance {
        PoolInstance {
            cost: QuadraticCost::new(1.0, 0.0, 0.0),
            demand: vec![10.0, 20.0],
            horizon: 2,
        }
    }

    fn cfg() -> DispatchConfig {
        DispatchConfig::default()
    }

    fn solve_pool_at(e: f64) -> DispatchSolution {
        solve_dispatch(DispatchCase::Pool(&two_period_pool()), e, &cfg()).unwrap()
    }

    #[test]
    fn pool_no_storage_golden() {
        let sol = solve_pool_at(0.0);
        assert_abs_diff_eq!(sol.objective, 250.0, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.generation[0][0], 10.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.generation[0][1], 20.0, epsilon = 1e-6);
        let p = sol.prices();
        assert_abs_diff_eq!(p[0][0], 10.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p[0][1], 20.0, epsilon = 1e-6);
        assert!(sol.residuals.within(1e-8));
    }

    #[test]
    fn pool_with_storage_golden() {
        let sol = solve_pool_at(10.0);
        assert_abs_diff_eq!(sol.objective, 225.0, epsilon = 1e-7);
        assert_abs_diff_eq!(sol.generation[0][0], 15.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.generation[0][1], 15.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.storage_action[0][0], 5.0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.storage_action[0][1], -5.0, epsilon = 1e-6);
        let p = sol.prices();
        assert_abs_diff_eq!(p[0][0], 15.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p[0][1], 15.0, epsilon = 1e-6);
    }

    #[test]
    fn pool_half_capacity_matches_enumeration_oracle() {
        // At E = 5 feasibility caps |u| at 2.5, so g = (12.5, 17.5).
        let sol = solve_pool_at(5.0);
        assert_abs_diff_eq!(sol.generation[0][0], 12.5, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.generation[0][1], 17.5, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.objective, 231.25, epsilon = 1e-7);
        let problem = build_pool_qp(&two_period_pool(), 5.0).unwrap();
        let oracle = qp::active_set_oracle(&problem).unwrap();
        assert_abs_diff_eq!(sol.objective, oracle.objective, epsilon = 1e-7);
        // Marginal value of capacity at E=5 is (10 - E)/2 = 2.5.
        assert_abs_diff_eq!(sol.duals.rho, 2.5, epsilon = 1e-6);
    }

    #[test]
    fn flat_demand_leaves_storage_idle() {
        let pool = PoolInstance {
            cost: QuadraticCost::new(2.0, 1.0, 3.0),
            demand: vec![7.0; 4],
            horizon: 4,
        };
        let sol = solve_dispatch(DispatchCase::Pool(&pool), 50.0, &cfg()).unwrap();
        for t in 0..4 {
            assert_abs_diff_eq!(sol.storage_action[0][t], 0.0, epsilon = 1e-6);
            assert_abs_diff_eq!(sol.generation[0][t], 7.0, epsilon = 1e-6);
        }
    }

    pub(crate) fn three_bus_instance() -> NetworkInstance {
        // Two generators, one pure-load bus, unit susceptances, capacities
        // 80/130/150 MW, 24-hour demand with a two-hour evening peak at the
        // load bus.
        let mut demand3 = vec![0.0; 24];
        for (t, d) in demand3.iter_mut().enumerate() {
            *d = match t {
                0..=6 => 100.0,
                17 | 18 => 240.0,
                _ => 110.0,
            };
        }
        NetworkInstance {
            buses: vec![
                Bus { id: 1, cost: Some(QuadraticCost::new(0.1, 5.0, 100.0)) },
                Bus { id: 2, cost: Some(QuadraticCost::new(0.06, 10.0, 120.0)) },
                Bus { id: 3, cost: None },
            ],
            lines: vec![
                Line { from: 1, to: 2, susceptance: 1.0, fmax: 80.0 },
                Line { from: 1, to: 3, susceptance: 1.0, fmax: 130.0 },
                Line { from: 2, to: 3, susceptance: 1.0, fmax: 150.0 },
            ],
            demand: vec![vec![20.0; 24], vec![45.0; 24], demand3],
            horizon: 24,
        }
    }

    #[test]
    fn network_qp_has_documented_shape() {
        let instance = three_bus_instance();
        let problem = build_network_qp(&instance, 50.0, &BuildOptions::default()).unwrap();
        // g, u, x, theta over 3 buses x 24 periods plus 3 sited capacities.
        assert_eq!(problem.num_vars, 3 * 24 * 3 + 3 * 24 + 3);
        assert_eq!(problem.num_vars, 291);
        let layout = NetworkLayout::new(&instance, &BuildOptions::default());
        assert_eq!(problem.num_eq(), layout.num_eq());
        assert_eq!(problem.num_in(), layout.num_in());
        assert_eq!(problem.num_in(), 2 * 3 * 24 + 2 * 3 * 24 + 1);
    }

    #[test]
    fn network_dispatch_balances_power() {
        let instance = three_bus_instance();
        let sol = solve_dispatch(DispatchCase::Network(&instance), 60.0, &cfg()).unwrap();
        for i in 0..3 {
            for t in 0..24 {
                let imbalance = sol.generation[i][t]
                    - sol.storage_action[i][t]
                    - instance.demand[i][t]
                    - sol.netflow[i][t];
                assert!(imbalance.abs() < 1e-7, "imbalance {imbalance} at bus {i}, t {t}");
                assert!(sol.state_of_charge[i][t] >= -1e-7);
                assert!(sol.state_of_charge[i][t] <= sol.siting[i] + 1e-7);
            }
            // No pure arbitrage: storage actions sum to zero.
            let net: f64 = sol.storage_action[i].iter().sum();
            assert!(net.abs() < 1e-7);
        }
        let sited: f64 = sol.siting.iter().sum();
        assert!(sited <= 60.0 + 1e-7);
        assert!(sol.duals.rho >= -1e-8);
        // Load bus generates nothing.
        for t in 0..24 {
            assert_abs_diff_eq!(sol.generation[2][t], 0.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn generator_bus_price_identity() {
        let instance = three_bus_instance();
        let sol = solve_dispatch(DispatchCase::Network(&instance), 40.0, &cfg()).unwrap();
        let p = sol.prices();
        for (i, bus) in instance.buses.iter().enumerate() {
            if let Some(cost) = &bus.cost {
                for t in 0..24 {
                    assert!(
                        (p[i][t] - cost.marginal(sol.generation[i][t])).abs() < 1e-6,
                        "price identity violated at bus {i}, t {t}"
                    );
                }
            }
        }
    }

    #[test]
    fn flow_antisymmetry_from_theta() {
        let instance = three_bus_instance();
        let sol = solve_dispatch(DispatchCase::Network(&instance), 25.0, &cfg()).unwrap();
        for (l, line) in instance.lines.iter().enumerate() {
            for t in 0..24 {
                let fwd = line.susceptance * (sol.theta[line.from - 1][t] - sol.theta[line.to - 1][t]);
                let rev = line.susceptance * (sol.theta[line.to - 1][t] - sol.theta[line.from - 1][t]);
                assert_abs_diff_eq!(fwd, -rev, epsilon = 1e-12);
                assert_abs_diff_eq!(fwd, sol.flow[l][t], epsilon = 1e-9);
                assert!(fwd.abs() <= line.fmax + 1e-6);
            }
        }
    }

    #[test]
    fn prices_invariant_under_reference_bus_choice() {
        let instance = three_bus_instance();
        let mut prices = Vec::new();
        for reference in 0..3 {
            let cfg = DispatchConfig { reference_bus: Some(reference), ..Default::default() };
            let sol = solve_dispatch(DispatchCase::Network(&instance), 30.0, &cfg).unwrap();
            prices.push(sol.prices());
        }
        for r in 1..3 {
            for i in 0..3 {
                for t in 0..24 {
                    assert!(
                        (prices[0][i][t] - prices[r][i][t]).abs() < 1e-8,
                        "price changed with reference bus at ({i},{t})"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_capacity_matches_storage_free_dispatch() {
        // Independent route: a per-period OPF without storage variables.
        let instance = three_bus_instance();
        let sol = solve_dispatch(DispatchCase::Network(&instance), 0.0, &cfg()).unwrap();

        let mut direct = network_objective_constant(&instance);
        for t in 0..24 {
            let mut b = crate::qp::QpProblemBuilder::new();
            let gs: Vec<usize> = (0..3).map(|i| b.add_var(format!("g{i}"))).collect();
            let ths: Vec<usize> = (0..3).map(|i| b.add_var(format!("th{i}"))).collect();
            for (i, bus) in instance.buses.iter().enumerate() {
                if let Some(c) = &bus.cost {
                    b.add_quadratic(gs[i], gs[i], c.a);
                    b.add_linear(gs[i], c.b);
                }
            }
            for i in 0..3 {
                let mut coeffs = vec![(gs[i], 1.0)];
                for line in &instance.lines {
                    let (from, to) = (line.from - 1, line.to - 1);
                    if from == i {
                        coeffs.push((ths[from], -line.susceptance));
                        coeffs.push((ths[to], line.susceptance));
                    } else if to == i {
                        coeffs.push((ths[to], -line.susceptance));
                        coeffs.push((ths[from], line.susceptance));
                    }
                }
                b.add_eq_row(&coeffs, instance.demand[i][t]);
            }
            b.add_eq_row(&[(ths[0], 1.0)], 0.0);
            b.add_eq_row(&[(gs[2], 1.0)], 0.0);
            for line in &instance.lines {
                let (from, to) = (line.from - 1, line.to - 1);
                b.add_in_row(&[(ths[from], line.susceptance), (ths[to], -line.susceptance)], line.fmax);
                b.add_in_row(&[(ths[to], line.susceptance), (ths[from], -line.susceptance)], line.fmax);
            }
            let per_period = qp::active_set_oracle(&b.build()).unwrap();
            direct += per_period.objective;
        }
        assert!(
            (sol.objective - direct).abs() < 1e-6,
            "zero-storage dispatch {} vs direct OPF {direct}",
            sol.objective
        );
    }

    #[test]
    fn infeasible_when_line_too_small() {
        let instance = NetworkInstance {
            buses: vec![
                Bus { id: 1, cost: Some(QuadraticCost::new(1.0, 0.0, 0.0)) },
                Bus { id: 2, cost: None },
            ],
            lines: vec![Line { from: 1, to: 2, susceptance: 1.0, fmax: 50.0 }],
            demand: vec![vec![0.0], vec![100.0]],
            horizon: 1,
        };
        match solve_dispatch(DispatchCase::Network(&instance), 0.0, &cfg()) {
            Err(DispatchError::Infeasible) => {}
            other => panic!("expected Infeasible, got {other:?}"),
        }
    }

    #[test]
    fn prices_and_mci_golden_values() {
        let pool = two_period_pool();
        let case = DispatchCase::Pool(&pool);
        let alice = UserProfile { user_id: "alice".into(), bus_id: 1, load: vec![4.0, 16.0] };
        let bob = UserProfile { user_id: "bob".into(), bus_id: 1, load: vec![6.0, 4.0] };

        let sol0 = solve_dispatch(case, 0.0, &cfg()).unwrap();
        let prices0 = compute_prices(&sol0, &case, None).unwrap();
        assert_abs_diff_eq!(prices0.p[0][0], 10.0, epsilon = 1e-6);
        assert_abs_diff_eq!(prices0.p[0][1], 20.0, epsilon = 1e-6);
        assert_abs_diff_eq!(prices0.clmp[0][0], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prices0.clmp[0][1], 20.0, epsilon = 1e-12);
        let a0 = compute_mci(&prices0, &alice).unwrap();
        let b0 = compute_mci(&prices0, &bob).unwrap();
        assert_abs_diff_eq!(a0.mci, 18.0, epsilon = 1e-6);
        assert_abs_diff_eq!(b0.mci, 14.0, epsilon = 1e-6);

        let sol10 = solve_dispatch(case, 10.0, &cfg()).unwrap();
        let prices10 = compute_prices(&sol10, &case, None).unwrap();
        assert_abs_diff_eq!(prices10.p[0][0], 15.0, epsilon = 1e-6);
        assert_abs_diff_eq!(prices10.p[0][1], 15.0, epsilon = 1e-6);
        // clmp stays (10, 20); vlmp = a u = (5, -5).
        assert_abs_diff_eq!(prices10.clmp[0][0], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prices10.clmp[0][1], 20.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prices10.vlmp[0][0], 5.0, epsilon = 1e-6);
        assert_abs_diff_eq!(prices10.vlmp[0][1], -5.0, epsilon = 1e-6);
        let a10 = compute_mci(&prices10, &alice).unwrap();
        let b10 = compute_mci(&prices10, &bob).unwrap();
        assert_abs_diff_eq!(a10.mci, 15.0, epsilon = 1e-6);
        assert_abs_diff_eq!(b10.mci, 15.0, epsilon = 1e-6);
        assert_abs_diff_eq!(a10.cmci, 18.0, epsilon = 1e-6);
        assert_abs_diff_eq!(a10.vmci, -3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(b10.vmci, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(a10.mci, a10.cmci + a10.vmci, epsilon = 1e-12);
    }

    #[test]
    fn mci_bound_golden_values() {
        let pool = two_period_pool();
        let case = DispatchCase::Pool(&pool);
        for (e, expect_ub, expect_lb) in [(0.0, 20.0, 10.0), (5.0, 17.5, 12.5), (10.0, 15.0, 15.0)] {
            let sol = solve_dispatch(case, e, &cfg()).unwrap();
            let prices = compute_prices(&sol, &case, None).unwrap();
            let bounds = mci_bounds(&prices, BoundScope::Global);
            assert_abs_diff_eq!(bounds.ubmci[0], expect_ub, epsilon = 1e-6);
            assert_abs_diff_eq!(bounds.lbmci[0], expect_lb, epsilon = 1e-6);
        }
    }

    #[test]
    fn mci_error_paths() {
        let pool = two_period_pool();
        let case = DispatchCase::Pool(&pool);
        let sol = solve_dispatch(case, 0.0, &cfg()).unwrap();
        let prices = compute_prices(&sol, &case, None).unwrap();
        let zero = UserProfile { user_id: "z".into(), bus_id: 1, load: vec![0.0, 0.0] };
        assert!(matches!(compute_mci(&prices, &zero), Err(DispatchError::ZeroLoad { .. })));
        let lost = UserProfile { user_id: "l".into(), bus_id: 9, load: vec![1.0, 1.0] };
        assert!(matches!(compute_mci(&prices, &lost), Err(DispatchError::UnknownBus { .. })));
    }

    #[test]
    fn network_prices_need_baseline() {
        let instance = three_bus_instance();
        let case = DispatchCase::Network(&instance);
        let sol = solve_dispatch(case, 30.0, &cfg()).unwrap();
        assert!(matches!(
            compute_prices(&sol, &case, None),
            Err(DispatchError::MissingBaseline)
        ));
        let sol0 = solve_dispatch(case, 0.0, &cfg()).unwrap();
        let baseline = Baseline::from_zero_storage(&sol0).unwrap();
        let prices = compute_prices(&sol, &case, Some(&baseline)).unwrap();
        // p = clmp + vlmp everywhere, including the pure-load bus.
        for i in 0..3 {
            for t in 0..24 {
                assert!((prices.p[i][t] - prices.clmp[i][t] - prices.vlmp[i][t]).abs() < 1e-9);
            }
        }
        // At E = 0 the deviation components vanish.
        let prices_at_zero = compute_prices(&sol0, &case, Some(&baseline)).unwrap();
        for i in 0..3 {
            for t in 0..24 {
                assert!(prices_at_zero.temporal[i][t].abs() < 1e-6);
                assert!(prices_at_zero.spatial[i][t].abs() < 1e-6);
            }
        }
    }

    #[test]
    fn siting_regularization_leaves_objective_and_prices_alone() {
        let instance = three_bus_instance();
        let plain = solve_dispatch(DispatchCase::Network(&instance), 45.0, &cfg()).unwrap();
        let cfg_reg = DispatchConfig { reg_eps: 1e-8, ..Default::default() };
        let reg = solve_dispatch(DispatchCase::Network(&instance), 45.0, &cfg_reg).unwrap();
        assert!((plain.objective - reg.objective).abs() < 1e-6);
        let (p0, p1) = (plain.prices(), reg.prices());
        for i in 0..3 {
            for t in 0..24 {
                assert!((p0[i][t] - p1[i][t]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn pool_degenerate_network_reduces_to_pool() {
        // A single-bus network and its pool reduction agree.
        let net = NetworkInstance {
            buses: vec![Bus { id: 1, cost: Some(QuadraticCost::new(1.0, 0.0, 0.0)) }],
            lines: vec![],
            demand: vec![vec![10.0, 20.0]],
            horizon: 2,
        };
        let pool = crate::model::pool_of(&net).unwrap();
        for e in [0.0, 4.0, 10.0] {
            let sn = solve_dispatch(DispatchCase::Network(&net), e, &cfg()).unwrap();
            let sp = solve_dispatch(DispatchCase::Pool(&pool), e, &cfg()).unwrap();
            assert!((sn.objective - sp.objective).abs() < 1e-7);
            let (pn, pp) = (sn.prices(), sp.prices());
            for t in 0..2 {
                assert!((pn[0][t] - pp[0][t]).abs() < 1e-6);
            }
        }
    }
}
