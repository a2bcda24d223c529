//! Regenerates the bundled case files under `cases/`.
//!
//! Run from the workspace root:
//!
//! ```text
//! cargo run -p storage-dispatch --example make_cases
//! ```
//!
//! All files are written in the canonical JSON form, so a regeneration of an
//! unchanged case is byte-identical.

use storage_dispatch::cases::{save_case, write_users};
use storage_dispatch::model::{Bus, Line, NetworkInstance, QuadraticCost, UserProfile};

fn main() {
    let out = std::path::Path::new("cases");
    std::fs::create_dir_all(out).expect("create cases dir");

    save_case(&pool_4_2(), &out.join("pool_4_2.json")).unwrap();
    save_case(&tier_pool(), &out.join("tier_pool.json")).unwrap();
    save_case(&threebus(), &out.join("threebus.json")).unwrap();
    save_case(&ieee39(), &out.join("ieee39.json")).unwrap();

    write_users(&pool_4_2_users(), 2, &out.join("pool_4_2_users.csv")).unwrap();
    write_users(&threebus_users(), 24, &out.join("threebus_users.csv")).unwrap();
    println!("wrote case files to {}", out.display());
}

/// Two-period pool: d = (10, 20) MWh, C(g) = 1/2 g^2.
fn pool_4_2() -> NetworkInstance {
    NetworkInstance {
        buses: vec![Bus { id: 1, cost: Some(QuadraticCost::new(1.0, 0.0, 0.0)) }],
        lines: vec![],
        demand: vec![vec![10.0, 20.0]],
        horizon: 2,
    }
}

/// Three-tier day in a pool: 4 MWh off peak (hours 0-8), 12 MWh peak
/// (hours 9-11), 6 MWh partial peak (hours 12-23); cost C(g) = g^2,
/// entered as a = 2.
fn tier_pool() -> NetworkInstance {
    let mut demand = Vec::with_capacity(24);
    demand.extend(std::iter::repeat_n(4.0 / 9.0, 9));
    demand.extend(std::iter::repeat_n(12.0 / 3.0, 3));
    demand.extend(std::iter::repeat_n(6.0 / 12.0, 12));
    NetworkInstance {
        buses: vec![Bus { id: 1, cost: Some(QuadraticCost::new(2.0, 0.0, 0.0)) }],
        lines: vec![],
        demand: vec![demand],
        horizon: 24,
    }
}

/// Three-bus prototype: generators at buses 1 and 2
/// (C1 = 0.05 g^2 + 5 g + 100, C2 = 0.03 g^2 + 10 g + 120, entered in the
/// half-quadratic convention as a = 0.1 and a = 0.06), pure-load bus 3,
/// line limits 80/130/150 MW. The published figure references line
/// susceptances without printing them; all three are set to 1.0 per unit.
/// The 24-hour load pattern is synthesized: flat supporting loads at the
/// generator buses and an evening peak hour at the load bus that congests
/// the 1-3 line until storage flattens it.
fn threebus() -> NetworkInstance {
    let mut demand3 = Vec::with_capacity(24);
    for t in 0..24 {
        demand3.push(match t {
            0..=6 => 100.0,
            18 => 260.0,
            _ => 110.0,
        });
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

/// 10-machine New England test system: 39 buses, 46 branches, generators at
/// buses 30-39 with the published uniform quadratic cost (0.01 p^2 + 0.3 p +
/// 0.2, entered as a = 0.02). Susceptance is 100/x with x the per-unit series
/// reactance on a 100 MVA base; flow limits are the branch MVA ratings.
/// The single-period bus loads are scaled by a synthetic 24-hour shape
/// (night valley 0.9, daytime 1.0, two-hour evening peak 1.4).
fn ieee39() -> NetworkInstance {
    // (bus, Pd) for buses carrying load; other buses are zero.
    let loads: &[(usize, f64)] = &[
        (1, 97.6),
        (3, 322.0),
        (4, 500.0),
        (7, 233.8),
        (8, 522.0),
        (9, 6.5),
        (12, 8.53),
        (15, 320.0),
        (16, 329.0),
        (18, 158.0),
        (20, 680.0),
        (21, 274.0),
        (23, 247.5),
        (24, 308.6),
        (25, 224.0),
        (26, 139.0),
        (27, 281.0),
        (28, 206.0),
        (29, 283.5),
        (31, 9.2),
        (39, 1104.0),
    ];
    // (from, to, x, rateA)
    let branches: &[(usize, usize, f64, f64)] = &[
        (1, 2, 0.0411, 600.0),
        (1, 39, 0.0250, 1000.0),
        (2, 3, 0.0151, 500.0),
        (2, 25, 0.0086, 500.0),
        (2, 30, 0.0181, 900.0),
        (3, 4, 0.0213, 500.0),
        (3, 18, 0.0133, 500.0),
        (4, 5, 0.0128, 600.0),
        (4, 14, 0.0129, 500.0),
        (5, 6, 0.0026, 1200.0),
        (5, 8, 0.0112, 900.0),
        (6, 7, 0.0092, 900.0),
        (6, 11, 0.0082, 480.0),
        (6, 31, 0.0250, 1800.0),
        (7, 8, 0.0046, 900.0),
        (8, 9, 0.0363, 900.0),
        (9, 39, 0.0250, 900.0),
        (10, 11, 0.0043, 600.0),
        (10, 13, 0.0043, 600.0),
        (10, 32, 0.0200, 900.0),
        (12, 11, 0.0435, 500.0),
        (12, 13, 0.0435, 500.0),
        (13, 14, 0.0101, 600.0),
        (14, 15, 0.0217, 600.0),
        (15, 16, 0.0094, 600.0),
        (16, 17, 0.0089, 600.0),
        (16, 19, 0.0195, 600.0),
        (16, 21, 0.0135, 600.0),
        (16, 24, 0.0059, 600.0),
        (17, 18, 0.0082, 600.0),
        (17, 27, 0.0173, 600.0),
        (19, 20, 0.0138, 900.0),
        (19, 33, 0.0142, 900.0),
        (20, 34, 0.0180, 900.0),
        (21, 22, 0.0140, 900.0),
        (22, 23, 0.0096, 600.0),
        (22, 35, 0.0143, 900.0),
        (23, 24, 0.0350, 600.0),
        (23, 36, 0.0272, 900.0),
        (25, 26, 0.0323, 600.0),
        (25, 37, 0.0232, 900.0),
        (26, 27, 0.0147, 600.0),
        (26, 28, 0.0474, 600.0),
        (26, 29, 0.0625, 600.0),
        (28, 29, 0.0151, 600.0),
        (29, 38, 0.0156, 1200.0),
    ];
    let generators: &[usize] = &[30, 31, 32, 33, 34, 35, 36, 37, 38, 39];

    let mut shape = Vec::with_capacity(24);
    for t in 0..24 {
        shape.push(match t {
            0..=6 => 0.9,
            17 | 18 => 1.4,
            _ => 1.0,
        });
    }

    let mut pd = vec![0.0; 39];
    for &(bus, load) in loads {
        pd[bus - 1] = load;
    }
    let buses: Vec<Bus> = (1..=39)
        .map(|id| Bus {
            id,
            cost: if generators.contains(&id) {
                Some(QuadraticCost::new(0.02, 0.3, 0.2))
            } else {
                None
            },
        })
        .collect();
    let lines: Vec<Line> = branches
        .iter()
        .map(|&(from, to, x, rate)| Line { from, to, susceptance: 100.0 / x, fmax: rate })
        .collect();
    let demand: Vec<Vec<f64>> =
        pd.iter().map(|d| shape.iter().map(|s| d * s).collect()).collect();
    NetworkInstance { buses, lines, demand, horizon: 24 }
}

fn pool_4_2_users() -> Vec<UserProfile> {
    vec![
        UserProfile { user_id: "alice".into(), bus_id: 1, load: vec![4.0, 16.0] },
        UserProfile { user_id: "bob".into(), bus_id: 1, load: vec![6.0, 4.0] },
    ]
}

/// A small mix of load shapes across the three buses: evening-peaked,
/// night-heavy, flat, and midday profiles.
fn threebus_users() -> Vec<UserProfile> {
    let shape = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..24).map(f).collect() };
    vec![
        UserProfile {
            user_id: "evening-3a".into(),
            bus_id: 3,
            load: shape(&|t| if (17..=20).contains(&t) { 3.0 } else { 0.5 }),
        },
        UserProfile {
            user_id: "evening-3b".into(),
            bus_id: 3,
            load: shape(&|t| if (16..=19).contains(&t) { 2.0 } else { 0.8 }),
        },
        UserProfile {
            user_id: "night-3".into(),
            bus_id: 3,
            load: shape(&|t| if t < 7 { 2.0 } else { 0.3 }),
        },
        UserProfile { user_id: "flat-3".into(), bus_id: 3, load: vec![1.0; 24] },
        UserProfile {
            user_id: "midday-2".into(),
            bus_id: 2,
            load: shape(&|t| if (10..=15).contains(&t) { 1.5 } else { 0.4 }),
        },
        UserProfile {
            user_id: "night-2".into(),
            bus_id: 2,
            load: shape(&|t| if t < 6 || t > 21 { 1.2 } else { 0.2 }),
        },
        UserProfile { user_id: "flat-1".into(), bus_id: 1, load: vec![0.75; 24] },
        UserProfile {
            user_id: "evening-1".into(),
            bus_id: 1,
            load: shape(&|t| if (17..=18).contains(&t) { 2.5 } else { 0.6 }),
        },
    ]
}
