use storage_dispatch::cases::load_case;
use storage_dispatch::dispatch::{solve_dispatch, DispatchCase, DispatchConfig};
use storage_dispatch::parametric::{default_grid, detect_convergence, sweep, verify_p3_equivalence, SweepConfig};
use std::time::Instant;

fn main() {
    for name in ["threebus", "ieee39"] {
        let case = load_case(std::path::Path::new(&format!("cases/{name}.json"))).unwrap();
        let dc = DispatchCase::Network(&case);
        let t0 = Instant::now();
        let sol0 = solve_dispatch(dc, 0.0, &DispatchConfig::default()).unwrap();
        println!("{name}: E=0 objective {:.3}, residual {:.2e}, {:?}", sol0.objective, sol0.residuals.worst(), t0.elapsed());
        let grid = default_grid(&dc);
        println!("{name}: grid max {:.2}", grid.last().unwrap());
        let t1 = Instant::now();
        let s = sweep(dc, &grid, &SweepConfig::default()).unwrap();
        println!("{name}: sweep of {} points took {:?}", grid.len(), t1.elapsed());
        match detect_convergence(&s, 1e-4) {
            Ok(r) => println!("{name}: E_con = {:.2} (index {})", r.e_con, r.index),
            Err(e) => println!("{name}: convergence NOT reached: {e}"),
        }
        let e_large = 2.0 * grid.last().unwrap();
        let t2 = Instant::now();
        match verify_p3_equivalence(&case, e_large, &DispatchConfig::default(), 1e-4) {
            Ok(r) => println!("{name}: P3 equivalence at E={e_large:.1}: time-var {:.2e}, gen-dev {:.2e}, rel gap {:.2e} ({:?})",
                r.max_time_variation, r.max_generation_deviation, r.relative_gap, t2.elapsed()),
            Err(e) => println!("{name}: P3 equivalence FAILED: {e}"),
        }
        // congestion probe at E=0: any line at its limit?
        let mut congested = 0;
        for (l, line) in case.lines.iter().enumerate() {
            for t in 0..case.horizon {
                if sol0.flow[l][t].abs() > line.fmax - 1e-6 { congested += 1; }
            }
        }
        println!("{name}: congested line-hours at E=0: {congested}");
    }
}
