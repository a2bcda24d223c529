use storage_dispatch::cases::load_case;
use storage_dispatch::dispatch::{solve_dispatch, DispatchCase, DispatchConfig, DispatchError};
use std::time::Instant;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DISPATCH_LOG", "debug")).init();
    let case = load_case(std::path::Path::new("cases/ieee39.json")).unwrap();
    let dc = DispatchCase::Network(&case);
    let t0 = Instant::now();
    match solve_dispatch(dc, 0.0, &DispatchConfig::default()) {
        Ok(sol) => println!("ieee39 E=0: objective {:.3}, residual {:.2e}, {:?}", sol.objective, sol.residuals.worst(), t0.elapsed()),
        Err(DispatchError::Solver(storage_dispatch::qp::QpError::MaxIterations { solution })) => {
            println!("MaxIter after {:?}: residuals {:?}", t0.elapsed(), solution.residuals);
            println!("x[0..5] {:?}", &solution.x[..5]);
        }
        Err(e) => println!("ieee39 E=0 FAILED after {:?}: {e}", t0.elapsed()),
    }
}
