//! A small Monte-Carlo study with a misspecified outcome model (C2).
//! Pass a worker count as the first argument to run replications in
//! parallel; the report does not depend on it.
//!
//!     cargo run --release --example monte_carlo -- 4

use calibdr::pipeline::Method;
use calibdr::simulation::{run_monte_carlo, Config, MonteCarloOptions, ScenarioSpec};

fn main() -> calibdr::Result<()> {
    let workers = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1);
    let spec = ScenarioSpec::new(Config::C2, 1, 400, 50, 1).with_methods(vec![Method::RmlRml, Method::RcalRwl]);
    let opts = MonteCarloOptions { reps: 40, workers, ..Default::default() };
    let report = run_monte_carlo(&spec, &opts)?;

    println!("{} replications of {:?}, true mu1 = {}", report.reps, spec.config, report.true_mu1);
    println!("{:<10} {:>8} {:>8} {:>8} {:>6} {:>6}", "method", "bias", "sqrtVar", "sqrtEVar", "cov90", "cov95");
    for m in &report.methods {
        println!(
            "{:<10} {:>8.4} {:>8.4} {:>8.4} {:>6.3} {:>6.3}",
            m.method.tag(),
            m.bias,
            m.sqrt_var,
            m.sqrt_evar,
            m.cov90,
            m.cov95
        );
    }
    Ok(())
}
