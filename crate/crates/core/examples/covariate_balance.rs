//! Compares the covariate balance of calibrated and maximum-likelihood
//! propensity fits at the same λ. Calibrated weights keep every
//! standardized mean difference within λ.
//!
//!     cargo run --release --example covariate_balance

use calibdr::estimators::balance_report;
use calibdr::losses::{Arm, LossKind};
use calibdr::simulation::{generate_scenario, Config, ScenarioSpec};
use calibdr::solver::{fit_penalized, SolverOptions};
use calibdr::tuning::lambda_max;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> calibdr::Result<()> {
    let spec = ScenarioSpec::new(Config::C1, 1, 400, 20, 4);
    let sim = generate_scenario(&spec, &mut ChaCha8Rng::seed_from_u64(4))?;
    let opts = SolverOptions::default();
    let cal = LossKind::CalPs { arm: Arm::Treated };
    let lambda = 0.1 * lambda_max(&cal, &sim.basis, &sim.data)?;

    println!("lambda = {lambda:.4}");
    println!("{:<10} {:>10} {:>10} {:>8}", "fit", "max", "mean", "active");
    for kind in [cal, LossKind::MlPs] {
        let fit = fit_penalized(&kind, &sim.basis, &sim.data, lambda, None, &opts)?;
        let b = balance_report(&fit, &sim.basis, &sim.data)?;
        let max = b.iter().copied().fold(0.0, f64::max);
        let mean = b.iter().sum::<f64>() / b.len() as f64;
        println!("{:<10} {max:>10.4} {mean:>10.4} {:>8}", kind.label(), fit.active_set.len());
    }
    Ok(())
}
