//! Fits the calibration loss along a halving λ grid with warm starts.
//! Below some λ the loss has no finite minimizer when p is large relative
//! to the number of treated rows, and the path stops there.
//!
//!     cargo run --release --example regularization_path

use calibdr::losses::{Arm, LossKind};
use calibdr::simulation::{generate_scenario, Config, ScenarioSpec};
use calibdr::solver::{fit_path, SolverOptions};
use calibdr::tuning::{lambda_max, GridSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> calibdr::Result<()> {
    let spec = ScenarioSpec::new(Config::C1, 1, 400, 100, 1);
    let sim = generate_scenario(&spec, &mut ChaCha8Rng::seed_from_u64(1))?;
    let kind = LossKind::CalPs { arm: Arm::Treated };

    let lmax = lambda_max(&kind, &sim.basis, &sim.data)?;
    let grid = GridSpec::pow2(14).lambdas(lmax);
    let path = fit_path(&kind, &sim.basis, &sim.data, &grid, &SolverOptions::default())?;

    println!("{} rows, {} treated, p = {}", sim.data.n(), sim.data.n_treated(), sim.basis.p());
    println!("{:>12} {:>8} {:>14} {:>6}  status", "lambda", "active", "objective", "iters");
    for (lambda, fit) in grid.iter().zip(&path) {
        match fit {
            Ok(f) => {
                let status = if f.converged {
                    "converged"
                } else if f.diverged {
                    "diverged"
                } else {
                    "not converged"
                };
                println!(
                    "{lambda:>12.6} {:>8} {:>14.6} {:>6}  {status}",
                    f.active_set.len(),
                    f.objective,
                    f.outer_iterations
                );
            }
            Err(e) => println!("{lambda:>12.6}  {e}"),
        }
    }
    Ok(())
}
