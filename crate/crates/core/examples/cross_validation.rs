//! Chooses λ for the propensity losses by 5-fold cross-validation and
//! prints the held-out loss along the grid.
//!
//!     cargo run --release --example cross_validation

use calibdr::losses::{Arm, LossKind};
use calibdr::simulation::{generate_scenario, Config, ScenarioSpec};
use calibdr::solver::SolverOptions;
use calibdr::tuning::{tune_and_fit, GridSpec, LambdaChoice};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> calibdr::Result<()> {
    let spec = ScenarioSpec::new(Config::C1, 1, 400, 50, 2);
    let sim = generate_scenario(&spec, &mut ChaCha8Rng::seed_from_u64(2))?;
    let choice = LambdaChoice::Auto { grid: GridSpec::pow2(11), folds: 5, seed: 7 };

    for kind in [LossKind::MlPs, LossKind::CalPs { arm: Arm::Treated }] {
        let tuned = tune_and_fit(&kind, &sim.basis, &sim.data, choice, &SolverOptions::default())?;
        let cv = tuned.cv.as_ref().expect("automatic choice runs cross-validation");
        println!("{}", kind.label());
        for (j, (lambda, value)) in cv.grid.iter().zip(&cv.cv_values).enumerate() {
            let mark = if j == cv.selected_index { "  <- selected" } else { "" };
            match value {
                Some(v) => println!("  {lambda:>10.6} {v:>12.6}{mark}"),
                None => println!("  {lambda:>10.6} {:>12}", "invalid"),
            }
        }
        println!(
            "  refit at {:.6}: {} active covariates, converged {}\n",
            tuned.fit.lambda,
            tuned.fit.active_set.len(),
            tuned.fit.converged
        );
    }
    Ok(())
}
