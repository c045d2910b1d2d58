//! Evaluates every loss at a random point and compares the analytic
//! gradient with central finite differences.
//!
//!     cargo run --example losses

use std::sync::Arc;

use calibdr::losses::{evaluate, Arm, Link, LossKind};
use calibdr::simulation::{generate_scenario, Config, ScenarioSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> calibdr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sim = generate_scenario(&ScenarioSpec::new(Config::C1, 1, 200, 10, 3), &mut rng)?;
    let (basis, data) = (&sim.basis, &sim.data);
    let dim = basis.dim();
    let mut point = || -> Vec<f64> { (0..dim).map(|_| rng.random_range(-0.1..0.1)).collect() };
    let companion: Arc<[f64]> = point().into();

    let kinds = [
        LossKind::MlPs,
        LossKind::CalPs { arm: Arm::Treated },
        LossKind::MlOr { link: Link::Identity, arm: Arm::Treated },
        LossKind::WlOr { link: Link::Identity, arm: Arm::Treated, ps_coef: companion.clone() },
        LossKind::WcalPs { link: Link::Identity, or_coef: companion },
    ];
    let theta = point();
    let h = 1e-6;
    println!("{:<22} {:>12} {:>12} {:>12}", "loss", "value", "|grad|", "fd error");
    for kind in &kinds {
        let eval = evaluate(kind, &theta, basis, data)?;
        let mut probe = theta.clone();
        let mut err: f64 = 0.0;
        for j in 0..dim {
            probe[j] = theta[j] + h;
            let up = evaluate(kind, &probe, basis, data)?.value;
            probe[j] = theta[j] - h;
            let down = evaluate(kind, &probe, basis, data)?.value;
            probe[j] = theta[j];
            err = err.max((eval.gradient[j] - (up - down) / (2.0 * h)).abs());
        }
        let norm = eval.gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
        println!("{:<22} {:>12.6} {:>12.6} {:>12.2e}", kind.label(), eval.value, norm, err);
    }
    Ok(())
}
