//! The constants behind the simulation design: closed forms next to
//! adaptive quadrature, and Monte-Carlo checks of the transformed
//! covariates and of the true μ¹ in the logistic configurations.
//!
//!     cargo run --release --example simulation_design

use calibdr::simulation::{
    logistic_mu1_monte_carlo, make_xdagger, truncated_normal, StandardizationConstants, LOGISTIC_TRUE_MU1,
};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> calibdr::Result<()> {
    let k = StandardizationConstants::standard();
    println!("{:<22} {:>18} {:>18} {:>9}", "constant", "closed form", "quadrature", "error");
    for c in k.quadrature_checks() {
        println!("{:<22} {:>18.12} {:>18.12} {:>9.1e}", c.name, c.analytic, c.quadrature, c.error());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows = 200_000;
    let x = Array2::from_shape_simple_fn((rows, 4), || truncated_normal(&mut rng, k.a) / k.b);
    let xd = make_xdagger(&x, &k)?;
    for (j, col) in xd.columns().into_iter().enumerate() {
        let mean = col.sum() / rows as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64;
        println!("xdagger{}: mean {mean:+.4}, variance {var:.4}", j + 1);
    }

    for oc in [1u8, 2] {
        let mc = logistic_mu1_monte_carlo(oc, 1_000_000, &mut rng);
        println!(
            "true mu1, outcome configuration {oc}: {mc:.5} (tabulated {})",
            LOGISTIC_TRUE_MU1[usize::from(oc - 1)]
        );
    }
    Ok(())
}
