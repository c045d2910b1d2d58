//! Estimates μ¹, μ⁰ and the ATE with every method on a synthetic data set
//! with a true effect of 1.
//!
//!     cargo run --release --example treatment_effects

mod common;

use calibdr::dataset::{build_basis, BasisExpansion};
use calibdr::estimators::Target;
use calibdr::pipeline::{Method, NuisanceCache, PipelineConfig};

fn main() -> calibdr::Result<()> {
    let data = common::synthetic(800, 20, 1.0, 11)?;
    let basis = build_basis(&data, true, BasisExpansion::Raw)?;
    let mut cache = NuisanceCache::new(&basis, &data, PipelineConfig::default())?;

    println!("{:<10} {:>6} {:>9} {:>8}   95% interval", "method", "target", "estimate", "se");
    for method in Method::ALL {
        let result = cache.estimate(method, Target::Ate)?;
        for e in &result.estimates {
            println!(
                "{:<10} {:>6} {:>9.4} {:>8.4}   [{:.4}, {:.4}]",
                method.tag(),
                format!("{:?}", e.target),
                e.point,
                e.se,
                e.ci_low,
                e.ci_high
            );
        }
    }
    Ok(())
}
