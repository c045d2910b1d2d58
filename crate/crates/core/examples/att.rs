//! Average treatment effect on the treated from untreated-arm fits, next to
//! the naive difference in means.
//!
//!     cargo run --release --example att

mod common;

use calibdr::dataset::{build_basis, BasisExpansion};
use calibdr::estimators::Target;
use calibdr::pipeline::{Method, NuisanceCache, PipelineConfig};

fn main() -> calibdr::Result<()> {
    let data = common::synthetic(800, 20, 0.5, 12)?;
    let basis = build_basis(&data, true, BasisExpansion::Raw)?;

    let arm_mean = |arm: u8| {
        let ys: Vec<f64> =
            data.treatment().iter().zip(data.outcome()).filter(|(t, _)| **t == arm).filter_map(|(_, y)| *y).collect();
        ys.iter().sum::<f64>() / ys.len() as f64
    };
    println!("difference in means: {:.4} (true ATT 0.5)", arm_mean(1) - arm_mean(0));

    let mut cache = NuisanceCache::new(&basis, &data, PipelineConfig::default())?;
    for method in [Method::RcalRwl, Method::RmlRml] {
        let result = cache.estimate(method, Target::Att)?;
        for e in &result.estimates {
            println!("{:<10} {:>4}: {:.4} (se {:.4})", method.tag(), format!("{:?}", e.target), e.point, e.se);
        }
    }
    Ok(())
}
