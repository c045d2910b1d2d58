//! Synthetic data shared by the examples.

#![allow(dead_code)]

use calibdr::dataset::ObservedData;
use calibdr::losses::expit;
use calibdr::normal;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn std_normal(rng: &mut impl Rng) -> f64 {
    normal::quantile(rng.random_range(f64::EPSILON..1.0))
}

/// `n` rows of `p` standard normal covariates, a logistic treatment model
/// in the first two covariates and outcomes observed in both arms with a
/// constant treatment effect `effect`.
pub fn synthetic(n: usize, p: usize, effect: f64, seed: u64) -> calibdr::Result<ObservedData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_simple_fn((n, p), || std_normal(&mut rng));
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let treated = rng.random::<f64>() < expit(0.8 * x[[i, 0]] - 0.5 * x[[i, 1]]);
        let y0 = x[[i, 0]] + 0.5 * x[[i, 2]] + std_normal(&mut rng);
        t.push(u8::from(treated));
        y.push(Some(if treated { y0 + effect } else { y0 }));
    }
    ObservedData::new(t, y, x, None)
}
