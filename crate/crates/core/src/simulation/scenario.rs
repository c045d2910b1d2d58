//! Data-generating configurations C1 to C6.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ObservedData, RegressorBasis};
use crate::error::{Error, Result};
use crate::losses::expit;
use crate::normal;
use crate::pipeline::Method;

use super::constants::StandardizationConstants;

/// Draws `Z ~ N(0,1)` conditioned on `(-a, a)` by inverting the CDF.
pub fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    let lo = normal::cdf(-a);
    let width = 2.0 * normal::cdf(a) - 1.0;
    loop {
        let u: f64 = rng.random();
        let z = truncated_normal_at(u, lo, width);
        if z.abs() < a {
            return z;
        }
    }
}

/// `Φ⁻¹(Φ(−a) + u·(2Φ(a) − 1))` with `lo = Φ(−a)` and `width = 2Φ(a) − 1`.
pub fn truncated_normal_at(u: f64, lo: f64, width: f64) -> f64 {
    if u == 0.5 {
        return 0.0;
    }
    // Work in the lower tail for accuracy and reflect.
    if u > 0.5 {
        -normal::quantile(lo + (1.0 - u) * width)
    } else {
        normal::quantile(lo + u * width)
    }
}

/// Maps `X` (columns already scaled to unit variance) to `X†`: the first
/// four columns are replaced by standardized nonlinear transforms, the rest
/// are copied.
pub fn make_xdagger(x: &Array2<f64>, k: &StandardizationConstants) -> Result<Array2<f64>> {
    let p = x.ncols();
    if p < 4 {
        return Err(Error::InvalidArgument(format!("X-dagger needs at least 4 columns, got {p}")));
    }
    let mut out = x.clone();
    for (i, row) in x.rows().into_iter().enumerate() {
        let (x1, x2, x3, x4) = (row[0], row[1], row[2], row[3]);
        out[[i, 0]] = ((0.5 * x1).exp() - k.exp_half.mean) / k.exp_half.sd;
        out[[i, 1]] = (10.0 + x2 / (1.0 + x1.exp()) - k.ratio.mean) / k.ratio.sd;
        out[[i, 2]] = ((0.04 * x1 * x3 + 0.6).powi(3) - k.cubic.mean) / k.cubic.sd;
        out[[i, 3]] = ((x2 + x4 + 20.0).powi(2) - k.square.mean) / k.square.sd;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Config {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
}

impl Config {
    pub fn logistic_outcome(self) -> bool {
        matches!(self, Config::C4 | Config::C5 | Config::C6)
    }

    /// The PS depends on `X` rather than `X†` (PS model misspecified).
    fn ps_on_raw(self) -> bool {
        matches!(self, Config::C3 | Config::C6)
    }

    /// The outcome depends on `X` rather than `X†` (OR model misspecified).
    fn outcome_on_raw(self) -> bool {
        matches!(self, Config::C2 | Config::C5)
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for Config {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "C1" => Ok(Config::C1),
            "C2" => Ok(Config::C2),
            "C3" => Ok(Config::C3),
            "C4" => Ok(Config::C4),
            "C5" => Ok(Config::C5),
            "C6" => Ok(Config::C6),
            _ => Err(Error::InvalidArgument(format!("unknown scenario `{s}` (expected C1..C6)"))),
        }
    }
}

/// Monte-Carlo values of `μ¹` for the logistic outcome configurations with
/// a correctly specified outcome model (C4, C6).
pub const LOGISTIC_TRUE_MU1: [f64; 2] = [0.494_967_6, 0.499_234_9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub config: Config,
    /// 1 or 2; selects the leading outcome coefficient (1 or 0.25).
    pub outcome_config: u8,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
}

impl ScenarioSpec {
    pub fn new(config: Config, outcome_config: u8, n: usize, p: usize, seed: u64) -> Self {
        Self { config, outcome_config, n, p, seed, methods: vec![Method::RmlRml, Method::RcalRwl] }
    }

    pub fn with_methods(mut self, methods: Vec<Method>) -> Self {
        self.methods = methods;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.outcome_config, 1 | 2) {
            return Err(Error::InvalidArgument(format!(
                "outcome configuration must be 1 or 2, got {}",
                self.outcome_config
            )));
        }
        if self.p < 4 {
            return Err(Error::InvalidArgument(format!("p must be at least 4, got {}", self.p)));
        }
        if self.n < 50 {
            return Err(Error::InvalidArgument(format!("n must be at least 50, got {}", self.n)));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods requested".into()));
        }
        Ok(())
    }

    fn leading_coefficient(&self) -> f64 {
        if self.outcome_config == 1 {
            1.0
        } else {
            0.25
        }
    }

    /// True `μ¹ = E Y¹`.
    pub fn true_mu1(&self) -> f64 {
        match self.config {
            Config::C1 | Config::C2 | Config::C3 => 0.0,
            Config::C5 => 0.5,
            Config::C4 | Config::C6 => LOGISTIC_TRUE_MU1[usize::from(self.outcome_config - 1)],
        }
    }
}

/// One simulated data set: the observed data (`Y` missing on untreated
/// rows), the working basis `f = (1, X†)` and the generated outcomes.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub data: ObservedData,
    pub basis: RegressorBasis,
    /// `Y¹` on every row, including those where it is not observed.
    pub full_outcome: Vec<f64>,
    pub true_mu1: f64,
}

/// Linear index `c₁z₁ + 0.5(z₂ + z₃ + z₄)` of the outcome law.
fn outcome_index(lead: f64, z: [f64; 4]) -> f64 {
    lead * z[0] + 0.5 * (z[1] + z[2] + z[3])
}

/// Draws one data set. Per row the covariates are drawn first, then `T`,
/// then `Y¹`.
pub fn generate_scenario<R: Rng + ?Sized>(spec: &ScenarioSpec, rng: &mut R) -> Result<SimulatedData> {
    spec.validate()?;
    let k = StandardizationConstants::standard();
    let (n, p) = (spec.n, spec.p);
    let lo = normal::cdf(-k.a);
    let mut x = Array2::zeros((n, p));
    for v in x.iter_mut() {
        *v = loop {
            let z = truncated_normal_at(rng.random(), lo, k.c);
            if z.abs() < k.a {
                break z / k.b;
            }
        };
    }
    let xd = make_xdagger(&x, &k)?;
    let lead = spec.leading_coefficient();
    let mut t = Vec::with_capacity(n);
    let mut y_full = Vec::with_capacity(n);
    for i in 0..n {
        let raw = [x[[i, 0]], x[[i, 1]], x[[i, 2]], x[[i, 3]]];
        let dag = [xd[[i, 0]], xd[[i, 1]], xd[[i, 2]], xd[[i, 3]]];
        let ps_z = if spec.config.ps_on_raw() { raw } else { dag };
        let ps = 1.0 / (1.0 + (ps_z[0] - 0.5 * ps_z[1] + 0.25 * ps_z[2] + 0.1 * ps_z[3]).exp());
        t.push(u8::from(rng.random::<f64>() < ps));
        let or_z = if spec.config.outcome_on_raw() { raw } else { dag };
        let index = outcome_index(lead, or_z);
        let y = if spec.config.logistic_outcome() {
            f64::from(u8::from(rng.random::<f64>() < expit(index)))
        } else {
            index + standard_normal(rng)
        };
        y_full.push(y);
    }
    let y = t.iter().zip(&y_full).map(|(&ti, &yi)| (ti == 1).then_some(yi)).collect();
    let names: Vec<String> = (1..=p).map(|j| format!("xd{j}")).collect();
    let data = ObservedData::new(t, y, x, None)?;
    let basis = RegressorBasis::from_columns(&xd, names, false)?;
    Ok(SimulatedData { data, basis, full_outcome: y_full, true_mu1: spec.true_mu1() })
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return normal::quantile(u);
        }
    }
}

/// Monte-Carlo estimate of `E expit(c₁X†₁ + 0.5(X†₂ + X†₃ + X†₄))`, the
/// true `μ¹` of the logistic outcome configurations C4 and C6.
pub fn logistic_mu1_monte_carlo<R: Rng + ?Sized>(outcome_config: u8, draws: usize, rng: &mut R) -> f64 {
    let k = StandardizationConstants::standard();
    let lead = if outcome_config == 1 { 1.0 } else { 0.25 };
    let lo = normal::cdf(-k.a);
    let mut sum = 0.0;
    let mut x = Array2::zeros((1, 4));
    for _ in 0..draws {
        for j in 0..4 {
            x[[0, j]] = loop {
                let z = truncated_normal_at(rng.random(), lo, k.c);
                if z.abs() < k.a {
                    break z / k.b;
                }
            };
        }
        let d = make_xdagger(&x, &k).expect("four columns");
        sum += expit(outcome_index(lead, [d[[0, 0]], d[[0, 1]], d[[0, 2]], d[[0, 3]]]));
    }
    sum / draws as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn truncated_normal_center_and_bounds() {
        let k = StandardizationConstants::standard();
        let lo = normal::cdf(-k.a);
        assert_eq!(truncated_normal_at(0.5, lo, k.c), 0.0);
        assert!((truncated_normal_at(0.25, lo, k.c) + truncated_normal_at(0.75, lo, k.c)).abs() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            assert!(truncated_normal(&mut rng, 2.5).abs() < 2.5);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ScenarioSpec::new(Config::C1, 1, 100, 10, 0).validate().is_ok());
        assert!(ScenarioSpec::new(Config::C1, 3, 100, 10, 0).validate().is_err());
        assert!(ScenarioSpec::new(Config::C1, 1, 100, 3, 0).validate().is_err());
        assert!(ScenarioSpec::new(Config::C1, 1, 49, 10, 0).validate().is_err());
        assert!(ScenarioSpec::new(Config::C1, 1, 100, 10, 0).with_methods(vec![]).validate().is_err());
    }

    #[test]
    fn truth_values() {
        assert_eq!(ScenarioSpec::new(Config::C2, 2, 100, 10, 0).true_mu1(), 0.0);
        assert_eq!(ScenarioSpec::new(Config::C5, 1, 100, 10, 0).true_mu1(), 0.5);
        assert_eq!(ScenarioSpec::new(Config::C6, 2, 100, 10, 0).true_mu1(), 0.499_234_9);
    }

    #[test]
    fn generated_shapes() {
        let spec = ScenarioSpec::new(Config::C4, 1, 120, 6, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sim = generate_scenario(&spec, &mut rng).unwrap();
        assert_eq!(sim.basis.dim(), 7);
        assert_eq!(sim.data.n(), 120);
        for i in 0..120 {
            let observed = sim.data.outcome()[i];
            if sim.data.treatment()[i] == 1 {
                assert_eq!(observed, Some(sim.full_outcome[i]));
            } else {
                assert_eq!(observed, None);
            }
            assert!(sim.full_outcome[i] == 0.0 || sim.full_outcome[i] == 1.0);
        }
    }
}
