//! Self-verification battery behind `calibdr check`.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{build_basis, BasisExpansion, ObservedData, RegressorBasis};
use crate::error::Result;
use crate::losses::{self, expit, Arm, Link, LossEval, LossKind};
use crate::normal;
use crate::simulation::{logistic_mu1_monte_carlo, truncated_normal, StandardizationConstants, LOGISTIC_TRUE_MU1};
use crate::solver::{check_kkt, fit_penalized, SolverOptions};
use crate::tuning::lambda_max;

/// Loss evaluator under test; [`losses::evaluate`] in production.
pub type Evaluator = dyn Fn(&LossKind, &[f64], &RegressorBasis, &ObservedData) -> Result<LossEval> + Sync;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckOptions {
    /// Skip the checks that need 10⁶ random draws.
    pub quick: bool,
    pub seed: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        Self { quick: false, seed: 20_170_707 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub pass: bool,
    pub checks: Vec<CheckOutcome>,
}

impl CheckReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn outcome(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> CheckOutcome {
    CheckOutcome { name: name.into(), pass, detail: detail.into() }
}

/// Random instance with normal covariates, a logistic treatment model and
/// both a continuous and a binary outcome on every row.
pub fn random_instance(n: usize, p: usize, seed: u64) -> Result<(ObservedData, ObservedData, RegressorBasis)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal_draw = || loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break normal::quantile(u);
        }
    };
    let mut x = Array2::zeros((n, p));
    for v in x.iter_mut() {
        *v = normal_draw();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut t = Vec::with_capacity(n);
    let mut yc = Vec::with_capacity(n);
    let mut yb = Vec::with_capacity(n);
    for i in 0..n {
        let z = |j: usize| if j < p { x[[i, j]] } else { 0.0 };
        t.push(u8::from(rng.random::<f64>() < expit(0.5 * z(0) - 0.5 * z(1))));
        let lin = 0.3 + z(0) + 0.5 * z(2);
        yc.push(Some(lin + rng.random::<f64>() - 0.5));
        yb.push(Some(f64::from(u8::from(rng.random::<f64>() < expit(lin)))));
    }
    t[0] = 1;
    t[1] = 0;
    let continuous = ObservedData::new(t.clone(), yc, x.clone(), None)?;
    let binary = ObservedData::new(t, yb, x, None)?;
    let basis = build_basis(&continuous, true, BasisExpansion::Raw)?;
    Ok((continuous, binary, basis))
}

/// Every loss variant, with random companion coefficients for the weighted
/// ones.
pub fn loss_variants(dim: usize, seed: u64) -> Vec<LossKind> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut companion = || -> Arc<[f64]> { (0..dim).map(|_| 0.1 * (rng.random::<f64>() - 0.5)).collect() };
    let mut kinds =
        vec![LossKind::MlPs, LossKind::CalPs { arm: Arm::Treated }, LossKind::CalPs { arm: Arm::Untreated }];
    for link in [Link::Identity, Link::Logistic] {
        for arm in [Arm::Treated, Arm::Untreated] {
            kinds.push(LossKind::MlOr { link, arm });
            kinds.push(LossKind::WlOr { link, arm, ps_coef: companion() });
        }
        kinds.push(LossKind::WcalPs { link, or_coef: companion() });
    }
    kinds
}

/// Largest max-norm relative discrepancy between the evaluator's gradient
/// and central differences of its value, over `points` random points.
pub fn gradient_discrepancy(
    evaluator: &Evaluator,
    kind: &LossKind,
    basis: &RegressorBasis,
    data: &ObservedData,
    points: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let coef: Vec<f64> = (0..basis.dim()).map(|_| 0.2 * (rng.random::<f64>() - 0.5)).collect();
        let g = evaluator(kind, &coef, basis, data)?.gradient;
        let mut fd = vec![0.0; coef.len()];
        let mut probe = coef.clone();
        for j in 0..coef.len() {
            probe[j] = coef[j] + h;
            let up = evaluator(kind, &probe, basis, data)?.value;
            probe[j] = coef[j] - h;
            let down = evaluator(kind, &probe, basis, data)?.value;
            probe[j] = coef[j];
            fd[j] = (up - down) / (2.0 * h);
        }
        let err = g.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let scale = fd.iter().map(|v| v.abs()).fold(1e-8, f64::max);
        worst = worst.max(err / scale);
    }
    Ok(worst)
}

fn gradient_checks(evaluator: &Evaluator, seed: u64) -> Vec<CheckOutcome> {
    let (continuous, binary, basis) = match random_instance(120, 8, seed) {
        Ok(v) => v,
        Err(e) => return vec![outcome("gradient instance", false, e.to_string())],
    };
    loss_variants(basis.dim(), seed + 1)
        .into_iter()
        .map(|kind| {
            let data = if kind.outcome_link() == Some(Link::Logistic) { &binary } else { &continuous };
            let name = format!("gradient {}", kind.label());
            match gradient_discrepancy(evaluator, &kind, &basis, data, 5, seed + 2) {
                Ok(err) => outcome(name, err <= 1e-5, format!("max relative error {err:.2e}")),
                Err(e) => outcome(name, false, e.to_string()),
            }
        })
        .collect()
}

fn kkt_checks(seed: u64) -> Vec<CheckOutcome> {
    let (continuous, binary, basis) = match random_instance(150, 20, seed) {
        Ok(v) => v,
        Err(e) => return vec![outcome("kkt instance", false, e.to_string())],
    };
    let opts = SolverOptions::default();
    loss_variants(basis.dim(), seed + 1)
        .into_iter()
        .map(|kind| {
            let data = if kind.outcome_link() == Some(Link::Logistic) { &binary } else { &continuous };
            let name = format!("kkt {}", kind.label());
            let run = || -> Result<(bool, f64)> {
                let lambda = 0.2 * lambda_max(&kind, &basis, data)?;
                let fit = fit_penalized(&kind, &basis, data, lambda, None, &opts)?;
                let report = check_kkt(&fit, &kind, &basis, data, opts.kkt_tol)?;
                Ok((fit.converged && report.pass, report.max_excess()))
            };
            match run() {
                Ok((pass, excess)) => outcome(name, pass, format!("max excess {excess:.2e}")),
                Err(e) => outcome(name, false, e.to_string()),
            }
        })
        .collect()
}

fn constant_checks() -> Vec<CheckOutcome> {
    StandardizationConstants::standard()
        .quadrature_checks()
        .into_iter()
        .map(|c| {
            outcome(
                format!("constant {}", c.name),
                c.pass,
                format!("analytic {:.12} quadrature {:.12}", c.analytic, c.quadrature),
            )
        })
        .collect()
}

const DRAWS: usize = 1_000_000;

fn truncated_normal_check(seed: u64) -> CheckOutcome {
    let k = StandardizationConstants::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut inside = true;
    for _ in 0..DRAWS {
        let z = truncated_normal(&mut rng, k.a);
        inside &= z.abs() < k.a;
        s1 += z;
        s2 += z * z;
    }
    let mean = s1 / DRAWS as f64;
    let var = s2 / DRAWS as f64 - mean * mean;
    let pass = inside && mean.abs() <= 3.0 * k.b / 1000.0 && (var - k.b2).abs() <= 0.005;
    outcome("truncated normal moments", pass, format!("mean {mean:.5}, variance {var:.5} vs {:.5}", k.b2))
}

fn true_mu1_checks(seed: u64) -> Vec<CheckOutcome> {
    (1..=2u8)
        .map(|config| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed + u64::from(config));
            let mc = logistic_mu1_monte_carlo(config, DRAWS, &mut rng);
            let target = LOGISTIC_TRUE_MU1[usize::from(config - 1)];
            outcome(
                format!("true mu1, logistic outcome configuration {config}"),
                (mc - target).abs() <= 2e-3,
                format!("Monte Carlo {mc:.6} vs {target}"),
            )
        })
        .collect()
}

/// Runs the battery against the library's own loss evaluator.
pub fn run_checks(opts: CheckOptions) -> CheckReport {
    run_checks_with(opts, &losses::evaluate)
}

/// Runs the battery with a substitute loss evaluator for the gradient
/// checks.
pub fn run_checks_with(opts: CheckOptions, evaluator: &Evaluator) -> CheckReport {
    let mut checks = gradient_checks(evaluator, opts.seed);
    checks.extend(kkt_checks(opts.seed + 10));
    checks.extend(constant_checks());
    if !opts.quick {
        checks.push(truncated_normal_check(opts.seed + 20));
        checks.extend(true_mu1_checks(opts.seed + 30));
    }
    CheckReport { pass: checks.iter().all(|c| c.pass), checks }
}
