//! Lasso-penalized minimization `loss(θ) + λ‖θ_{1:p}‖₁` with an unpenalized
//! intercept.
//!
//! Each outer iteration builds the quadratic model of the loss from its
//! gradient and curvature weights, minimizes the penalized model by
//! active-set coordinate descent, and backtracks along the resulting
//! direction until the true penalized objective shows sufficient decrease.
//! Iteration stops once the KKT conditions hold at `kkt_tol`.

use serde::{Deserialize, Serialize};

use crate::dataset::{ObservedData, RegressorBasis};
use crate::error::{Error, Result};
use crate::losses::{LossKind, PreparedLoss};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub kkt_tol: f64,
    pub max_outer: usize,
    /// Cap on coordinate-descent sweeps per quadratic subproblem.
    pub max_inner: usize,
    pub line_search_shrink: f64,
    pub min_step: f64,
    /// A logit-scale linear predictor beyond this magnitude on any row stops
    /// the fit as diverged.
    pub max_abs_logit: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            max_outer: 200,
            max_inner: 500,
            line_search_shrink: 0.5,
            min_step: 1e-10,
            max_abs_logit: 50.0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.kkt_tol > 0.0
            && self.max_outer > 0
            && self.max_inner > 0
            && self.line_search_shrink > 0.0
            && self.line_search_shrink < 1.0
            && self.min_step > 0.0
            && self.max_abs_logit > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid solver options {self:?}")))
        }
    }
}

/// Outcome of a KKT check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub pass: bool,
    pub tol: f64,
    pub lambda: f64,
    /// `|∂ℓ/∂θ_j|` for every coordinate.
    pub gradient_abs: Vec<f64>,
    /// Amount by which each coordinate exceeds its bound (`<= 0` when the
    /// condition holds): `|g_0| - tol` for the intercept, `|g_j| - λ - tol`
    /// for zero slopes and `|g_j + λ sign(θ_j)| - tol` for nonzero ones.
    pub excess: Vec<f64>,
    /// Slope coordinate with the largest excess (0 if `p = 0`).
    pub tightest: usize,
    /// Coordinates violating their condition.
    pub violations: Vec<usize>,
}

impl KktReport {
    pub fn from_gradient(gradient: &[f64], coef: &[f64], lambda: f64, tol: f64) -> Self {
        let mut excess = Vec::with_capacity(gradient.len());
        for (j, (&g, &c)) in gradient.iter().zip(coef).enumerate() {
            let e = if j == 0 {
                g.abs() - tol
            } else if c == 0.0 {
                g.abs() - lambda - tol
            } else {
                (g + lambda * c.signum()).abs() - tol
            };
            excess.push(e);
        }
        let violations: Vec<usize> = (0..excess.len()).filter(|&j| excess[j] > 0.0 || excess[j].is_nan()).collect();
        let tightest = (1..excess.len()).max_by(|&a, &b| excess[a].total_cmp(&excess[b])).unwrap_or(0);
        Self {
            pass: violations.is_empty(),
            tol,
            lambda,
            gradient_abs: gradient.iter().map(|g| g.abs()).collect(),
            excess,
            tightest,
            violations,
        }
    }

    pub fn max_excess(&self) -> f64 {
        self.excess.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// A penalized fit at one λ.
#[derive(Debug, Clone, PartialEq)]
pub struct PenalizedFit {
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub loss_kind: LossKind,
    /// Penalized objective at `coefficients`.
    pub objective: f64,
    pub loss_value: f64,
    /// Indices `j >= 1` with a nonzero coefficient.
    pub active_set: Vec<usize>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// The iterates left the representable range, typically because the
    /// penalized loss has no finite minimizer at this λ.
    pub diverged: bool,
    pub kkt_report: KktReport,
    /// Penalized objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
}

const POLISH: f64 = 1e-2;
const POLISH_STEPS: usize = 3;
/// Consecutive iterations beyond `max_abs_logit` before a fit is declared
/// diverged.
const DIVERGENCE_STEPS: usize = 3;

fn l1_slopes(coef: &[f64]) -> f64 {
    coef.iter().skip(1).map(|c| c.abs()).sum()
}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Minimizes `gᵀ(θ-θ₀) + ½(θ-θ₀)ᵀ(H+νI)(θ-θ₀) + λ‖θ_{1:p}‖₁` by coordinate
/// descent, cycling over the active set between full sweeps.
fn solve_quadratic(
    basis: &RegressorBasis,
    gradient: &[f64],
    omega: &[f64],
    theta0: &[f64],
    lambda: f64,
    inner_tol: f64,
    opts: &SolverOptions,
) -> Vec<f64> {
    let n = basis.n();
    let m = basis.dim();
    let inv_n = 1.0 / n as f64;
    let rows: Vec<usize> = (0..n).filter(|&i| omega[i] != 0.0).collect();
    let mut diag: Vec<f64> = (0..m)
        .map(|j| {
            let f = basis.column(j);
            inv_n * rows.iter().map(|&i| omega[i] * f[i] * f[i]).sum::<f64>()
        })
        .collect();
    let max_diag = diag.iter().copied().fold(0.0, f64::max);
    let ridge = 1e-9 * max_diag.max(1e-6);
    for d in &mut diag {
        *d += ridge;
    }

    let mut theta = theta0.to_vec();
    // u = F (θ - θ₀), only needed on rows with positive curvature.
    let mut u = vec![0.0; n];

    let update = |j: usize, theta: &mut [f64], u: &mut [f64]| -> f64 {
        let f = basis.column(j);
        let cross: f64 = rows.iter().map(|&i| omega[i] * f[i] * u[i]).sum::<f64>() * inv_n;
        let model_grad = gradient[j] + cross + ridge * (theta[j] - theta0[j]);
        let a = diag[j];
        let new =
            if j == 0 { theta[j] - model_grad / a } else { soft_threshold(a * theta[j] - model_grad, lambda) / a };
        let delta = new - theta[j];
        if delta != 0.0 {
            theta[j] = new;
            for &i in &rows {
                u[i] += delta * f[i];
            }
        }
        a * delta.abs()
    };

    let mut sweeps = 0;
    'outer: loop {
        let mut max_change: f64 = 0.0;
        for j in 0..m {
            max_change = max_change.max(update(j, &mut theta, &mut u));
        }
        sweeps += 1;
        if max_change <= inner_tol || sweeps >= opts.max_inner {
            break;
        }
        let active: Vec<usize> = (0..m).filter(|&j| j == 0 || theta[j] != 0.0).collect();
        loop {
            let mut max_change: f64 = 0.0;
            for &j in &active {
                max_change = max_change.max(update(j, &mut theta, &mut u));
            }
            sweeps += 1;
            if sweeps >= opts.max_inner {
                break 'outer;
            }
            if max_change <= inner_tol {
                break;
            }
        }
    }
    theta
}

fn default_start(prep: &PreparedLoss, dim: usize) -> Vec<f64> {
    let mut theta = vec![0.0; dim];
    theta[0] = prep.intercept_start();
    theta
}

pub(crate) fn fit_prepared(
    prep: &PreparedLoss,
    kind: &LossKind,
    basis: &RegressorBasis,
    lambda: f64,
    init: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<PenalizedFit> {
    opts.validate()?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let m = basis.dim();
    let mut theta = match init {
        Some(c) if c.len() != m => return Err(Error::DimensionMismatch { expected: m, got: c.len() }),
        Some(c) => c.to_vec(),
        None => default_start(prep, m),
    };

    let mut eta = basis.linear_predictor(&theta);
    let (mut value, mut r, mut omega) = prep.derivatives(&eta);
    if !value.is_finite() || r.iter().chain(&omega).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{} at the starting point", prep.label())));
    }
    let mut gradient = basis.mean_transpose_product(&r);
    let mut objective = value + lambda * l1_slopes(&theta);
    let mut trace = vec![objective];
    let mut kkt = KktReport::from_gradient(&gradient, &theta, lambda, opts.kkt_tol);
    let mut iterations = 0;
    // Once the certificate passes, a few more steps tighten the solution to
    // POLISH·kkt_tol so that fits reached from different starts agree.
    let mut polish_left = POLISH_STEPS;
    let logit_scale = kind.is_propensity() || kind.outcome_link() == Some(crate::losses::Link::Logistic);
    let mut diverged = false;
    let mut outside = 0;
    let polished = |g: &[f64], c: &[f64]| KktReport::from_gradient(g, c, lambda, POLISH * opts.kkt_tol).pass;

    while iterations < opts.max_outer && !polished(&gradient, &theta) {
        if kkt.pass {
            if polish_left == 0 {
                break;
            }
            polish_left -= 1;
        }
        iterations += 1;
        let violation = (kkt.max_excess() + opts.kkt_tol).max(0.0);
        let inner_tol = (1e-2 * violation).clamp(1e-2 * POLISH * opts.kkt_tol, 1e-4);
        let target = solve_quadratic(basis, &gradient, &omega, &theta, lambda, inner_tol, opts);
        let direction: Vec<f64> = target.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let decrease = gradient.iter().zip(&direction).map(|(g, d)| g * d).sum::<f64>()
            + lambda * (l1_slopes(&target) - l1_slopes(&theta));
        if !(decrease < 0.0) {
            break;
        }
        let mut f_dir = vec![0.0; basis.n()];
        basis.add_linear_predictor(&direction, &mut f_dir);

        let roundoff = 4.0 * f64::EPSILON * objective.abs();
        let mut step = 1.0;
        let mut accepted = None;
        while step >= opts.min_step {
            let candidate: Vec<f64> = if step == 1.0 {
                target.clone()
            } else {
                theta.iter().zip(&direction).map(|(t, d)| t + step * d).collect()
            };
            let eta_c: Vec<f64> = eta.iter().zip(&f_dir).map(|(e, d)| e + step * d).collect();
            let obj_c = prep.value(&eta_c) + lambda * l1_slopes(&candidate);
            if obj_c.is_finite() && obj_c <= objective + 1e-4 * step * decrease + roundoff {
                accepted = Some(candidate);
                break;
            }
            step *= opts.line_search_shrink;
        }
        let Some(next) = accepted else { break };

        let eta_next = basis.linear_predictor(&next);
        let (v, rr, oo) = prep.derivatives(&eta_next);
        let obj_next = v + lambda * l1_slopes(&next);
        // Recomputing η from scratch can differ from the incremental update
        // in the last bits; keep the iterate only if it still descends.
        if !obj_next.is_finite() || obj_next > objective {
            break;
        }
        eta = eta_next;
        theta = next;
        value = v;
        r = rr;
        omega = oo;
        objective = obj_next;
        trace.push(objective);
        gradient = basis.mean_transpose_product(&r);
        kkt = KktReport::from_gradient(&gradient, &theta, lambda, opts.kkt_tol);
        if logit_scale && eta.iter().any(|e| e.abs() > opts.max_abs_logit) {
            outside += 1;
            if outside >= DIVERGENCE_STEPS {
                diverged = true;
                break;
            }
        } else {
            outside = 0;
        }
    }

    let active_set = (1..m).filter(|&j| theta[j] != 0.0).collect();
    Ok(PenalizedFit {
        converged: kkt.pass && !diverged,
        diverged,
        coefficients: theta,
        lambda,
        loss_kind: kind.clone(),
        objective,
        loss_value: value,
        active_set,
        outer_iterations: iterations,
        kkt_report: kkt,
        objective_trace: trace,
    })
}

/// Minimizes the penalized loss at a single λ. Starts from `init` when
/// given, otherwise from zero slopes and the intercept-only stationary
/// intercept.
pub fn fit_penalized(
    kind: &LossKind,
    basis: &RegressorBasis,
    data: &ObservedData,
    lambda: f64,
    init: Option<&[f64]>,
    opts: &SolverOptions,
) -> Result<PenalizedFit> {
    let prep = PreparedLoss::new(kind, basis, data)?;
    fit_prepared(&prep, kind, basis, lambda, init, opts)
}

/// Re-evaluates the loss gradient at `fit` and checks the KKT conditions.
pub fn check_kkt(
    fit: &PenalizedFit,
    kind: &LossKind,
    basis: &RegressorBasis,
    data: &ObservedData,
    tol: f64,
) -> Result<KktReport> {
    let eval = crate::losses::evaluate(kind, &fit.coefficients, basis, data)?;
    Ok(KktReport::from_gradient(&eval.gradient, &fit.coefficients, fit.lambda, tol))
}

/// Fits along a strictly descending λ grid, warm-starting each point from
/// the last converged fit. Per-point failures are returned in place; after a
/// diverged fit the penalized loss is unbounded at every smaller λ, so the
/// remaining points are reported as [`Error::PathTruncated`].
pub fn fit_path(
    kind: &LossKind,
    basis: &RegressorBasis,
    data: &ObservedData,
    lambdas: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<Result<PenalizedFit>>> {
    let prep = PreparedLoss::new(kind, basis, data)?;
    path_prepared(&prep, kind, basis, lambdas, opts)
}

pub(crate) fn path_prepared(
    prep: &PreparedLoss,
    kind: &LossKind,
    basis: &RegressorBasis,
    lambdas: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<Result<PenalizedFit>>> {
    if lambdas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("lambda grid must be strictly descending".into()));
    }
    let mut out: Vec<Result<PenalizedFit>> = Vec::with_capacity(lambdas.len());
    let mut warm: Option<Vec<f64>> = None;
    let mut diverged = false;
    for &lambda in lambdas {
        if diverged {
            out.push(Err(Error::PathTruncated { lambda }));
            continue;
        }
        let fit = fit_prepared(prep, kind, basis, lambda, warm.as_deref(), opts);
        if let Ok(f) = &fit {
            diverged = f.diverged;
            if f.converged {
                warm = Some(f.coefficients.clone());
            }
        }
        out.push(fit);
    }
    Ok(out)
}
