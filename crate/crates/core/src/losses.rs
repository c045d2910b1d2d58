//! Convex losses for the propensity score (PS) and outcome regression (OR)
//! coefficients.
//!
//! Every loss is a sample average `Ẽ[ℓ_i(η_i)]` over all `n` rows of a
//! per-row function of the linear predictor `η_i = θᵀf(X_i)`, so the value,
//! gradient `Ẽ[ℓ_i'(η_i) f(X_i)]` and curvature weights `ω_i = ℓ_i''(η_i)`
//! share one implementation. Rows outside the loss's arm simply carry weight
//! zero.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{ObservedData, RegressorBasis};
use crate::error::{Error, Result};

/// Which potential-outcome arm a fit targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Treated,
    Untreated,
}

impl Arm {
    /// Indicator of membership in this arm for a treatment value.
    pub fn indicator(self, t: u8) -> f64 {
        match self {
            Arm::Treated => t as f64,
            Arm::Untreated => (1 - t) as f64,
        }
    }
}

/// Inverse link of the outcome model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Logistic,
}

impl Link {
    /// `ψ(u)`, the fitted mean.
    pub fn mean(self, u: f64) -> f64 {
        match self {
            Link::Identity => u,
            Link::Logistic => expit(u),
        }
    }

    /// `Ψ(u) = ∫₀ᵘ ψ`.
    pub fn cumulant(self, u: f64) -> f64 {
        match self {
            Link::Identity => 0.5 * u * u,
            Link::Logistic => log1p_exp(u),
        }
    }

    /// `ψ₂(u) = ψ'(u)`.
    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Link::Identity => 1.0,
            Link::Logistic => {
                let p = expit(u);
                p * (1.0 - p)
            }
        }
    }
}

pub fn expit(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + eᵘ)` without overflow.
pub fn log1p_exp(u: f64) -> f64 {
    if u > 35.0 {
        u + (-u).exp()
    } else {
        u.exp().ln_1p()
    }
}

/// The penalizable losses. Weighted variants hold the companion fit's
/// coefficients, which stay fixed for the life of the loss.
#[derive(Debug, Clone, PartialEq)]
pub enum LossKind {
    /// Logistic negative log-likelihood for the PS.
    MlPs,
    /// Calibration loss for the PS of the given arm.
    CalPs { arm: Arm },
    /// Negative quasi-likelihood for the OR on the arm's rows.
    MlOr { link: Link, arm: Arm },
    /// OR likelihood weighted by `(1-π̂)/π̂` (treated) or `π̂/(1-π̂)`
    /// (untreated) from a calibrated PS fit.
    WlOr { link: Link, arm: Arm, ps_coef: Arc<[f64]> },
    /// Calibration loss weighted by `ψ₂(α̂ᵀf)` from an OR fit.
    WcalPs { link: Link, or_coef: Arc<[f64]> },
}

impl LossKind {
    pub fn label(&self) -> String {
        let link = |l: &Link| match l {
            Link::Identity => "identity",
            Link::Logistic => "logistic",
        };
        let arm = |a: &Arm| match a {
            Arm::Treated => 1,
            Arm::Untreated => 0,
        };
        match self {
            LossKind::MlPs => "ML_PS".into(),
            LossKind::CalPs { arm: a } => format!("CAL_PS_{}", arm(a)),
            LossKind::MlOr { link: l, arm: a } => format!("ML_OR_{}({})", arm(a), link(l)),
            LossKind::WlOr { link: l, arm: a, .. } => format!("WL_OR_{}({})", arm(a), link(l)),
            LossKind::WcalPs { link: l, .. } => format!("WCAL_PS({})", link(l)),
        }
    }

    /// The arm the loss is tied to, if any (`MlPs` serves both).
    pub fn arm(&self) -> Option<Arm> {
        match self {
            LossKind::MlPs => None,
            LossKind::CalPs { arm } | LossKind::MlOr { arm, .. } | LossKind::WlOr { arm, .. } => Some(*arm),
            LossKind::WcalPs { .. } => Some(Arm::Treated),
        }
    }

    pub fn is_propensity(&self) -> bool {
        matches!(self, LossKind::MlPs | LossKind::CalPs { .. } | LossKind::WcalPs { .. })
    }

    /// Link of the outcome model for OR losses.
    pub fn outcome_link(&self) -> Option<Link> {
        match self {
            LossKind::MlOr { link, .. } | LossKind::WlOr { link, .. } => Some(*link),
            _ => None,
        }
    }
}

/// Loss value, gradient and per-row curvature weights at one coefficient
/// vector. The Gauss/Fisher Hessian is `Ẽ[ω_i f(X_i) f(X_i)ᵀ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub curvature_weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Family {
    /// `w (log(1+eᵑ) - s η)`
    Logistic,
    /// `w (η²/2 - s η)`
    Gaussian,
    /// `w (s e^{-ση} + (1-s) ση)`
    Calibration { sign: f64 },
}

/// A loss bound to a particular basis and data set: per-row weights `w_i`
/// and targets `s_i` with a shared functional form.
#[derive(Debug, Clone)]
pub(crate) struct PreparedLoss {
    family: Family,
    weight: Vec<f64>,
    target: Vec<f64>,
    label: String,
}

impl PreparedLoss {
    pub(crate) fn new(kind: &LossKind, basis: &RegressorBasis, data: &ObservedData) -> Result<Self> {
        let n = data.n();
        if basis.n() != n {
            return Err(Error::DimensionMismatch { expected: n, got: basis.n() });
        }
        let t = data.treatment();
        let label = kind.label();
        let family_of = |link: Link| match link {
            Link::Identity => Family::Gaussian,
            Link::Logistic => Family::Logistic,
        };
        let outcome_targets = |weight: &[f64]| -> Result<Vec<f64>> {
            (0..n).map(|i| if weight[i] != 0.0 { data.require_outcome(i) } else { Ok(0.0) }).collect()
        };
        let companion = |coef: &[f64]| -> Result<Vec<f64>> {
            if coef.len() != basis.dim() {
                return Err(Error::DimensionMismatch { expected: basis.dim(), got: coef.len() });
            }
            Ok(basis.linear_predictor(coef))
        };
        let (family, weight, target) = match kind {
            LossKind::MlPs => (Family::Logistic, vec![1.0; n], t.iter().map(|&t| t as f64).collect()),
            LossKind::CalPs { arm } => {
                let sign = match arm {
                    Arm::Treated => 1.0,
                    Arm::Untreated => -1.0,
                };
                let target = t.iter().map(|&ti| arm.indicator(ti)).collect();
                (Family::Calibration { sign }, vec![1.0; n], target)
            }
            LossKind::MlOr { link, arm } => {
                let weight: Vec<f64> = t.iter().map(|&ti| arm.indicator(ti)).collect();
                let target = outcome_targets(&weight)?;
                (family_of(*link), weight, target)
            }
            LossKind::WlOr { link, arm, ps_coef } => {
                let eta = companion(ps_coef)?;
                let mut weight = Vec::with_capacity(n);
                for i in 0..n {
                    let a = arm.indicator(t[i]);
                    let w = if a == 0.0 {
                        0.0
                    } else {
                        match arm {
                            Arm::Treated => (-eta[i]).exp(),
                            Arm::Untreated => eta[i].exp(),
                        }
                    };
                    if !w.is_finite() {
                        return Err(Error::NonFinite(format!("{label} weight on row {}", i + 1)));
                    }
                    weight.push(w);
                }
                let target = outcome_targets(&weight)?;
                (family_of(*link), weight, target)
            }
            LossKind::WcalPs { link, or_coef } => {
                let eta = companion(or_coef)?;
                let weight = eta.iter().map(|&u| link.derivative(u)).collect();
                (Family::Calibration { sign: 1.0 }, weight, t.iter().map(|&t| t as f64).collect())
            }
        };
        Ok(Self { family, weight, target, label })
    }

    pub(crate) fn label(&self) -> &str {
        &self.label
    }

    /// `Ẽ[ℓ_i(η_i)]`.
    pub(crate) fn value(&self, eta: &[f64]) -> f64 {
        let mut sum = 0.0;
        for i in 0..eta.len() {
            let w = self.weight[i];
            if w == 0.0 {
                continue;
            }
            let (s, u) = (self.target[i], eta[i]);
            sum += w * match self.family {
                Family::Logistic => log1p_exp(u) - s * u,
                Family::Gaussian => 0.5 * u * u - s * u,
                Family::Calibration { sign } => {
                    let v = sign * u;
                    if s == 1.0 {
                        (-v).exp()
                    } else if s == 0.0 {
                        v
                    } else {
                        s * (-v).exp() + (1.0 - s) * v
                    }
                }
            };
        }
        sum / eta.len() as f64
    }

    /// Value plus per-row first (`r_i`) and second (`ω_i`) derivatives in η.
    pub(crate) fn derivatives(&self, eta: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let n = eta.len();
        let mut r = vec![0.0; n];
        let mut omega = vec![0.0; n];
        for i in 0..n {
            let w = self.weight[i];
            if w == 0.0 {
                continue;
            }
            let (s, u) = (self.target[i], eta[i]);
            match self.family {
                Family::Logistic => {
                    let p = expit(u);
                    r[i] = w * (p - s);
                    omega[i] = w * p * (1.0 - p);
                }
                Family::Gaussian => {
                    r[i] = w * (u - s);
                    omega[i] = w;
                }
                Family::Calibration { sign } => {
                    let v = sign * u;
                    let e = if s != 0.0 { s * (-v).exp() } else { 0.0 };
                    r[i] = sign * (w * ((1.0 - s) - e));
                    omega[i] = w * e;
                }
            }
        }
        (self.value(eta), r, omega)
    }

    pub(crate) fn evaluate(&self, basis: &RegressorBasis, coef: &[f64]) -> Result<LossEval> {
        if coef.len() != basis.dim() {
            return Err(Error::DimensionMismatch { expected: basis.dim(), got: coef.len() });
        }
        let eta = basis.linear_predictor(coef);
        let (value, r, omega) = self.derivatives(&eta);
        if !value.is_finite() || r.iter().chain(&omega).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(self.label.clone()));
        }
        Ok(LossEval { value, gradient: basis.mean_transpose_product(&r), curvature_weights: omega })
    }

    /// Intercept at which the intercept-only loss is stationary.
    pub(crate) fn intercept_start(&self) -> f64 {
        let (mut sw, mut sws) = (0.0, 0.0);
        for (w, s) in self.weight.iter().zip(&self.target) {
            sw += w;
            sws += w * s;
        }
        match self.family {
            Family::Gaussian => {
                if sw > 0.0 {
                    sws / sw
                } else {
                    0.0
                }
            }
            Family::Logistic => {
                let m = if sw > 0.0 { sws / sw } else { 0.5 };
                let m = m.clamp(1e-10, 1.0 - 1e-10);
                (m / (1.0 - m)).ln()
            }
            Family::Calibration { sign } => {
                let ratio = sws / (sw - sws);
                if ratio.is_finite() && ratio > 0.0 {
                    sign * ratio.ln()
                } else {
                    0.0
                }
            }
        }
    }
}

/// Evaluates any loss kind at `coef`.
pub fn evaluate(kind: &LossKind, coef: &[f64], basis: &RegressorBasis, data: &ObservedData) -> Result<LossEval> {
    PreparedLoss::new(kind, basis, data)?.evaluate(basis, coef)
}

/// Logistic negative log-likelihood `Ẽ[log(1+e^{γᵀf}) - T γᵀf]`.
pub fn eval_ml_ps(gamma: &[f64], basis: &RegressorBasis, data: &ObservedData) -> Result<LossEval> {
    evaluate(&LossKind::MlPs, gamma, basis, data)
}

/// Calibration loss `Ẽ[T e^{-γᵀf} + (1-T) γᵀf]` (treated) or its mirror
/// `Ẽ[(1-T) e^{γᵀf} - T γᵀf]` (untreated).
pub fn eval_cal_ps(gamma: &[f64], basis: &RegressorBasis, data: &ObservedData, arm: Arm) -> Result<LossEval> {
    evaluate(&LossKind::CalPs { arm }, gamma, basis, data)
}

pub fn eval_ml_or(
    alpha: &[f64],
    basis: &RegressorBasis,
    data: &ObservedData,
    link: Link,
    arm: Arm,
) -> Result<LossEval> {
    evaluate(&LossKind::MlOr { link, arm }, alpha, basis, data)
}

pub fn eval_wl_or(
    alpha: &[f64],
    basis: &RegressorBasis,
    data: &ObservedData,
    link: Link,
    arm: Arm,
    ps_coef: &[f64],
) -> Result<LossEval> {
    evaluate(&LossKind::WlOr { link, arm, ps_coef: ps_coef.into() }, alpha, basis, data)
}

pub fn eval_wcal_ps(
    gamma: &[f64],
    basis: &RegressorBasis,
    data: &ObservedData,
    or_coef: &[f64],
    link: Link,
) -> Result<LossEval> {
    evaluate(&LossKind::WcalPs { link, or_coef: or_coef.into() }, gamma, basis, data)
}

/// Symmetrized Bregman divergence of the weighted likelihood loss between
/// two OR coefficient vectors:
/// `Ẽ[A w(X;γ̂) {ψ(h'(X)) - ψ(h(X))} {h'(X) - h(X)}]`.
pub fn symmetrized_bregman_wl(
    alpha_a: &[f64],
    alpha_b: &[f64],
    basis: &RegressorBasis,
    data: &ObservedData,
    link: Link,
    arm: Arm,
    ps_coef: &[f64],
) -> Result<f64> {
    let prep = PreparedLoss::new(&LossKind::WlOr { link, arm, ps_coef: ps_coef.into() }, basis, data)?;
    let ha = basis.linear_predictor(alpha_a);
    let hb = basis.linear_predictor(alpha_b);
    let sum: f64 =
        (0..basis.n()).map(|i| prep.weight[i] * (link.mean(ha[i]) - link.mean(hb[i])) * (ha[i] - hb[i])).sum();
    Ok(sum / basis.n() as f64)
}
