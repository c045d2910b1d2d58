//! Point estimates, influence-function variances and Wald intervals built
//! from fitted propensity-score and outcome-regression coefficients.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{ObservedData, RegressorBasis};
use crate::error::{Error, Result};
use crate::losses::{expit, Arm, Link, LossKind};
use crate::normal;
use crate::solver::PenalizedFit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Mu1,
    Mu0,
    Ate,
    Nu0,
    Nu1,
    Att,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::Mu1 => "mu1",
            Target::Mu0 => "mu0",
            Target::Ate => "ate",
            Target::Nu0 => "nu0",
            Target::Nu1 => "nu1",
            Target::Att => "att",
        })
    }
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mu1" => Ok(Target::Mu1),
            "mu0" => Ok(Target::Mu0),
            "ate" => Ok(Target::Ate),
            "nu0" => Ok(Target::Nu0),
            "nu1" => Ok(Target::Nu1),
            "att" => Ok(Target::Att),
            _ => Err(Error::InvalidArgument(format!("unknown target `{s}`"))),
        }
    }
}

/// A point estimate with its influence-function variance and Wald interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Estimate {
    pub target: Target,
    pub method: String,
    pub point: f64,
    /// `V̂`, the sample second moment of the centered influence values.
    pub v_hat: f64,
    pub n: usize,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
    /// Centered per-row influence values; `V̂` is their mean square.
    #[serde(skip)]
    pub influence: Vec<f64>,
}

impl Estimate {
    /// Builds an estimate from centered influence values.
    pub fn from_influence(
        target: Target,
        method: impl Into<String>,
        point: f64,
        influence: Vec<f64>,
        level: f64,
    ) -> Result<Self> {
        check_level(level)?;
        let n = influence.len();
        let v_hat = influence.iter().map(|v| v * v).sum::<f64>() / n as f64;
        if !point.is_finite() || !v_hat.is_finite() {
            return Err(Error::NonFinite(format!("{target} estimate")));
        }
        let se = (v_hat / n as f64).sqrt();
        let z = normal::two_sided_critical(level);
        Ok(Self {
            target,
            method: method.into(),
            point,
            v_hat,
            n,
            se,
            ci_low: point - z * se,
            ci_high: point + z * se,
            level,
            influence,
        })
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("confidence level must lie in (0, 1), got {level}")))
    }
}

/// `TY/π̂ − (T/π̂ − 1)m̂`. `y` is ignored when `t = 0`.
pub fn influence_phi(y: f64, t: u8, m_hat: f64, pi_hat: f64) -> Result<f64> {
    if !(pi_hat > 0.0) {
        return Err(Error::InvalidArgument(format!("propensity must be positive, got {pi_hat}")));
    }
    if t == 1 {
        Ok(y / pi_hat - (1.0 / pi_hat - 1.0) * m_hat)
    } else {
        Ok(m_hat)
    }
}

/// Short tag for a PS loss (`RCAL`, `RML`).
fn ps_tag(kind: &LossKind) -> &'static str {
    match kind {
        LossKind::MlPs => "RML",
        LossKind::CalPs { .. } | LossKind::WcalPs { .. } => "RCAL",
        _ => "?",
    }
}

fn or_tag(kind: &LossKind) -> &'static str {
    match kind {
        LossKind::MlOr { .. } => "RML",
        LossKind::WlOr { .. } => "RWL",
        _ => "?",
    }
}

/// Probability of membership in `arm` given the PS linear predictor
/// `η = γᵀf`, with `π = expit(η) = P(T=1|X)`.
fn arm_probability(arm: Arm, eta: f64) -> f64 {
    match arm {
        Arm::Treated => expit(eta),
        Arm::Untreated => expit(-eta),
    }
}

/// A PS fit and an OR fit for the same arm, with their fitted values on
/// every row.
#[derive(Debug, Clone)]
pub struct FittedNuisances {
    pub ps_fit: PenalizedFit,
    pub or_fit: PenalizedFit,
    pub arm: Arm,
    pub link: Link,
    ps_eta: Vec<f64>,
    m_hat: Vec<f64>,
}

impl FittedNuisances {
    pub fn new(ps_fit: PenalizedFit, or_fit: PenalizedFit, basis: &RegressorBasis) -> Result<Self> {
        if !ps_fit.loss_kind.is_propensity() {
            return Err(Error::InvalidArgument(format!("{} is not a propensity-score loss", ps_fit.loss_kind.label())));
        }
        let Some(link) = or_fit.loss_kind.outcome_link() else {
            return Err(Error::InvalidArgument(format!(
                "{} is not an outcome-regression loss",
                or_fit.loss_kind.label()
            )));
        };
        let arm = or_fit.loss_kind.arm().expect("outcome losses carry an arm");
        if let (LossKind::CalPs { .. } | LossKind::WcalPs { .. }, Some(ps_arm)) =
            (&ps_fit.loss_kind, ps_fit.loss_kind.arm())
        {
            if ps_arm != arm {
                return Err(Error::InvalidArgument(format!(
                    "{} and {} target different arms",
                    ps_fit.loss_kind.label(),
                    or_fit.loss_kind.label()
                )));
            }
        }
        for fit in [&ps_fit, &or_fit] {
            if fit.coefficients.len() != basis.dim() {
                return Err(Error::DimensionMismatch { expected: basis.dim(), got: fit.coefficients.len() });
            }
        }
        let ps_eta = basis.linear_predictor(&ps_fit.coefficients);
        let m_hat = basis.linear_predictor(&or_fit.coefficients).into_iter().map(|u| link.mean(u)).collect();
        Ok(Self { ps_fit, or_fit, arm, link, ps_eta, m_hat })
    }

    /// `RCAL.RWL`, `RML.RML`, ...
    pub fn method_tag(&self) -> String {
        format!("{}.{}", ps_tag(&self.ps_fit.loss_kind), or_tag(&self.or_fit.loss_kind))
    }

    /// Fitted `P(T=1|X_i)`.
    pub fn propensity(&self) -> Vec<f64> {
        self.ps_eta.iter().map(|&e| expit(e)).collect()
    }

    /// Fitted `m̂(X_i)` for the arm.
    pub fn outcome_fit(&self) -> &[f64] {
        &self.m_hat
    }

    /// Per-row `φ` for the arm: `AY/p̂ − (A/p̂ − 1)m̂` with `A` the arm
    /// indicator and `p̂` the fitted probability of the arm.
    pub fn phi(&self, data: &ObservedData) -> Result<Vec<f64>> {
        self.check_rows(data)?;
        let t = data.treatment();
        let mut out = Vec::with_capacity(data.n());
        for i in 0..data.n() {
            if self.arm.indicator(t[i]) == 0.0 {
                out.push(self.m_hat[i]);
                continue;
            }
            let p = arm_probability(self.arm, self.ps_eta[i]);
            if !(p > 0.0) {
                return Err(Error::DegenerateWeight { row: i + 1, value: p });
            }
            out.push(influence_phi(data.require_outcome(i)?, 1, self.m_hat[i], p)?);
        }
        Ok(out)
    }

    /// `Ẽ[AY + (1−A)m̂]`, the linear-prediction form of the estimator.
    pub fn prediction_form(&self, data: &ObservedData) -> Result<f64> {
        self.check_rows(data)?;
        let t = data.treatment();
        let mut sum = 0.0;
        for i in 0..data.n() {
            sum += if self.arm.indicator(t[i]) == 1.0 { data.require_outcome(i)? } else { self.m_hat[i] };
        }
        Ok(sum / data.n() as f64)
    }

    /// Closed range of `{Y_i : A_i = 1} ∪ {m̂(X_i) : A_i = 0}`.
    pub fn prediction_range(&self, data: &ObservedData) -> Result<(f64, f64)> {
        self.check_rows(data)?;
        let t = data.treatment();
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..data.n() {
            let v = if self.arm.indicator(t[i]) == 1.0 { data.require_outcome(i)? } else { self.m_hat[i] };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok((lo, hi))
    }

    fn check_rows(&self, data: &ObservedData) -> Result<()> {
        if data.n() != self.m_hat.len() {
            return Err(Error::DimensionMismatch { expected: self.m_hat.len(), got: data.n() });
        }
        Ok(())
    }
}

fn aipw_arm(nuis: &FittedNuisances, data: &ObservedData, level: f64, target: Target) -> Result<Estimate> {
    let phi = nuis.phi(data)?;
    let point = mean(&phi);
    let influence = phi.iter().map(|v| v - point).collect();
    Estimate::from_influence(target, nuis.method_tag(), point, influence, level)
}

fn require_arm(nuis: &FittedNuisances, arm: Arm) -> Result<()> {
    if nuis.arm == arm {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("fits target the {:?} arm, expected {arm:?}", nuis.arm)))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `μ̂¹ = Ẽ[φ(Y, T, X; m̂¹, π̂¹)]`.
pub fn aipw_mu1(nuis: &FittedNuisances, data: &ObservedData, level: f64) -> Result<Estimate> {
    require_arm(nuis, Arm::Treated)?;
    aipw_arm(nuis, data, level, Target::Mu1)
}

/// `μ̂⁰ = Ẽ[φ(Y, 1−T, X; m̂⁰, 1−π̂⁰)]`.
pub fn aipw_mu0(nuis: &FittedNuisances, data: &ObservedData, level: f64) -> Result<Estimate> {
    require_arm(nuis, Arm::Untreated)?;
    aipw_arm(nuis, data, level, Target::Mu0)
}

/// Difference of two arm estimates, with the variance of the difference of
/// their influence values.
pub fn difference(target: Target, treated: &Estimate, untreated: &Estimate, level: f64) -> Result<Estimate> {
    if treated.n != untreated.n {
        return Err(Error::DimensionMismatch { expected: treated.n, got: untreated.n });
    }
    let influence = treated.influence.iter().zip(&untreated.influence).map(|(a, b)| a - b).collect();
    let method = if treated.method == untreated.method {
        treated.method.clone()
    } else {
        format!("{}-{}", treated.method, untreated.method)
    };
    Estimate::from_influence(target, method, treated.point - untreated.point, influence, level)
}

/// `μ̂¹ − μ̂⁰`.
pub fn ate(nuis1: &FittedNuisances, nuis0: &FittedNuisances, data: &ObservedData, level: f64) -> Result<Estimate> {
    let mu1 = aipw_mu1(nuis1, data, level)?;
    let mu0 = aipw_mu0(nuis0, data, level)?;
    difference(Target::Ate, &mu1, &mu0, level)
}

/// `(1−T)π̂Y/(1−π̂) − ((1−T)/(1−π̂) − 1)m̂⁰` per row, from untreated-arm fits.
pub fn phi_nu0(nuis0: &FittedNuisances, data: &ObservedData) -> Result<Vec<f64>> {
    require_arm(nuis0, Arm::Untreated)?;
    nuis0.check_rows(data)?;
    let t = data.treatment();
    let mut out = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let m = nuis0.m_hat[i];
        if t[i] == 0 {
            let q = expit(-nuis0.ps_eta[i]);
            if !(q > 0.0) {
                return Err(Error::DegenerateWeight { row: i + 1, value: q });
            }
            let y = data.require_outcome(i)?;
            let pi = expit(nuis0.ps_eta[i]);
            out.push(pi * y / q - (1.0 / q - 1.0) * m);
        } else {
            out.push(m);
        }
    }
    Ok(out)
}

/// `ν̂¹`, `ν̂⁰` and their difference, the ATT.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttEstimates {
    pub nu1: Estimate,
    pub nu0: Estimate,
    pub att: Estimate,
}

/// `ν̂¹ = Ẽ(TY)/Ẽ(T)`, `ν̂⁰ = Ẽ[φ_ν0]/Ẽ(T)` and `ATT = ν̂¹ − ν̂⁰`.
pub fn att(nuis0: &FittedNuisances, data: &ObservedData, level: f64) -> Result<AttEstimates> {
    let phi = phi_nu0(nuis0, data)?;
    let t = data.treatment();
    let n = data.n();
    let et = data.treated_fraction();
    let nu0 = mean(&phi) / et;
    let infl0: Vec<f64> = (0..n).map(|i| (phi[i] - t[i] as f64 * nu0) / et).collect();

    let mut ty = vec![0.0; n];
    for i in 0..n {
        if t[i] == 1 {
            ty[i] = data.require_outcome(i)?;
        }
    }
    let nu1 = mean(&ty) / et;
    let infl1: Vec<f64> = (0..n).map(|i| t[i] as f64 * (ty[i] - nu1) / et).collect();

    let method = nuis0.method_tag();
    let nu1 = Estimate::from_influence(Target::Nu1, method.clone(), nu1, infl1, level)?;
    let nu0 = Estimate::from_influence(Target::Nu0, method, nu0, infl0, level)?;
    let att = difference(Target::Att, &nu1, &nu0, level)?;
    Ok(AttEstimates { nu1, nu0, att })
}

/// Ratio IPW estimate of the arm mean, `Ẽ[AY/p̂]/Ẽ[A/p̂]`, with the nominal
/// variance that treats the weights as fixed.
pub fn ipw_ratio(
    ps_fit: &PenalizedFit,
    basis: &RegressorBasis,
    data: &ObservedData,
    arm: Arm,
    level: f64,
) -> Result<Estimate> {
    if !ps_fit.loss_kind.is_propensity() {
        return Err(Error::InvalidArgument(format!("{} is not a propensity-score loss", ps_fit.loss_kind.label())));
    }
    if basis.n() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), got: basis.n() });
    }
    let eta = basis.linear_predictor(&ps_fit.coefficients);
    let t = data.treatment();
    let n = data.n();
    let mut w = vec![0.0; n];
    let mut y = vec![0.0; n];
    for i in 0..n {
        if arm.indicator(t[i]) == 1.0 {
            let p = arm_probability(arm, eta[i]);
            if !(p > 0.0) {
                return Err(Error::DegenerateWeight { row: i + 1, value: p });
            }
            w[i] = 1.0 / p;
            y[i] = data.require_outcome(i)?;
        }
    }
    let denom = mean(&w);
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::NonFinite("ratio IPW denominator".into()));
    }
    let point = w.iter().zip(&y).map(|(w, y)| w * y).sum::<f64>() / n as f64 / denom;
    let influence = (0..n).map(|i| w[i] * (y[i] - point) / denom).collect();
    let target = match arm {
        Arm::Treated => Target::Mu1,
        Arm::Untreated => Target::Mu0,
    };
    Estimate::from_influence(target, format!("IPW.{}", ps_tag(&ps_fit.loss_kind)), point, influence, level)
}

pub fn ipw_ratio_mu1(
    ps_fit: &PenalizedFit,
    basis: &RegressorBasis,
    data: &ObservedData,
    level: f64,
) -> Result<Estimate> {
    ipw_ratio(ps_fit, basis, data, Arm::Treated, level)
}

/// `Ẽ[m̂(X)]` with the plug-in variance of the fitted values.
pub fn or_only(or_fit: &PenalizedFit, basis: &RegressorBasis, data: &ObservedData, level: f64) -> Result<Estimate> {
    let (Some(link), Some(arm)) = (or_fit.loss_kind.outcome_link(), or_fit.loss_kind.arm()) else {
        return Err(Error::InvalidArgument(format!("{} is not an outcome-regression loss", or_fit.loss_kind.label())));
    };
    if basis.n() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), got: basis.n() });
    }
    let m: Vec<f64> = basis.linear_predictor(&or_fit.coefficients).into_iter().map(|u| link.mean(u)).collect();
    let point = mean(&m);
    let influence = m.iter().map(|v| v - point).collect();
    let target = match arm {
        Arm::Treated => Target::Mu1,
        Arm::Untreated => Target::Mu0,
    };
    Estimate::from_influence(target, format!("OR.{}", or_tag(&or_fit.loss_kind)), point, influence, level)
}

pub fn or_only_mu1(or_fit: &PenalizedFit, basis: &RegressorBasis, data: &ObservedData, level: f64) -> Result<Estimate> {
    if or_fit.loss_kind.arm() != Some(Arm::Treated) {
        return Err(Error::InvalidArgument("or_only_mu1 needs a treated-arm outcome fit".into()));
    }
    or_only(or_fit, basis, data, level)
}

/// `b_j = |Ẽ[A f_j/p̂ − f_j]|` for `j = 1..p`, where `A`/`p̂` belong to the
/// arm of the PS fit (treated for arm-free fits).
pub fn balance_report(ps_fit: &PenalizedFit, basis: &RegressorBasis, data: &ObservedData) -> Result<Vec<f64>> {
    let arm = ps_fit.loss_kind.arm().unwrap_or(Arm::Treated);
    if basis.n() != data.n() {
        return Err(Error::DimensionMismatch { expected: data.n(), got: basis.n() });
    }
    let eta = basis.linear_predictor(&ps_fit.coefficients);
    let t = data.treatment();
    let r: Vec<f64> = (0..data.n()).map(|i| arm.indicator(t[i]) / arm_probability(arm, eta[i]) - 1.0).collect();
    let g = basis.mean_transpose_product(&r);
    Ok(g.into_iter().skip(1).map(f64::abs).collect())
}

/// Largest and mean balance discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceSummary {
    pub max: f64,
    pub mean: f64,
}

impl BalanceSummary {
    pub fn from_report(b: &[f64]) -> Self {
        if b.is_empty() {
            return Self { max: 0.0, mean: 0.0 };
        }
        Self { max: b.iter().copied().fold(0.0, f64::max), mean: mean(b) }
    }
}
