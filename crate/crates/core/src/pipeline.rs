//! Estimation methods composed from tuned nuisance fits.
//!
//! A [`NuisanceCache`] fits each nuisance model at most once per data set,
//! so methods that share a fit (RML.RML and IPW.RML share the ML
//! propensity score, for instance) see identical coefficients.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{ObservedData, RegressorBasis};
use crate::error::{Error, Result};
use crate::estimators::{self, difference, BalanceSummary, Estimate, FittedNuisances, Target};
use crate::losses::{Arm, Link, LossKind};
use crate::solver::SolverOptions;
use crate::tuning::{tune_and_fit, CvResult, LambdaChoice, TunedFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "RML.RML")]
    RmlRml,
    #[serde(rename = "RCAL.RWL")]
    RcalRwl,
    #[serde(rename = "IPW.RML")]
    IpwRml,
    #[serde(rename = "IPW.RCAL")]
    IpwRcal,
    #[serde(rename = "OR.RML")]
    OrRml,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::RmlRml, Method::RcalRwl, Method::IpwRml, Method::IpwRcal, Method::OrRml];

    pub fn tag(self) -> &'static str {
        match self {
            Method::RmlRml => "RML.RML",
            Method::RcalRwl => "RCAL.RWL",
            Method::IpwRml => "IPW.RML",
            Method::IpwRcal => "IPW.RCAL",
            Method::OrRml => "OR.RML",
        }
    }

    /// Augmented IPW methods, which combine a PS and an OR fit.
    pub fn is_aipw(self) -> bool {
        matches!(self, Method::RmlRml | Method::RcalRwl)
    }

    /// Parses a comma-separated list such as `rml.rml,rcal-rwl`.
    pub fn parse_list(s: &str) -> Result<Vec<Method>> {
        let mut out = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            let m: Method = part.parse()?;
            if !out.contains(&m) {
                out.push(m);
            }
        }
        if out.is_empty() {
            return Err(Error::InvalidArgument("empty method list".into()));
        }
        Ok(out)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('-', ".");
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// Settings shared by every nuisance fit of a pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub link: Link,
    /// With `Auto`, each nuisance fit draws its own folds from a seed
    /// derived from this one.
    pub lambda: LambdaChoice,
    pub level: f64,
    pub solver: SolverOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { link: Link::Identity, lambda: LambdaChoice::default(), level: 0.95, solver: SolverOptions::default() }
    }
}

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The nuisance models a pipeline can fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    PsMl,
    PsCal(Arm),
    OrMl(Arm),
    OrWl(Arm),
}

impl Slot {
    fn stream(self) -> u64 {
        let arm = |a: Arm| match a {
            Arm::Treated => 0,
            Arm::Untreated => 1,
        };
        match self {
            Slot::PsMl => 1,
            Slot::PsCal(a) => 2 + arm(a),
            Slot::OrMl(a) => 4 + arm(a),
            Slot::OrWl(a) => 6 + arm(a),
        }
    }
}

/// One tuned nuisance fit with its coefficients on the raw covariate scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSummary {
    pub slot: Slot,
    pub loss: String,
    pub lambda_selected: f64,
    pub active_set_size: usize,
    pub converged: bool,
    pub outer_iterations: usize,
    pub objective: f64,
    pub coefficients: Vec<f64>,
    pub coefficient_names: Vec<String>,
    pub cv: Option<CvResult>,
}

/// Estimates for one method and target. `mu1`/`mu0` give one estimate,
/// `ate` gives μ̂¹, μ̂⁰ and their difference, `att` gives ν̂¹, ν̂⁰ and ATT.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodEstimate {
    pub method: Method,
    pub target: Target,
    pub estimates: Vec<Estimate>,
    /// Every fit used converged.
    pub converged: bool,
    pub slots: Vec<Slot>,
}

impl MethodEstimate {
    /// The estimate of the requested target (last in `estimates`).
    pub fn primary(&self) -> &Estimate {
        self.estimates.last().expect("at least one estimate")
    }
}

/// Lazily fitted nuisance models on one data set.
pub struct NuisanceCache<'a> {
    basis: &'a RegressorBasis,
    data: &'a ObservedData,
    config: PipelineConfig,
    fits: Vec<(Slot, TunedFit)>,
}

impl<'a> NuisanceCache<'a> {
    pub fn new(basis: &'a RegressorBasis, data: &'a ObservedData, config: PipelineConfig) -> Result<Self> {
        if basis.n() != data.n() {
            return Err(Error::DimensionMismatch { expected: data.n(), got: basis.n() });
        }
        estimators::check_level(config.level)?;
        config.solver.validate()?;
        Ok(Self { basis, data, config, fits: Vec::new() })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn lambda_for(&self, slot: Slot) -> LambdaChoice {
        match self.config.lambda {
            LambdaChoice::Auto { grid, folds, seed } => {
                LambdaChoice::Auto { grid, folds, seed: mix_seed(seed, slot.stream()) }
            }
            fixed => fixed,
        }
    }

    /// The tuned fit for a slot, fitting it (and any companion) on first use.
    pub fn fit(&mut self, slot: Slot) -> Result<&TunedFit> {
        if let Some(pos) = self.fits.iter().position(|(s, _)| *s == slot) {
            return Ok(&self.fits[pos].1);
        }
        let link = self.config.link;
        let kind = match slot {
            Slot::PsMl => LossKind::MlPs,
            Slot::PsCal(arm) => LossKind::CalPs { arm },
            Slot::OrMl(arm) => LossKind::MlOr { link, arm },
            Slot::OrWl(arm) => {
                let ps = self.fit(Slot::PsCal(arm))?;
                LossKind::WlOr { link, arm, ps_coef: ps.fit.coefficients.clone().into() }
            }
        };
        let tuned = tune_and_fit(&kind, self.basis, self.data, self.lambda_for(slot), &self.config.solver)?;
        self.fits.push((slot, tuned));
        Ok(&self.fits.last().expect("just pushed").1)
    }

    fn slots_for(method: Method, arm: Arm) -> Vec<Slot> {
        match method {
            Method::RmlRml => vec![Slot::PsMl, Slot::OrMl(arm)],
            Method::RcalRwl => vec![Slot::PsCal(arm), Slot::OrWl(arm)],
            Method::IpwRml => vec![Slot::PsMl],
            Method::IpwRcal => vec![Slot::PsCal(arm)],
            Method::OrRml => vec![Slot::OrMl(arm)],
        }
    }

    /// PS and OR fits of an augmented IPW method for one arm.
    pub fn nuisances(&mut self, method: Method, arm: Arm) -> Result<FittedNuisances> {
        if !method.is_aipw() {
            return Err(Error::InvalidArgument(format!("{method} does not combine a PS and an OR fit")));
        }
        let slots = Self::slots_for(method, arm);
        let ps = self.fit(slots[0])?.fit.clone();
        let or = self.fit(slots[1])?.fit.clone();
        FittedNuisances::new(ps, or, self.basis)
    }

    fn arm_estimate(&mut self, method: Method, arm: Arm) -> Result<Estimate> {
        let level = self.config.level;
        match method {
            Method::RmlRml | Method::RcalRwl => {
                let nuis = self.nuisances(method, arm)?;
                match arm {
                    Arm::Treated => estimators::aipw_mu1(&nuis, self.data, level),
                    Arm::Untreated => estimators::aipw_mu0(&nuis, self.data, level),
                }
            }
            Method::IpwRml | Method::IpwRcal => {
                let slot = Self::slots_for(method, arm)[0];
                let ps = self.fit(slot)?.fit.clone();
                estimators::ipw_ratio(&ps, self.basis, self.data, arm, level)
            }
            Method::OrRml => {
                let or = self.fit(Slot::OrMl(arm))?.fit.clone();
                estimators::or_only(&or, self.basis, self.data, level)
            }
        }
    }

    fn converged(&self, slots: &[Slot]) -> bool {
        slots.iter().all(|s| self.fits.iter().any(|(slot, f)| slot == s && f.fit.converged))
    }

    /// Runs a method for a target.
    pub fn estimate(&mut self, method: Method, target: Target) -> Result<MethodEstimate> {
        let level = self.config.level;
        let (estimates, slots) = match target {
            Target::Mu1 => (vec![self.arm_estimate(method, Arm::Treated)?], Self::slots_for(method, Arm::Treated)),
            Target::Mu0 => (vec![self.arm_estimate(method, Arm::Untreated)?], Self::slots_for(method, Arm::Untreated)),
            Target::Ate => {
                let mu1 = self.arm_estimate(method, Arm::Treated)?;
                let mu0 = self.arm_estimate(method, Arm::Untreated)?;
                let ate = difference(Target::Ate, &mu1, &mu0, level)?;
                let mut slots = Self::slots_for(method, Arm::Treated);
                for s in Self::slots_for(method, Arm::Untreated) {
                    if !slots.contains(&s) {
                        slots.push(s);
                    }
                }
                (vec![mu1, mu0, ate], slots)
            }
            Target::Att | Target::Nu0 | Target::Nu1 => {
                if !method.is_aipw() {
                    return Err(Error::InvalidArgument(format!("{target} is available for RML.RML and RCAL.RWL only")));
                }
                let nuis = self.nuisances(method, Arm::Untreated)?;
                let att = estimators::att(&nuis, self.data, level)?;
                let estimates = match target {
                    Target::Nu1 => vec![att.nu1],
                    Target::Nu0 => vec![att.nu0],
                    _ => vec![att.nu1, att.nu0, att.att],
                };
                (estimates, Self::slots_for(method, Arm::Untreated))
            }
        };
        Ok(MethodEstimate { method, target, estimates, converged: self.converged(&slots), slots })
    }

    /// Summaries of every fit made so far, in fitting order.
    pub fn fit_summaries(&self) -> Result<Vec<FitSummary>> {
        self.fits
            .iter()
            .map(|(slot, tuned)| {
                let fit = &tuned.fit;
                Ok(FitSummary {
                    slot: *slot,
                    loss: fit.loss_kind.label(),
                    lambda_selected: fit.lambda,
                    active_set_size: fit.active_set.len(),
                    converged: fit.converged,
                    outer_iterations: fit.outer_iterations,
                    objective: fit.objective,
                    coefficients: self.basis.raw_coefficients(&fit.coefficients)?,
                    coefficient_names: self.basis.names().to_vec(),
                    cv: tuned.cv.clone(),
                })
            })
            .collect()
    }

    /// Balance summary of a fitted PS slot.
    pub fn balance(&self, slot: Slot) -> Result<Option<BalanceSummary>> {
        let Some((_, tuned)) = self.fits.iter().find(|(s, _)| *s == slot) else {
            return Ok(None);
        };
        if !tuned.fit.loss_kind.is_propensity() {
            return Ok(None);
        }
        let b = estimators::balance_report(&tuned.fit, self.basis, self.data)?;
        Ok(Some(BalanceSummary::from_report(&b)))
    }
}
