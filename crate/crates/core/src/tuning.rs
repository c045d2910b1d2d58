//! Zero-solution threshold λ* and K-fold cross-validation over a
//! geometric λ grid.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ObservedData, RegressorBasis};
use crate::error::{Error, Result};
use crate::losses::{LossKind, PreparedLoss};
use crate::solver::{fit_prepared, path_prepared, PenalizedFit, SolverOptions};

/// Grid `{λ* / 2^{j/steps_per_halving} : j = 0..num_points}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub num_points: usize,
    pub steps_per_halving: u32,
}

impl GridSpec {
    /// `λ*/2^j`, `j = 0..n`; the simulation default is `pow2(11)`.
    pub fn pow2(num_points: usize) -> Self {
        Self { num_points, steps_per_halving: 1 }
    }

    /// `λ*/2^{j/4}`, `j = 0..n`; the applied-analysis default is `pow2q(25)`.
    pub fn pow2q(num_points: usize) -> Self {
        Self { num_points, steps_per_halving: 4 }
    }

    pub fn lambdas(&self, lambda_max: f64) -> Vec<f64> {
        (0..self.num_points).map(|j| lambda_max / 2f64.powf(j as f64 / self.steps_per_halving as f64)).collect()
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::pow2(11)
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.steps_per_halving {
            1 => write!(f, "pow2:{}", self.num_points),
            4 => write!(f, "pow2q:{}", self.num_points),
            s => write!(f, "pow2/{s}:{}", self.num_points),
        }
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("grid `{s}`: expected pow2:<n> or pow2q:<n>"));
        let (kind, count) = s.split_once(':').ok_or_else(bad)?;
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        if count == 0 {
            return Err(bad());
        }
        match kind.trim() {
            "pow2" => Ok(Self::pow2(count)),
            "pow2q" => Ok(Self::pow2q(count)),
            _ => Err(bad()),
        }
    }
}

/// Fixed λ or cross-validated selection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaChoice {
    Fixed(f64),
    Auto { grid: GridSpec, folds: usize, seed: u64 },
}

impl Default for LambdaChoice {
    fn default() -> Self {
        LambdaChoice::Auto { grid: GridSpec::default(), folds: 5, seed: 0 }
    }
}

/// Largest `|∂ℓ/∂θ_j|`, `j >= 1`, at the intercept-only stationary point:
/// the smallest λ at which all slopes are zero.
pub fn lambda_max(kind: &LossKind, basis: &RegressorBasis, data: &ObservedData) -> Result<f64> {
    let prep = PreparedLoss::new(kind, basis, data)?;
    lambda_max_prepared(&prep, basis)
}

fn lambda_max_prepared(prep: &PreparedLoss, basis: &RegressorBasis) -> Result<f64> {
    let mut theta = vec![0.0; basis.dim()];
    theta[0] = prep.intercept_start();
    let eval = prep.evaluate(basis, &theta)?;
    Ok(eval.gradient.iter().skip(1).map(|g| g.abs()).fold(0.0, f64::max))
}

/// Cross-validation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub selected_lambda: f64,
    pub selected_index: usize,
    pub lambda_max: f64,
    pub grid: Vec<f64>,
    /// Mean held-out loss per grid point; `None` where some fold fit did
    /// not converge.
    pub cv_values: Vec<Option<f64>>,
    pub fold_assignment: Vec<usize>,
    pub folds: usize,
    pub seed: u64,
}

/// Random fold labels in `0..k`, stratified by treatment so each fold gets
/// its share of treated and untreated rows to within one.
pub fn stratified_folds(treatment: &[u8], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if treatment.len() < 2 * k {
        return Err(Error::InvalidArgument(format!("{} rows are too few for {k} folds", treatment.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut treated: Vec<usize> = (0..treatment.len()).filter(|&i| treatment[i] == 1).collect();
    let mut untreated: Vec<usize> = (0..treatment.len()).filter(|&i| treatment[i] == 0).collect();
    if treated.len() < k || untreated.len() < k {
        return Err(Error::DegenerateFold { fold: treated.len().min(untreated.len()) });
    }
    treated.shuffle(&mut rng);
    untreated.shuffle(&mut rng);
    let mut folds = vec![0; treatment.len()];
    for (pos, &i) in treated.iter().chain(&untreated).enumerate() {
        folds[i] = pos % k;
    }
    Ok(folds)
}

/// Selects λ by K-fold cross-validation of the (unpenalized) loss on
/// held-out rows. Weighted losses keep their companion fit fixed across
/// folds.
pub fn cross_validate(
    kind: &LossKind,
    basis: &RegressorBasis,
    data: &ObservedData,
    grid: GridSpec,
    k: usize,
    seed: u64,
    opts: &SolverOptions,
) -> Result<CvResult> {
    let full = PreparedLoss::new(kind, basis, data)?;
    let lmax = lambda_max_prepared(&full, basis)?;
    if !(lmax > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda_max is {lmax}; the intercept-only fit already satisfies every slope condition"
        )));
    }
    let lambdas = grid.lambdas(lmax);
    let fold_assignment = stratified_folds(data.treatment(), k, seed)?;

    let mut sums = vec![0.0; lambdas.len()];
    let mut valid = vec![true; lambdas.len()];
    for fold in 0..k {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..data.n()).partition(|&i| fold_assignment[i] == fold);
        let train_basis = basis.select_rows(&train);
        let test_basis = basis.select_rows(&test);
        let train_data = data.select_rows(&train).map_err(|_| Error::DegenerateFold { fold })?;
        let test_data = data.select_rows(&test).map_err(|_| Error::DegenerateFold { fold })?;
        let train_loss = PreparedLoss::new(kind, &train_basis, &train_data)?;
        let test_loss = PreparedLoss::new(kind, &test_basis, &test_data)?;
        let path = path_prepared(&train_loss, kind, &train_basis, &lambdas, opts)?;
        for (g, fit) in path.iter().enumerate() {
            match fit {
                Ok(fit) if fit.converged => {
                    let held_out = test_loss.value(&test_basis.linear_predictor(&fit.coefficients));
                    if held_out.is_nan() {
                        valid[g] = false;
                    } else {
                        sums[g] += held_out;
                    }
                }
                _ => valid[g] = false,
            }
        }
    }

    let cv_values: Vec<Option<f64>> = sums.iter().zip(&valid).map(|(&s, &ok)| ok.then_some(s / k as f64)).collect();
    // Descending grid: scanning with a strict comparison keeps the larger λ
    // on ties.
    let mut best: Option<(usize, f64)> = None;
    for (g, v) in cv_values.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((g, v));
            }
        }
    }
    let (selected_index, _) = best.ok_or(Error::NoValidLambda)?;
    Ok(CvResult {
        selected_lambda: lambdas[selected_index],
        selected_index,
        lambda_max: lmax,
        grid: lambdas,
        cv_values,
        fold_assignment,
        folds: k,
        seed,
    })
}

/// A final fit on the full sample with the cross-validation record that
/// chose its λ (if any).
#[derive(Debug, Clone)]
pub struct TunedFit {
    pub fit: PenalizedFit,
    pub cv: Option<CvResult>,
}

/// Fits at a fixed λ, or cross-validates and refits on the full sample
/// along the grid down to the selected λ.
pub fn tune_and_fit(
    kind: &LossKind,
    basis: &RegressorBasis,
    data: &ObservedData,
    choice: LambdaChoice,
    opts: &SolverOptions,
) -> Result<TunedFit> {
    let prep = PreparedLoss::new(kind, basis, data)?;
    match choice {
        LambdaChoice::Fixed(lambda) => {
            let fit = fit_prepared(&prep, kind, basis, lambda, None, opts)?;
            Ok(TunedFit { fit, cv: None })
        }
        LambdaChoice::Auto { grid, folds, seed } => {
            let cv = cross_validate(kind, basis, data, grid, folds, seed, opts)?;
            let path = path_prepared(&prep, kind, basis, &cv.grid[..=cv.selected_index], opts)?;
            let fit = path.into_iter().next_back().expect("non-empty path")?;
            Ok(TunedFit { fit, cv: Some(cv) })
        }
    }
}
