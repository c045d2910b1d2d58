//! Replicated simulation runs and their summary metrics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::Target;
use crate::losses::{Arm, Link};
use crate::normal;
use crate::pipeline::{Method, NuisanceCache, PipelineConfig};
use crate::solver::SolverOptions;
use crate::tuning::{GridSpec, LambdaChoice};

use super::scenario::{generate_scenario, ScenarioSpec};

/// Options of a Monte-Carlo run other than the scenario itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloOptions {
    pub reps: usize,
    pub grid: GridSpec,
    pub folds: usize,
    pub solver: SolverOptions,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self { reps: 100, grid: GridSpec::pow2(11), folds: 5, solver: SolverOptions::default(), workers: 1 }
    }
}

/// What one replication produced for one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RepResult {
    Estimate {
        point: f64,
        v_hat: f64,
        n: usize,
        se: f64,
        /// Prediction-form or boundedness invariant failed (RCAL.RWL only).
        invariant_violation: bool,
    },
    NotConverged,
    Failed,
}

/// Summary metrics for one method across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSummary {
    pub method: Method,
    pub bias: f64,
    pub sqrt_var: f64,
    pub sqrt_evar: f64,
    pub cov90: f64,
    pub cov95: f64,
    /// `(point − μ¹)/se` for every successful replication, in replication
    /// order.
    pub t_stats: Vec<f64>,
    pub successful: usize,
    pub nonconverged: usize,
    pub failed: usize,
    pub invariant_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloReport {
    pub scenario: ScenarioSpec,
    pub reps: usize,
    pub grid: String,
    pub folds: usize,
    pub true_mu1: f64,
    pub methods: Vec<MethodSummary>,
}

/// Generator for replication `rep`: one ChaCha stream per replication, so
/// results do not depend on how replications are scheduled.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Runs one replication of every requested method.
pub fn run_replication(spec: &ScenarioSpec, rep: u64, opts: &MonteCarloOptions) -> Result<Vec<RepResult>> {
    let mut rng = replication_rng(spec.seed, rep);
    let sim = generate_scenario(spec, &mut rng)?;
    let link = if spec.config.logistic_outcome() { Link::Logistic } else { Link::Identity };
    let config = PipelineConfig {
        link,
        lambda: LambdaChoice::Auto {
            grid: opts.grid,
            folds: opts.folds,
            seed: crate::pipeline::mix_seed(spec.seed, rep),
        },
        level: 0.95,
        solver: opts.solver,
    };
    let mut cache = NuisanceCache::new(&sim.basis, &sim.data, config)?;
    let mut out = Vec::with_capacity(spec.methods.len());
    for &method in &spec.methods {
        let result = match cache.estimate(method, Target::Mu1) {
            Ok(est) if est.converged => {
                let e = est.primary();
                let mut invariant_violation = false;
                if method == Method::RcalRwl {
                    invariant_violation = !rcal_rwl_invariants_hold(&mut cache, &sim.data, e.point)?;
                }
                RepResult::Estimate { point: e.point, v_hat: e.v_hat, n: e.n, se: e.se, invariant_violation }
            }
            Ok(_) => RepResult::NotConverged,
            Err(_) => RepResult::Failed,
        };
        out.push(result);
    }
    Ok(out)
}

/// Prediction form `|Ẽφ − Ẽ[TY + (1−T)m̂]| ≤ 10·kkt_tol·(1 + max|Y|)` and
/// `μ̂¹` inside the range of observed and predicted outcomes.
fn rcal_rwl_invariants_hold(
    cache: &mut NuisanceCache<'_>,
    data: &crate::dataset::ObservedData,
    point: f64,
) -> Result<bool> {
    let tol = cache.config().solver.kkt_tol;
    let nuis = cache.nuisances(Method::RcalRwl, Arm::Treated)?;
    let pred = nuis.prediction_form(data)?;
    let max_y = data.outcome().iter().flatten().fold(0.0f64, |m, y| m.max(y.abs()));
    let (lo, hi) = nuis.prediction_range(data)?;
    Ok((point - pred).abs() <= 10.0 * tol * (1.0 + max_y) && lo <= point && point <= hi)
}

fn summarize(method: Method, results: &[RepResult], truth: f64) -> MethodSummary {
    let z90 = normal::two_sided_critical(0.90);
    let z95 = normal::two_sided_critical(0.95);
    let mut points = Vec::new();
    let mut evar = 0.0;
    let (mut c90, mut c95) = (0usize, 0usize);
    let mut t_stats = Vec::new();
    let (mut nonconverged, mut failed, mut violations) = (0, 0, 0);
    for r in results {
        match *r {
            RepResult::Estimate { point, v_hat, n, se, invariant_violation } => {
                points.push(point);
                evar += v_hat / n as f64;
                let err = (point - truth).abs();
                c90 += usize::from(err <= z90 * se);
                c95 += usize::from(err <= z95 * se);
                t_stats.push((point - truth) / se);
                violations += usize::from(invariant_violation);
            }
            RepResult::NotConverged => nonconverged += 1,
            RepResult::Failed => failed += 1,
        }
    }
    let k = points.len();
    let (bias, sqrt_var, sqrt_evar, cov90, cov95) = if k == 0 {
        (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN)
    } else {
        let mean = points.iter().sum::<f64>() / k as f64;
        let var =
            if k > 1 { points.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (k - 1) as f64 } else { 0.0 };
        (mean - truth, var.sqrt(), (evar / k as f64).sqrt(), c90 as f64 / k as f64, c95 as f64 / k as f64)
    };
    MethodSummary {
        method,
        bias,
        sqrt_var,
        sqrt_evar,
        cov90,
        cov95,
        t_stats,
        successful: k,
        nonconverged,
        failed,
        invariant_violations: violations,
    }
}

/// Runs `opts.reps` replications (in parallel on `opts.workers` threads)
/// and summarizes each method. Replications are collected in order, so the
/// report is identical for any number of workers.
pub fn run_monte_carlo(spec: &ScenarioSpec, opts: &MonteCarloOptions) -> Result<MonteCarloReport> {
    spec.validate()?;
    opts.solver.validate()?;
    if opts.reps < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 replications, got {}", opts.reps)));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let per_rep: Vec<Vec<RepResult>> = pool.install(|| {
        (0..opts.reps as u64)
            .into_par_iter()
            .map(|rep| run_replication(spec, rep, opts).unwrap_or_else(|_| vec![RepResult::Failed; spec.methods.len()]))
            .collect()
    });
    let truth = spec.true_mu1();
    let methods = spec
        .methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let column: Vec<RepResult> = per_rep.iter().map(|r| r[m]).collect();
            summarize(method, &column, truth)
        })
        .collect();
    Ok(MonteCarloReport {
        scenario: spec.clone(),
        reps: opts.reps,
        grid: opts.grid.to_string(),
        folds: opts.folds,
        true_mu1: truth,
        methods,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_metrics() {
        let r = |point: f64, se: f64| RepResult::Estimate {
            point,
            v_hat: se * se * 100.0,
            n: 100,
            se,
            invariant_violation: false,
        };
        let results = vec![r(0.1, 0.1), r(-0.3, 0.1), RepResult::NotConverged, r(0.18, 0.1), RepResult::Failed];
        let s = summarize(Method::RcalRwl, &results, 0.0);
        assert_eq!(s.successful, 3);
        assert_eq!(s.nonconverged, 1);
        assert_eq!(s.failed, 1);
        let mean = (0.1 - 0.3 + 0.18) / 3.0;
        assert!((s.bias - mean).abs() < 1e-15);
        let var = [0.1, -0.3, 0.18].iter().map(|x: &f64| (x - mean).powi(2)).sum::<f64>() / 2.0;
        assert!((s.sqrt_var - f64::sqrt(var)).abs() < 1e-15);
        assert!((s.sqrt_evar - 0.1).abs() < 1e-15);
        // |t| = 1, 3, 1.8
        assert!((s.cov90 - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.cov95 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.t_stats.len(), 3);
    }
}
