//! Simulation study: truncated-normal covariates, the nonlinear covariate
//! transforms, configurations C1 to C6 and the Monte-Carlo harness.

pub mod constants;
pub mod monte_carlo;
pub mod scenario;

pub use constants::{StandardizationConstants, TABULATED_RATIO_SD, TRUNCATION};
pub use monte_carlo::{
    run_monte_carlo, run_replication, MethodSummary, MonteCarloOptions, MonteCarloReport, RepResult,
};
pub use scenario::{
    generate_scenario, logistic_mu1_monte_carlo, make_xdagger, truncated_normal, Config, ScenarioSpec, SimulatedData,
    LOGISTIC_TRUE_MU1,
};
