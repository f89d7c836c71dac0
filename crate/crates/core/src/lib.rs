//! Log-concave density estimation and likelihood-ratio inference for the mode.
//!
//! The unconstrained maximum-likelihood estimator [`fit`] and its mode-constrained
//! counterpart [`fit_constrained`] share one active-set solver. Twice the gap in
//! their log-likelihoods is the statistic `2 log λₙ(m)`, whose null law does not
//! depend on the underlying density; [`lr_test`] compares it against Monte-Carlo
//! critical values and [`confidence_interval`] inverts the test over `m`.

mod activeset;
pub mod constrained;
pub mod distributions;
pub mod error;
pub mod expint;
pub mod inference;
pub mod io;
pub mod mle;
pub mod montecarlo;
pub mod plc;
pub mod quad;
pub mod rng;
pub mod sample;

pub use activeset::SolverOptions;
pub use constrained::{
    check_constrained_characterization, fit_constrained, population_projection_check,
    ConstrainedCharacterizationReport, ConstrainedFitReport, ProjectionReport,
};
pub use distributions::{
    laplace_projection, solve_laplace_projection, LaplaceAlternative, LaplaceProjection,
    ReferenceDistribution, Table1Constants,
};
pub use error::{Error, Result};
pub use inference::{
    confidence_interval, confidence_intervals, critical_value, lr_statistic, lr_test, p_value,
    ConfidenceInterval, CriticalValueTable, GridOptions, LrTestResult, TableMeta,
};
pub use mle::{check_characterization, fit, CharacterizationReport, FitReport};
pub use montecarlo::{
    alternative_consistency, coverage_study, estimate_critical_values, pivotality_check,
    simulate_null, EngineOptions, SimulationReport,
};
pub use plc::{kl_divergence, Density, ModeSummary, PiecewiseLogLinearDensity};
pub use sample::Sample;
