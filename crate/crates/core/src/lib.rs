//! Current-status survival estimation with nonresponse: causal isotonic
//! regression, Cox regression under current-status censoring, and the
//! simulation harness used to study both.

pub mod data;
pub mod error;
pub mod isotonic;
pub mod nuisance;
pub mod rng;

pub use data::{ingest_csv, ingest_reader, CovariateSchema, Dataset, IngestReport, Observation};
pub use error::{Error, Result};
pub use isotonic::{
    gcm_left_derivative, monotone_hermite, numeric_derivative, pava, pava_values, Interpolation, MonotoneCurve,
    WeightedSeries,
};
pub mod cir;
pub use cir::{
    chernoff_ci, estimate_cir, fit_cir, one_step_gamma, scale_factor, CIRConfig, CIREstimate, Mode, Nuisances,
    NuisanceSpec, CHERNOFF_Q975,
};
pub use nuisance::{empirical_cdf, EmpiricalCdf, OutcomeRegression, DensityRatio};
pub mod cox;
pub use cox::{
    bootstrap_cox, cs_gradient, cs_loglik, fit_cox, summarize_bootstrap, BootstrapOptions, BootstrapSummary, CoxFit,
    CoxOptions, Resample,
};
pub mod sim;
pub use sim::{
    generate, run_bootstrap_study, run_cir_study, run_cox_study, CirCell, CoxCell, DGPSpec, MetricsReport,
    NuisanceSource, Scenario, ScenarioSpec,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
