//! Numerical laboratory for Gibbs-posterior regression on regular and
//! singular models.
//!
//! The crate simulates tempered-posterior regression, estimates the
//! generalization error `G`, training error `T` and functional variance `V`
//! per dataset, and recovers the real log canonical threshold `λ` and the
//! singular fluctuation `ν` from exact chart data, prior-volume scaling and
//! replicated error curves.

pub mod birational;
pub mod data;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod model;
pub mod numeric;
pub mod posterior;

pub use data::{generate, Dataset};
pub use error::{Error, Result};
pub use estimators::ErrorReport;
pub use model::{
    catalog, empirical_square_error, population_k, ModelSpec, ParameterRegion, Prior, PriorKind,
    RegressionModel, TrueProcess,
};
pub use posterior::{
    expectation, quadrature_expectation, sample_posterior, GibbsTarget, GridConfig, McmcConfig,
    PosteriorSamples, XQuadrature,
};
