//! Bayesian multivariate geometric-quantile regression.
//!
//! Conditional laws of a `k`-variate response given a scalar covariate are
//! modelled by a truncated dependent stick-breaking mixture: cluster
//! locations `alpha_l + beta_l(x)` with Gaussian-process paths `beta_l`, plus
//! a common Gaussian-mixture error. A blocked Gibbs sampler produces
//! posterior draws, and conditional geometric quantiles are read off each
//! draw.

// `!(a > b)` is used on purpose to reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod geoquant;
pub mod gibbs;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod simbench;

pub use error::{Error, Result};
pub use geoquant::{
    empirical_geometric_quantile, mixture_quantile_mc, mixture_quantile_polar, weighted_geometric_quantile, Cloud,
    Direction, MixtureSpec, SolverSettings,
};
pub use gibbs::{run_chain, Draw, McmcSettings, PosteriorDraws};
pub use model::{Dataset, Hyperparams};
pub use pipeline::{
    conditional_quantile, default_delta, delta_smoothed_quantile, kde_fit, CovariateDensity, ErrorEvaluator,
    ErrorQuantileSettings, QuantileEstimate, QuantilePredictor, QuantileQuery,
};
