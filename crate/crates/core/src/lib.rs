//! Histogram trend filtering for one-dimensional density estimation.
//!
//! Observations are binned on an equal-width grid, the bin counts are fitted
//! as Poisson intensities whose log is penalized by an ℓ1 (or squared ℓ2)
//! norm of its order-`k+1` discrete differences, and the fitted intensities
//! are rescaled into a normalized density. The numerical core is generic over
//! [`Scalar`] (`f32` or `f64`); the `*64` aliases below fix the usual choice.

mod banded;
pub mod baselines;
pub mod binning;
pub mod diffops;
pub mod error;
pub mod estimator;
pub mod model_select;
pub mod scalar;
pub mod simbench;
pub mod solver;

pub use baselines::{cv_bandwidth, kde_evaluate, reference_bandwidth, CvOptions, KdeEstimate};
pub use binning::{default_num_bins, make_histogram, Histogram, Sample};
pub use diffops::{
    pinv_ratio_table, DiffOperator, NormKind, PinvNorms, PinvRatioRow, PINV_RATIO_BAND,
};
pub use error::{HtfError, Result};
pub use estimator::{
    fit_density, fit_histogram, from_json, recover_density, to_json, Bins, DensityEstimate,
    Diagnostics, HtfConfig, TauRule,
};
pub use model_select::{
    aic, aic_with, default_grid, dense_path_grid, fit_path, fit_path_with, lambda_star, AicRule,
    PathEntry, PathResult,
};
pub use scalar::Scalar;
pub use simbench::{
    density_f1, density_f2, density_f3, mse, run_benchmark, BenchCell, BenchConfig, BenchReport,
    Component, DensityId, Method, TrueDensity,
};
pub use solver::{
    count_active_diffs, fit, fit_from, kkt_residual, l2sq_gradient, objective, poisson_nll,
    BoxSpec, FitResult, L1Method, Penalty, PenaltySpec, SolverOptions,
};

pub type Sample64 = Sample<f64>;
pub type Histogram64 = Histogram<f64>;
pub type FitResult64 = FitResult<f64>;
pub type PenaltySpec64 = PenaltySpec<f64>;
pub type BoxSpec64 = BoxSpec<f64>;
pub type SolverOptions64 = SolverOptions<f64>;
pub type PathResult64 = PathResult<f64>;
pub type HtfConfig64 = HtfConfig<f64>;
pub type DensityEstimate64 = DensityEstimate<f64>;
pub type KdeEstimate64 = KdeEstimate<f64>;
