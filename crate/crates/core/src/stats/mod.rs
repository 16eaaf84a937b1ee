//! Estimators applied to simulation output: CCDFs and tail fits, the
//! trend-response fit, order-book profile histograms and the layered
//! order-flow correlation analysis.

mod ccdf;
mod fit;
mod histogram;
mod layered;
mod moments;

pub use ccdf::{empirical_ccdf, Ccdf};
pub use fit::{
    curvature_exponential, curvature_powerlaw, fit_exponential_decay, fit_powerlaw_tail,
    fit_tanh_response, Curvature, ExponentialFit, FitRange, PowerLawFit, ResponseBin, TanhFit,
    TanhFitOptions,
};
pub use histogram::{orderbook_histogram, Origin, ProfileAccumulator, ProfileHistogram};
pub use layered::{
    layered_analysis, LayeredAccumulator, LayeredReport, LayeredSamples, MIN_LAYERED_TICKS,
};
pub use moments::{ks_distance, ks_two_sample, linear_regression, moments, pearson, Moments};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("too few points for the fit: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("CCDF must be strictly positive over the fit range")]
    NonPositive,
    #[error("degenerate binning: {0}")]
    DegenerateBinning(String),
    #[error("fit did not converge: {0}")]
    NonConvergence(String),
    #[error("insufficient ticks for stable coefficients: need {needed}, got {got}")]
    InsufficientTicks { needed: usize, got: usize },
}
