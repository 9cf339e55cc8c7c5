//! Measurement machinery: accuracy, flip rates, transmission ratios, drift
//! norms, public-channel reconstruction, and susceptibility.

mod chi;
mod metrics;
mod ridge;

pub use chi::{chi_aux, chi_channel, norm_visibility, susceptibility_chi, ChiReport, RidgeOptions};
pub use metrics::{
    accuracy, drift_norm, flip_gradient, pooled_flip_rate, task_gain_gradient,
    transmission_ratio, HiddenDirection, HiddenObjective, RATIO_FLOOR,
};
pub use ridge::{dense_ridge_dual, dense_ridge_oracle, public_reconstruction, PublicChannelSpec};

use thiserror::Error;

#[derive(Error, Debug)]
pub enum DiagError {
    #[error("empty evaluation set")]
    EmptySet,
    #[error("pair classes ({a}, {b}) absent from the set")]
    PairAbsent { a: usize, b: usize },
    #[error("teacher metric {0} at or below the 1e-6 floor; ratio undefined")]
    UndefinedRatio(f64),
    #[error("vector lengths differ: {got} vs {want}")]
    LayoutMismatch { got: usize, want: usize },
    #[error("model layout is missing the {0} block")]
    MissingBlock(&'static str),
    #[error("hidden-direction overlap {overlap:e} below threshold {threshold:e}; chi undefined")]
    UndefinedChi { overlap: f64, threshold: f64 },
    #[error("zero drift; norm visibility undefined")]
    ZeroDrift,
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("lambda must be positive and finite, got {0}")]
    BadLambda(f64),
}
