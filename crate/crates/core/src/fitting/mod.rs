//! Weighted nonlinear least squares and the g² and spectrum fitters built on
//! it, plus information-criterion model comparison.

mod g2fit;
mod lm;
mod outcome;
mod select;
mod spectrum_fit;

pub use g2fit::{fit_g2, fit_g2_data, G2Data, G2FitOptions, G2Model, MIN_BUNCHING_DECADES};
pub use lm::{
    least_squares, least_squares_poisson, least_squares_weighted, poisson_deviance, Bound, LmOptions, Param, Weighting,
    MIN_EXPECTED_COUNT,
};
pub use outcome::{data_digest, Derived, FitOutcome};
pub use select::{aicc, compare_models, metastable_levels, LevelVerdict, ModelRanking, RankedModel, Support, RESOLVED_DELTA, WEAK_DELTA};
pub use spectrum_fit::{fit_spectrum, fit_spectrum_data, spectrum_param_names, SpectrumFitOptions, GAMMA_G_ZERO_FLAG};
