//! Rate-equation photophysics: steady states, analytic g²(τ) by
//! eigen-expansion or matrix exponential, effective time constants, and
//! exact stochastic simulation of detected photon streams.

mod expm;
mod inversion;
mod level_system;
mod model_file;
mod multiexp;
mod propagate;
mod simulate;

pub use expm::{expm, expm_generator};
pub use inversion::solve_four_level;
pub use level_system::{steady_state, FourLevelRates, LevelSystem};
pub use model_file::{read_model, ModelFile};
pub use multiexp::g2_multi_exponential;
pub use propagate::{
    effective_timescales, g2_rate_equation, g2_rate_equation_with, populations, Propagator, Relaxation, Timescale,
    TimescaleMethod, Timescales, AUTO_DRIFT_LIMIT, EIGEN_COND_LIMIT,
};
pub use simulate::{
    background_for_signal_fraction, simulate_photon_stream, simulate_segmented, DetectorChain, MAX_EXPECTED_EVENTS,
};
