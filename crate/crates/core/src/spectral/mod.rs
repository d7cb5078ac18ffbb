//! Spectral axes, line shapes over defect line lists, and Debye–Waller
//! factor algebra.

mod axis;
mod dw;
mod lineshape;

pub use axis::{convert_axis, convert_axis_with, convert_value, HC_EV_NM};
pub use dw::{debye_waller, dw_from_curve};
pub use lineshape::{lorentzian_sum, voigt_profile, Profile, SpectralFitModel};
