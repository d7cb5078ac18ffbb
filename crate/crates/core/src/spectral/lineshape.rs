use errorfunctions::ComplexErrorFunctions;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ttio::DefectLineList;

/// FWHM to Gaussian standard deviation.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Profile {
    #[default]
    Lorentzian,
    Voigt,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lorentzian" => Ok(Profile::Lorentzian),
            "voigt" => Ok(Profile::Voigt),
            other => Err(Error::InvalidArgument(format!("unknown profile {other:?}"))),
        }
    }
}

/// ZPL plus phonon replicas sharing one line shape. Widths are FWHM in eV.
/// Each replica `i` sits at `x0_zpl - delta_e_i` with peak
/// `a * f_sc * rel_amp_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFitModel {
    pub linelist: DefectLineList,
    pub profile: Profile,
    pub a: f64,
    pub gamma: f64,
    /// Gaussian FWHM; ignored by the Lorentzian profile.
    pub gamma_g: f64,
    pub x0_zpl: f64,
    pub f_sc: f64,
}

impl SpectralFitModel {
    pub fn lorentzian(linelist: DefectLineList, a: f64, gamma: f64, x0_zpl: f64, f_sc: f64) -> Result<Self> {
        let m = Self { linelist, profile: Profile::Lorentzian, a, gamma, gamma_g: 0.0, x0_zpl, f_sc };
        m.validate()?;
        Ok(m)
    }

    pub fn voigt(linelist: DefectLineList, a: f64, gamma: f64, gamma_g: f64, x0_zpl: f64, f_sc: f64) -> Result<Self> {
        let m = Self { linelist, profile: Profile::Voigt, a, gamma, gamma_g, x0_zpl, f_sc };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.a > 0.0 && self.a.is_finite()) {
            return bad(format!("amplitude {} must be positive", self.a));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma {} must be positive", self.gamma));
        }
        if !(self.gamma_g >= 0.0 && self.gamma_g.is_finite()) {
            return bad(format!("gamma_g {} must be >= 0", self.gamma_g));
        }
        if !(self.f_sc >= 0.0 && self.f_sc.is_finite()) {
            return bad(format!("f_sc {} must be >= 0", self.f_sc));
        }
        if !self.x0_zpl.is_finite() {
            return bad("x0_zpl must be finite".into());
        }
        Ok(())
    }

    /// Model intensity on an eV axis.
    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        match self.profile {
            Profile::Lorentzian => lorentzian_sum(self, x),
            Profile::Voigt => {
                let line = VoigtLine::new(self.gamma, self.gamma_g).expect("validated widths");
                x.iter().map(|&xi| self.sum_lines(xi, |d| line.at(d))).collect()
            }
        }
    }

    fn sum_lines(&self, x: f64, shape: impl Fn(f64) -> f64) -> f64 {
        let mut s = shape(x - self.x0_zpl);
        if self.f_sc != 0.0 {
            let side: f64 = self.linelist.sidebands().iter().map(|m| m.rel_amp * shape(x - self.x0_zpl + m.delta_e_ev)).sum();
            s += self.f_sc * side;
        }
        self.a * s
    }
}

/// Equal-width Lorentzian sum over the line list, ZPL peak `a`.
pub fn lorentzian_sum(model: &SpectralFitModel, x: &[f64]) -> Vec<f64> {
    let hw2 = (model.gamma / 2.0).powi(2);
    x.iter().map(|&xi| model.sum_lines(xi, |d| hw2 / (d * d + hw2))).collect()
}

/// Unit-peak Voigt line: a Lorentzian of FWHM `gamma_l` convolved with a
/// Gaussian of FWHM `gamma_g`, via the Faddeeva function
/// `V(d) ∝ Re w((d + i γ) / (s √2))` with `γ` the Lorentzian half-width and
/// `s` the Gaussian standard deviation.
#[derive(Debug, Clone, Copy)]
struct VoigtLine {
    hwhm_l: f64,
    scale: f64,
    peak: f64,
}

impl VoigtLine {
    fn new(gamma_l: f64, gamma_g: f64) -> Result<Self> {
        if !(gamma_l >= 0.0 && gamma_g >= 0.0) || (gamma_l == 0.0 && gamma_g == 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Voigt widths ({gamma_l}, {gamma_g}) must be >= 0 and not both zero"
            )));
        }
        let hwhm_l = gamma_l / 2.0;
        if gamma_g == 0.0 {
            return Ok(Self { hwhm_l, scale: 0.0, peak: 1.0 });
        }
        let scale = gamma_g / FWHM_PER_SIGMA * std::f64::consts::SQRT_2;
        let peak = Complex64::new(0.0, hwhm_l / scale).w().re;
        Ok(Self { hwhm_l, scale, peak })
    }

    fn at(&self, d: f64) -> f64 {
        if self.scale == 0.0 {
            let h2 = self.hwhm_l * self.hwhm_l;
            return h2 / (d * d + h2);
        }
        Complex64::new(d / self.scale, self.hwhm_l / self.scale).w().re / self.peak
    }
}

/// Unit-peak Voigt profile centred at `x0`.
pub fn voigt_profile(x0: f64, gamma_l: f64, gamma_g: f64, x: &[f64]) -> Result<Vec<f64>> {
    let line = VoigtLine::new(gamma_l, gamma_g)?;
    Ok(x.iter().map(|&xi| line.at(xi - x0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ttio::{DwPolicy, Mode};

    fn c2cb() -> DefectLineList {
        DefectLineList::new(
            "C2CB",
            vec![Mode::new(0.0, 1.0), Mode::new(0.160, 0.45), Mode::new(0.180, 0.55), Mode::new(0.355, 0.1276596)],
            0.47,
            DwPolicy::Strict,
        )
        .unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn half_maximum_at_half_width() {
        let m = SpectralFitModel::lorentzian(DefectLineList::zpl_only("zpl"), 7.0, 0.5, 2.0, 0.0).unwrap();
        assert_eq!(lorentzian_sum(&m, &[1.75, 2.0, 2.25]), vec![3.5, 7.0, 3.5]);
    }

    #[test]
    fn zero_scale_leaves_only_the_zpl() {
        let m = SpectralFitModel::lorentzian(c2cb(), 10.0, 0.012, 1.975, 0.0).unwrap();
        let z = SpectralFitModel::lorentzian(DefectLineList::zpl_only("zpl"), 10.0, 0.012, 1.975, 0.0).unwrap();
        let x: Vec<f64> = (0..200).map(|k| 1.5 + k as f64 * 0.005).collect();
        assert_eq!(lorentzian_sum(&m, &x), lorentzian_sum(&z, &x));
    }

    #[test]
    fn sidebands_are_red_shifted() {
        let m = SpectralFitModel::lorentzian(c2cb(), 1.0, 0.005, 2.0, 1.0).unwrap();
        let v = lorentzian_sum(&m, &[2.0 - 0.18, 2.0 + 0.18]);
        assert!(v[0] > 0.5 && v[1] < 0.01);
    }

    #[test]
    fn voigt_limits() {
        let x: Vec<f64> = (-400..=400).map(|k| 2.0 + k as f64 * 2.5e-4).collect();
        let gl = 0.01;
        let lor = voigt_profile(2.0, gl, 0.0, &x).unwrap();
        let nearly = voigt_profile(2.0, gl, 1e-9, &x).unwrap();
        for ((xi, a), b) in x.iter().zip(&lor).zip(&nearly) {
            let exact = (gl / 2.0).powi(2) / ((xi - 2.0).powi(2) + (gl / 2.0).powi(2));
            assert!(rel(*a, exact) < 1e-12);
            assert!(rel(*b, exact) < 1e-6);
        }
        let gg = 0.01;
        let s = gg / FWHM_PER_SIGMA;
        // A vanishing Lorentzian still owns the far tail, so the nearly
        // Gaussian case is compared where the Gaussian dominates.
        for (gl, floor) in [(0.0, 1e-12), (1e-10, 1e-2)] {
            let g = voigt_profile(2.0, gl, gg, &x).unwrap();
            for (xi, v) in x.iter().zip(&g) {
                let exact = (-(xi - 2.0).powi(2) / (2.0 * s * s)).exp();
                if exact > floor {
                    assert!(rel(*v, exact) < 1e-6, "{xi} {v} {exact}");
                }
            }
        }
        assert!(voigt_profile(2.0, 0.0, 0.0, &x).is_err());
    }

    /// FWHM of a sampled unit-peak line by linear interpolation of the
    /// half-maximum crossings.
    fn fwhm(x: &[f64], y: &[f64]) -> f64 {
        let peak = y.iter().cloned().fold(f64::MIN, f64::max);
        let half = peak / 2.0;
        let i = y.iter().position(|&v| v >= half).unwrap();
        let j = y.iter().rposition(|&v| v >= half).unwrap();
        let left = x[i - 1] + (half - y[i - 1]) / (y[i] - y[i - 1]) * (x[i] - x[i - 1]);
        let right = x[j] + (y[j] - half) / (y[j] - y[j + 1]) * (x[j + 1] - x[j]);
        right - left
    }

    #[test]
    fn voigt_fwhm_matches_numerical_convolution() {
        let (gl, gg) = (0.01, 0.01);
        let h = 2e-5;
        let x: Vec<f64> = (-5000..=5000).map(|k| k as f64 * h).collect();
        let v = voigt_profile(0.0, gl, gg, &x).unwrap();
        // Trapezoidal convolution of the two normalized densities.
        let s = gg / FWHM_PER_SIGMA;
        let lor = |d: f64| (gl / 2.0) / std::f64::consts::PI / (d * d + (gl / 2.0).powi(2));
        let gauss = |d: f64| (-(d * d) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        let u: Vec<f64> = (-4000..=4000).map(|k| k as f64 * 1e-5).collect();
        let conv: Vec<f64> = x.iter().map(|&xi| u.iter().map(|&t| gauss(t) * lor(xi - t)).sum::<f64>() * 1e-5).collect();
        assert!((fwhm(&x, &v) - fwhm(&x, &conv)).abs() < 1e-4);
        // Olivero–Longbothum approximation as a sanity bound.
        let ol = 0.5346 * gl + (0.2166 * gl * gl + gg * gg).sqrt();
        assert!((fwhm(&x, &v) - ol).abs() < 1e-4);
    }

    #[test]
    fn area_additivity() {
        let m = SpectralFitModel::lorentzian(c2cb(), 4289.4, 0.0118, 1.9751, 0.42).unwrap();
        let h = 1e-4;
        let x: Vec<f64> = (-200_000..=200_000).map(|k| 1.9751 + k as f64 * h).collect();
        let area: f64 = lorentzian_sum(&m, &x).iter().sum::<f64>() * h;
        let expect = 4289.4 * std::f64::consts::PI * 0.0118 / 2.0 * (1.0 + 0.42 * m.linelist.sideband_weight());
        assert!(rel(area, expect) < 1e-3, "{area} {expect}");
    }

    #[test]
    fn table_three_zpl_width() {
        let m = SpectralFitModel::lorentzian(c2cb(), 4289.4, 0.0118, 1.9751, 0.42).unwrap();
        let h = 1e-6;
        let x: Vec<f64> = (-20_000..=20_000).map(|k| 1.9751 + k as f64 * h).collect();
        let y = lorentzian_sum(&m, &x);
        assert!((fwhm(&x, &y) - 0.0118).abs() < 1e-5);
    }
}
