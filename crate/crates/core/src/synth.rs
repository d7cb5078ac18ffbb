//! Seeded synthetic data: the fixtures that exercise the fitters against
//! known generating parameters.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::correlator::{BinGrid, CorrelationCurve};
use crate::error::{Error, Result};
use crate::spectral::SpectralFitModel;
use crate::ttio::{AxisUnit, DefectLineList, DwPolicy, Mode, SpectrumData, SpectrumPoint};

/// A C₂C_B-like list: sideband peaks at 160 and 180 meV plus a weak
/// two-phonon replica, with amplitudes summing to give `dw_sim = 0.47`.
pub fn c2cb_linelist() -> DefectLineList {
    DefectLineList::new(
        "C2CB",
        vec![
            Mode { name: Some("ZPL".into()), delta_e_ev: 0.0, rel_amp: 1.0 },
            Mode { name: Some("PSB-160".into()), delta_e_ev: 0.160, rel_amp: 0.45 },
            Mode { name: Some("PSB-180".into()), delta_e_ev: 0.180, rel_amp: 0.55 },
            Mode { name: Some("PSB-2ph".into()), delta_e_ev: 0.355, rel_amp: 0.1276596 },
        ],
        0.47,
        DwPolicy::Strict,
    )
    .expect("bundled line list is consistent")
}

/// Generating parameters of a Lorentzian spectrum fixture on an eV grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumFixture {
    pub a: f64,
    pub gamma: f64,
    pub x0_zpl: f64,
    pub f_sc: f64,
    pub lo_ev: f64,
    pub hi_ev: f64,
    pub step_ev: f64,
}

/// Liquid-phase-exfoliated sample: narrow ZPL, bright.
pub const LPE_SPECTRUM: SpectrumFixture =
    SpectrumFixture { a: 4289.4, gamma: 0.0118, x0_zpl: 1.9751, f_sc: 0.42, lo_ev: 1.6, hi_ev: 2.2, step_ev: 0.001 };

/// CVD-grown sample: broad ZPL, dim.
pub const CVD_SPECTRUM: SpectrumFixture =
    SpectrumFixture { a: 101.3, gamma: 0.096, x0_zpl: 2.1661, f_sc: 0.37, lo_ev: 1.6, hi_ev: 2.6, step_ev: 0.002 };

impl SpectrumFixture {
    pub fn axis(&self) -> Vec<f64> {
        let n = ((self.hi_ev - self.lo_ev) / self.step_ev).round() as usize;
        (0..=n).map(|k| self.lo_ev + k as f64 * self.step_ev).collect()
    }

    pub fn model(&self, linelist: DefectLineList) -> SpectralFitModel {
        SpectralFitModel::lorentzian(linelist, self.a, self.gamma, self.x0_zpl, self.f_sc).expect("fixture is valid")
    }
}

/// Samples Poisson counts around `model` on `axis` (eV). With `seed = None`
/// the expected counts are returned unchanged.
pub fn synthetic_spectrum(model: &SpectralFitModel, axis: &[f64], seed: Option<u64>) -> Result<SpectrumData> {
    let mean = model.evaluate(axis);
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let points = axis
        .iter()
        .zip(mean)
        .map(|(&x, m)| {
            let counts = match rng.as_mut() {
                Some(r) => poisson(r, m)? as f64,
                None => m,
            };
            Ok(SpectrumPoint { x, counts, sigma: None })
        })
        .collect::<Result<Vec<_>>>()?;
    SpectrumData::new(AxisUnit::ElectronVolts, points)
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(mean).map_err(|e| Error::InvalidArgument(format!("Poisson mean {mean}: {e}")))?;
    Ok(d.sample(rng) as u64)
}

/// Builds a correlation curve whose expected pair counts follow `g2(τ)` (τ
/// in seconds, evaluated at each bin centre). The normalization is chosen so
/// that the narrowest bin expects `unity_counts` pairs at `g2 = 1`. Counts
/// are Poisson draws for `Some(seed)` and rounded expectations otherwise.
pub fn synthetic_curve(
    grid: &BinGrid,
    resolution_ps: u32,
    g2: impl Fn(f64) -> f64,
    unity_counts: f64,
    seed: Option<u64>,
) -> Result<CorrelationCurve> {
    if !(unity_counts > 0.0) {
        return Err(Error::InvalidArgument("unity_counts must be positive".into()));
    }
    let widths = grid.widths();
    let w_min = *widths.iter().min().expect("grids have bins") as f64;
    let span = (grid.reach() * 10).max(1);
    // n1 n2 / T fixes the count scale; split it evenly over the channels.
    let n = (unity_counts * span as f64 / w_min).sqrt().round().max(1.0) as u64;
    let tick = resolution_ps as f64 * 1e-12;
    let mut rng = seed.map(ChaCha8Rng::seed_from_u64);
    let counts = grid
        .centers()
        .iter()
        .zip(&widths)
        .map(|(&c, &w)| {
            let mean = g2((c * tick).abs()) * (n as f64) * (n as f64) * w as f64 / span as f64;
            if !(mean < 2f64.powi(53)) {
                return Err(Error::InvalidArgument(format!("expected count {mean:e} is not representable")));
            }
            match rng.as_mut() {
                Some(r) => poisson(r, mean),
                None => Ok(mean.round().max(0.0) as u64),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CorrelationCurve::from_counts(grid.clone(), counts, n, n, span, resolution_ps))
}

/// Lag grid used throughout: linear ±50 ns in 0.5 ns bins joined to
/// logarithmic bins from 1 ns to 10 ms at 10 per decade, in 1 ps ticks.
pub fn standard_grid() -> BinGrid {
    const NS: i64 = 1000;
    let lin = BinGrid::linear(-50 * NS, 50 * NS, NS / 2).expect("valid grid");
    let log = BinGrid::logarithmic(NS, 10_000_000 * NS, 10.0).expect("valid grid");
    BinGrid::composite(&lin, &log).expect("valid grid")
}
