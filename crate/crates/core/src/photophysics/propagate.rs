use nalgebra::{Complex, DMatrix, DVector};

use super::expm::expm_generator;
use super::level_system::{steady_state, LevelSystem};
use crate::error::{Error, Result};

type C64 = Complex<f64>;

/// Condition-number ceiling on the eigenvector matrix above which the
/// eigen-expansion is abandoned for the matrix exponential.
pub const EIGEN_COND_LIMIT: f64 = 1e8;

/// Total-probability drift above which [`Propagator::Auto`] discards an
/// eigen-expansion value and recomputes that lag by matrix exponential.
/// Stiff generators (rate spreads of ~1e6) lose eigenvector accuracy of order
/// `eps * max_rate / |λ_slow|`, which shows up first as drift.
pub const AUTO_DRIFT_LIMIT: f64 = 1e-13;

/// How `p(τ) = exp(Mτ) p(0)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Propagator {
    /// Eigen-expansion, falling back to the matrix exponential when the
    /// generator is defective or the eigenvectors are ill-conditioned, and
    /// per lag when the expansion drifts by more than [`AUTO_DRIFT_LIMIT`].
    #[default]
    Auto,
    /// Eigen-expansion only; ill-conditioning is reported as an error.
    Eigen,
    /// Scaling-and-squaring matrix exponential for every lag.
    Expm,
}

/// Relaxation of the populations towards the steady state, expanded in the
/// eigenmodes of the generator: `p(τ) = p_ss + Re Σ_k m_k e^{λ_k τ}`.
#[derive(Debug, Clone)]
pub struct Relaxation {
    pub p_ss: Vec<f64>,
    /// Nonzero eigenvalues.
    pub lambdas: Vec<C64>,
    /// Mode population vectors `c_k v_k`, one per eigenvalue.
    pub modes: Vec<Vec<C64>>,
}

impl Relaxation {
    /// Expands `rho0` in the eigenvectors of the generator. Returns `None`
    /// when the eigenvector basis is ill-conditioned.
    pub fn new(sys: &LevelSystem, p_ss: &[f64], rho0: &[f64]) -> Option<Self> {
        let n = sys.n_levels();
        let m = sys.generator();
        let mut eig: Vec<C64> = m.complex_eigenvalues().iter().copied().collect();
        // The stationary eigenvalue is exactly zero; replace its numerical
        // estimate and use the steady state as its eigenvector.
        let zero = (0..n).min_by(|&a, &b| eig[a].norm().total_cmp(&eig[b].norm()))?;
        eig.remove(zero);

        let mc = m.map(|v| C64::new(v, 0.0));
        let mut basis = DMatrix::<C64>::zeros(n, n);
        for (r, &p) in p_ss.iter().enumerate() {
            basis[(r, 0)] = C64::new(p, 0.0);
        }
        for (k, &lam) in eig.iter().enumerate() {
            let shifted = &mc - DMatrix::<C64>::identity(n, n) * lam;
            let svd = shifted.svd(false, true);
            let vt = svd.v_t?;
            let imin = (0..n).min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))?;
            for r in 0..n {
                basis[(r, k + 1)] = vt[(imin, r)].conj();
            }
        }
        let sv = basis.clone().svd(false, false).singular_values;
        let (smax, smin) = sv.iter().fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
        if !(smin > 0.0) || smax / smin > EIGEN_COND_LIMIT {
            return None;
        }
        let rhs = DVector::from_iterator(n, rho0.iter().map(|&v| C64::new(v, 0.0)));
        let coef = basis.clone().lu().solve(&rhs)?;
        let modes = (0..eig.len())
            .map(|k| (0..n).map(|r| basis[(r, k + 1)] * coef[k + 1]).collect())
            .collect();
        Some(Self { p_ss: p_ss.to_vec(), lambdas: eig, modes })
    }

    pub fn populations(&self, tau: f64) -> Vec<f64> {
        let mut p = self.p_ss.clone();
        for (lam, mode) in self.lambdas.iter().zip(&self.modes) {
            let e = (lam * tau).exp();
            for (pi, m) in p.iter_mut().zip(mode) {
                *pi += (m * e).re;
            }
        }
        p
    }
}

fn check_taus(taus: &[f64]) -> Result<()> {
    if let Some(t) = taus.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::InvalidArgument(format!("lag {t} must be finite and >= 0")));
    }
    Ok(())
}

/// Populations at each lag after starting from `rho0`.
pub fn populations(sys: &LevelSystem, rho0: &[f64], taus: &[f64], method: Propagator) -> Result<Vec<Vec<f64>>> {
    check_taus(taus)?;
    if rho0.len() != sys.n_levels() {
        return Err(Error::InvalidArgument("initial state has the wrong number of levels".into()));
    }
    let p_ss = steady_state(sys)?;
    let relax = match method {
        Propagator::Expm => None,
        _ => Relaxation::new(sys, &p_ss, rho0),
    };
    let m = sys.generator();
    let p0 = DVector::from_column_slice(rho0);
    let by_expm = |t: f64| (expm_generator(&(&m * t)) * &p0).as_slice().to_vec();
    let drifted = |p: &[f64]| (p.iter().sum::<f64>() - 1.0).abs() > AUTO_DRIFT_LIMIT;
    let at = |t: f64| -> Vec<f64> {
        if t == 0.0 {
            return rho0.to_vec();
        }
        match (&relax, method) {
            (Some(r), Propagator::Eigen) => r.populations(t),
            (Some(r), _) => {
                let p = r.populations(t);
                if drifted(&p) {
                    by_expm(t)
                } else {
                    p
                }
            }
            (None, _) => by_expm(t),
        }
    };
    if method == Propagator::Eigen && relax.is_none() {
        return Err(Error::Degenerate("generator eigenvectors are ill-conditioned".into()));
    }
    Ok(taus.iter().map(|&t| at(t)).collect())
}

/// Normalized intensity correlation of an emitter mixed with Poissonian
/// background: `g2 = 1 - σ² + σ² I(τ)/I_ss`, where `I(τ)` is the emission
/// rate at lag `τ` after a photon, starting from the post-emission state.
pub fn g2_rate_equation(sys: &LevelSystem, sigma: f64, taus: &[f64]) -> Result<Vec<f64>> {
    g2_rate_equation_with(sys, sigma, taus, Propagator::Auto)
}

pub fn g2_rate_equation_with(sys: &LevelSystem, sigma: f64, taus: &[f64], method: Propagator) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    let p_ss = steady_state(sys)?;
    let i_ss = sys.emission_rate(&p_ss);
    if !(i_ss > 0.0) {
        return Err(Error::Degenerate("steady state emits no photons".into()));
    }
    let rho0 = sys.post_emission_state(&p_ss);
    let pops = populations(sys, &rho0, taus, method)?;
    let s2 = sigma * sigma;
    Ok(pops.iter().map(|p| 1.0 - s2 + s2 * sys.emission_rate(p) / i_ss).collect())
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::InvalidArgument(format!("signal fraction {sigma} must lie in (0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timescale {
    /// Decay time in seconds.
    pub tau: f64,
    /// Coefficient of `e^{-τ/tau}` in `g2(τ) - 1` at σ = 1.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimescaleMethod {
    /// Read directly off the eigen-expansion.
    Eigen,
    /// Repeated or complex eigenvalues: decay times from the eigenvalue
    /// real parts, weights by least squares against sampled matrix-exponential
    /// solutions.
    SampledFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timescales {
    /// Ascending in `tau`.
    pub components: Vec<Timescale>,
    pub method: TimescaleMethod,
}

impl Timescales {
    pub fn taus(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.tau).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight).collect()
    }

    /// `g2(τ)` of the equivalent multi-exponential at signal fraction σ.
    pub fn g2(&self, sigma: f64, tau: f64) -> f64 {
        let s: f64 = self.components.iter().map(|c| c.weight * (-tau / c.tau).exp()).sum();
        1.0 - sigma * sigma + sigma * sigma * (1.0 + s)
    }
}

/// Relative spread below which eigenvalues are treated as repeated.
const MERGE_TOL: f64 = 1e-6;

/// Decay constants of the emission correlation and their amplitudes.
pub fn effective_timescales(sys: &LevelSystem) -> Result<Timescales> {
    let p_ss = steady_state(sys)?;
    let i_ss = sys.emission_rate(&p_ss);
    if !(i_ss > 0.0) {
        return Err(Error::Degenerate("steady state emits no photons".into()));
    }
    let rho0 = sys.post_emission_state(&p_ss);
    let relax = Relaxation::new(sys, &p_ss, &rho0);
    if let Some(r) = &relax {
        let real = r.lambdas.iter().all(|l| l.im.abs() <= 1e-9 * l.norm());
        let mut re: Vec<f64> = r.lambdas.iter().map(|l| l.re).collect();
        re.sort_by(f64::total_cmp);
        let distinct = re.windows(2).all(|w| (w[1] - w[0]).abs() > MERGE_TOL * w[0].abs().max(w[1].abs()));
        if real && distinct {
            let mut components: Vec<Timescale> = r
                .lambdas
                .iter()
                .zip(&r.modes)
                .map(|(l, mode)| {
                    let flux: f64 = sys.emissive().iter().map(|&(i, j)| mode[i].re * sys.rate(i, j)).sum();
                    Timescale { tau: -1.0 / l.re, weight: flux / i_ss }
                })
                .collect();
            components.sort_by(|a, b| a.tau.total_cmp(&b.tau));
            return Ok(Timescales { components, method: TimescaleMethod::Eigen });
        }
    }
    sampled_timescales(sys)
}

fn sampled_timescales(sys: &LevelSystem) -> Result<Timescales> {
    let m = sys.generator();
    let mut rates: Vec<f64> = m.complex_eigenvalues().iter().map(|l| -l.re).filter(|&r| r > 0.0).collect();
    rates.sort_by(f64::total_cmp);
    let tol = 1e-9 * sys.max_rate();
    rates.retain(|&r| r > tol);
    let mut merged: Vec<f64> = Vec::new();
    for r in rates {
        match merged.last_mut() {
            Some(last) if (r - *last).abs() <= 1e-4 * r => *last = 0.5 * (*last + r),
            _ => merged.push(r),
        }
    }
    if merged.is_empty() {
        return Err(Error::Degenerate("generator has no decaying modes".into()));
    }
    let (lo, hi) = (1.0 / merged.last().unwrap(), 1.0 / merged[0]);
    let samples = 40 * merged.len().max(2);
    let taus: Vec<f64> = (0..samples)
        .map(|k| lo * 0.01 * (hi * 30.0 / (lo * 0.01)).powf(k as f64 / (samples - 1) as f64))
        .collect();
    let g2 = g2_rate_equation_with(sys, 1.0, &taus, Propagator::Expm)?;
    let design = DMatrix::from_fn(samples, merged.len(), |r, c| (-taus[r] * merged[c]).exp());
    let y = DVector::from_iterator(samples, g2.iter().map(|g| g - 1.0));
    let w = design
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::Degenerate(format!("timescale weight fit failed: {e}")))?;
    let mut components: Vec<Timescale> =
        merged.iter().zip(w.iter()).map(|(&r, &wt)| Timescale { tau: 1.0 / r, weight: wt }).collect();
    components.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    Ok(Timescales { components, method: TimescaleMethod::SampledFit })
}
