use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An N-level emitter described by transition rates `k[i -> j]` in s⁻¹.
///
/// Levels are zero-based here; level 0 is the ground state ("level 1" in the
/// usual spectroscopic numbering). Emissive transitions produce a detectable
/// photon when they occur.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSystem {
    n: usize,
    rates: Vec<f64>,
    emissive: Vec<(usize, usize)>,
}

/// Rates of the four-level shelving model: pump 1→2, radiative decay 2→1,
/// intersystem crossing 2→3 and 2→4, and metastable decay 3→1 and 4→1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourLevelRates {
    pub k12: f64,
    pub k21: f64,
    pub k23: f64,
    pub k24: f64,
    pub k31: f64,
    pub k41: f64,
}

impl LevelSystem {
    /// `transitions` are `(from, to, rate)` triples; repeated pairs add up.
    pub fn from_transitions(n: usize, transitions: &[(usize, usize, f64)], emissive: &[(usize, usize)]) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("a level system needs at least two levels".into()));
        }
        let mut rates = vec![0.0; n * n];
        for &(i, j, k) in transitions {
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("transition {i}->{j} outside {n} levels")));
            }
            if i == j {
                return Err(Error::InvalidArgument(format!("self-transition on level {i}")));
            }
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::InvalidArgument(format!("rate {i}->{j} = {k} must be finite and >= 0")));
            }
            rates[i * n + j] += k;
        }
        let mut emissive = emissive.to_vec();
        emissive.sort_unstable();
        emissive.dedup();
        if let Some(&(i, j)) = emissive.iter().find(|&&(i, j)| i >= n || j >= n || i == j) {
            return Err(Error::InvalidArgument(format!("invalid emissive transition {i}->{j}")));
        }
        if !emissive.iter().any(|&(i, j)| rates[i * n + j] > 0.0) {
            return Err(Error::InvalidArgument("no emissive transition has a positive rate".into()));
        }
        Ok(Self { n, rates, emissive })
    }

    pub fn two_level(k12: f64, k21: f64) -> Result<Self> {
        Self::from_transitions(2, &[(0, 1, k12), (1, 0, k21)], &[(1, 0)])
    }

    pub fn three_level(k12: f64, k21: f64, k23: f64, k31: f64) -> Result<Self> {
        Self::from_transitions(3, &[(0, 1, k12), (1, 0, k21), (1, 2, k23), (2, 0, k31)], &[(1, 0)])
    }

    pub fn four_level(r: FourLevelRates) -> Result<Self> {
        Self::from_transitions(
            4,
            &[(0, 1, r.k12), (1, 0, r.k21), (1, 2, r.k23), (1, 3, r.k24), (2, 0, r.k31), (3, 0, r.k41)],
            &[(1, 0)],
        )
    }

    pub fn n_levels(&self) -> usize {
        self.n
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.rates[from * self.n + to]
    }

    pub fn emissive(&self) -> &[(usize, usize)] {
        &self.emissive
    }

    pub fn max_rate(&self) -> f64 {
        self.rates.iter().copied().fold(0.0, f64::max)
    }

    /// Total rate out of `level`.
    pub fn exit_rate(&self, level: usize) -> f64 {
        self.rates[level * self.n..(level + 1) * self.n].iter().sum()
    }

    /// Column-generator `M` with `dp/dt = M p`: `M[j][i] = k[i -> j]` off the
    /// diagonal and `M[i][i] = -sum_j k[i -> j]`. Columns sum to zero.
    pub fn generator(&self) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |j, i| if i == j { -self.exit_rate(i) } else { self.rate(i, j) })
    }

    /// Photon emission rate out of a population vector.
    pub fn emission_rate(&self, p: &[f64]) -> f64 {
        self.emissive.iter().map(|&(i, j)| p[i] * self.rate(i, j)).sum()
    }

    /// Level populations immediately after a detected photon, given the
    /// populations just before: each emissive flux deposits into its target.
    pub fn post_emission_state(&self, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for &(i, j) in &self.emissive {
            out[j] += p[i] * self.rate(i, j);
        }
        let s: f64 = out.iter().sum();
        if s > 0.0 {
            out.iter_mut().for_each(|v| *v /= s);
        }
        out
    }
}

/// Stationary populations by Grassmann–Taksar–Heyman state reduction, which
/// avoids subtractive cancellation and keeps every component non-negative.
pub fn steady_state(sys: &LevelSystem) -> Result<Vec<f64>> {
    let n = sys.n;
    let mut p: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { sys.rate(i, j) }).collect()).collect();
    for k in (1..n).rev() {
        let s: f64 = p[k][..k].iter().sum();
        if s <= 0.0 {
            return Err(Error::Degenerate(format!(
                "level {k} cannot return to the lower levels (absorbing or disconnected)"
            )));
        }
        for i in 0..k {
            p[i][k] /= s;
        }
        for i in 0..k {
            let pik = p[i][k];
            if pik == 0.0 {
                continue;
            }
            for j in 0..k {
                if i != j {
                    p[i][j] += pik * p[k][j];
                }
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for j in 1..n {
        pi[j] = (0..j).map(|i| pi[i] * p[i][j]).sum();
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Ok(pi)
}
