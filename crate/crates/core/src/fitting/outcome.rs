use sha2::{Digest, Sha256};

/// A quantity computed from the fitted parameters, with its error propagated
/// through the covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Derived {
    pub name: String,
    pub value: f64,
    pub error: f64,
}

/// Result of a weighted least-squares fit.
///
/// `params`, `errors` and the rows/columns of `covariance` follow `names`,
/// which lists the free parameters only. Held parameters live in `fixed`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub model_id: String,
    pub names: Vec<String>,
    pub params: Vec<f64>,
    pub errors: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub chi2_red: f64,
    pub n_points: usize,
    pub n_params: usize,
    pub converged: bool,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub fixed: Vec<(String, f64)>,
    pub derived: Vec<Derived>,
    pub warnings: Vec<String>,
    pub data_digest: String,
}

impl FitOutcome {
    /// Value of a free, fixed or derived quantity by name.
    pub fn value(&self, name: &str) -> Option<f64> {
        self.index(name)
            .map(|i| self.params[i])
            .or_else(|| self.fixed.iter().find(|(n, _)| n == name).map(|(_, v)| *v))
            .or_else(|| self.derived.iter().find(|d| d.name == name).map(|d| d.value))
    }

    /// 1σ error of a free or derived quantity; zero for fixed ones.
    pub fn error(&self, name: &str) -> Option<f64> {
        self.index(name)
            .map(|i| self.errors[i])
            .or_else(|| self.fixed.iter().find(|(n, _)| n == name).map(|_| 0.0))
            .or_else(|| self.derived.iter().find(|d| d.name == name).map(|d| d.error))
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn push_derived(&mut self, name: &str, value: f64, error: f64) {
        self.derived.retain(|d| d.name != name);
        self.derived.push(Derived { name: name.to_owned(), value, error });
    }

    /// Multi-start preference: lower χ², with costs equal to 1e-12 relative
    /// broken by the lexicographically smaller parameter vector taken in
    /// parameter-name order.
    pub(crate) fn better_than(&self, other: &FitOutcome) -> bool {
        let tol = 1e-12 * self.chi2.abs().max(other.chi2.abs());
        if (self.chi2 - other.chi2).abs() > tol {
            return self.chi2 < other.chi2;
        }
        fn key(f: &FitOutcome) -> Vec<(&str, f64)> {
            let mut v: Vec<(&str, f64)> = f.names.iter().map(String::as_str).zip(f.params.iter().copied()).collect();
            v.sort_by(|x, y| x.0.cmp(y.0));
            v
        }
        for (x, y) in key(self).iter().zip(&key(other)) {
            match x.1.total_cmp(&y.1) {
                std::cmp::Ordering::Equal => continue,
                o => return o == std::cmp::Ordering::Less,
            }
        }
        false
    }

    /// An outcome with no parameters at all, e.g. a fixed-model evaluation.
    pub fn empty(model_id: &str) -> Self {
        Self {
            model_id: model_id.to_owned(),
            names: Vec::new(),
            params: Vec::new(),
            errors: Vec::new(),
            covariance: Vec::new(),
            chi2: 0.0,
            chi2_red: 0.0,
            n_points: 0,
            n_params: 0,
            converged: true,
            iterations: 0,
            residuals: Vec::new(),
            fixed: Vec::new(),
            derived: Vec::new(),
            warnings: Vec::new(),
            data_digest: data_digest(&[], &[], &[]),
        }
    }
}

/// SHA-256 over the little-endian bytes of the fitted data arrays.
pub fn data_digest(x: &[f64], y: &[f64], sigma: &[f64]) -> String {
    let mut h = Sha256::new();
    for arr in [x, y, sigma] {
        h.update((arr.len() as u64).to_le_bytes());
        for v in arr {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}
