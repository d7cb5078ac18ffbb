use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::outcome::{data_digest, FitOutcome};
use crate::error::{Error, Result};

/// Domain of a parameter, enforced by fitting an unconstrained internal
/// coordinate `u` mapped onto it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bound {
    Free,
    /// `p = exp(u)`.
    Positive,
    /// `p = u²`; can reach zero.
    NonNegative,
    /// `p = 1 / (1 + exp(-u))`.
    UnitInterval,
    /// `p = lo + (hi - lo) / (1 + exp(-u))`.
    Interval(f64, f64),
}

impl Bound {
    fn contains(self, p: f64) -> bool {
        match self {
            Bound::Free => p.is_finite(),
            Bound::Positive => p > 0.0 && p.is_finite(),
            Bound::NonNegative => p >= 0.0 && p.is_finite(),
            Bound::UnitInterval => p > 0.0 && p < 1.0,
            Bound::Interval(lo, hi) => p > lo && p < hi,
        }
    }

    fn to_internal(self, p: f64) -> f64 {
        match self {
            Bound::Free => p,
            Bound::Positive => p.ln(),
            Bound::NonNegative => p.sqrt(),
            Bound::UnitInterval => (p / (1.0 - p)).ln(),
            Bound::Interval(lo, hi) => {
                let q = (p - lo) / (hi - lo);
                (q / (1.0 - q)).ln()
            }
        }
    }

    fn to_external(self, u: f64) -> f64 {
        match self {
            Bound::Free => u,
            Bound::Positive => u.exp(),
            Bound::NonNegative => u * u,
            Bound::UnitInterval => logistic(u),
            Bound::Interval(lo, hi) => lo + (hi - lo) * logistic(u),
        }
    }

    /// `dp/du`.
    fn slope(self, u: f64) -> f64 {
        match self {
            Bound::Free => 1.0,
            Bound::Positive => u.exp(),
            Bound::NonNegative => 2.0 * u,
            Bound::UnitInterval => {
                let s = logistic(u);
                s * (1.0 - s)
            }
            Bound::Interval(lo, hi) => {
                let s = logistic(u);
                (hi - lo) * s * (1.0 - s)
            }
        }
    }
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub fixed: bool,
}

impl Param {
    pub fn new(name: &str, value: f64, bound: Bound) -> Self {
        Self { name: name.to_owned(), value, bound, fixed: false }
    }

    pub fn fixed(name: &str, value: f64) -> Self {
        Self { name: name.to_owned(), value, bound: Bound::Free, fixed: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative decrease of χ² counted as stalled.
    pub ftol: f64,
    /// Scaled gradient norm counted as stationary.
    pub gtol: f64,
    /// Successive stalled or stationary iterations required to stop.
    pub patience: usize,
    /// Relative ceiling on the smallest eigenvalue of the correlation-scaled
    /// normal matrix below which the fit is declared unidentifiable.
    pub singular_tol: f64,
    /// Report an unidentifiable direction as a warning, with a
    /// pseudo-inverse covariance, instead of failing.
    pub allow_singular: bool,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 10_000, ftol: 1e-10, gtol: 1e-10, patience: 3, singular_tol: 1e-12, allow_singular: false }
    }
}

/// Weighted nonlinear least squares by Levenberg–Marquardt.
///
/// `model` maps the full external parameter vector (in `params` order,
/// fixed ones included) to predictions for every data point. Model errors
/// during trial steps reject the step. The covariance is
/// `(Jᵀ W J)⁻¹ χ²_red` with `J` taken with respect to the external
/// parameters. Residuals in the outcome are `y - model`.
pub fn least_squares<F>(
    model: F,
    x: &[f64],
    y: &[f64],
    sigma: &[f64],
    params: &[Param],
    opts: &LmOptions,
) -> Result<FitOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = y.len();
    if sigma.len() != n || x.len() != n {
        return Err(Error::InvalidArgument("x, y and sigma lengths differ".into()));
    }
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument(format!("sigma {s} must be positive")));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("data value {v} is not finite")));
    }
    for p in params {
        if !p.fixed && !p.bound.contains(p.value) {
            return Err(Error::InvalidArgument(format!("initial {} = {} violates its bound", p.name, p.value)));
        }
    }
    let free: Vec<usize> = (0..params.len()).filter(|&i| !params[i].fixed).collect();
    let k = free.len();
    if n <= k {
        return Err(Error::InvalidArgument(format!("{n} points cannot constrain {k} parameters")));
    }

    let problem = Problem { model: &model, y, sigma, params, free: &free };
    let mut u: Vec<f64> = free.iter().map(|&i| params[i].bound.to_internal(params[i].value)).collect();
    let mut r = problem.residuals(&u)?;
    let mut chi2 = sum_sq(&r);
    let mut lambda = 1e-3;
    let mut calm = 0usize;
    let mut iterations = 0usize;
    let mut converged = k == 0;

    if k > 0 && !opts.allow_singular {
        let jac = problem.jacobian(&u, &r)?;
        check_identifiable(&jac, &problem, opts)?;
    }
    while k > 0 && iterations < opts.max_iterations {
        iterations += 1;
        let jac = problem.jacobian(&u, &r)?;
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * DVector::from_column_slice(&r);
        let scaled_grad =
            (0..k).map(|i| g[i].abs() / (a[(i, i)] * chi2).sqrt().max(f64::MIN_POSITIVE)).fold(0.0, f64::max);
        if chi2 <= f64::MIN_POSITIVE {
            converged = true;
            break;
        }
        let mut accepted = None;
        while lambda < 1e20 {
            let mut damped = a.clone();
            let floor = 1e-12 * (0..k).map(|i| a[(i, i)]).fold(f64::MIN_POSITIVE, f64::max);
            for i in 0..k {
                damped[(i, i)] += lambda * a[(i, i)].max(floor);
            }
            if let Some(step) = damped.cholesky().map(|c| c.solve(&g)) {
                let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                if let Ok(rt) = problem.residuals(&trial) {
                    let c = sum_sq(&rt);
                    if c.is_finite() && c <= chi2 {
                        accepted = Some((trial, rt, c));
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        let Some((trial, rt, c)) = accepted else {
            // No damped step lowers χ²: a minimum to working precision unless
            // the gradient says otherwise.
            converged = scaled_grad < 1e-4;
            break;
        };
        let rel_drop = (chi2 - c) / chi2;
        u = trial;
        r = rt;
        chi2 = c;
        lambda = (lambda / 10.0).max(1e-12);
        if rel_drop < opts.ftol || scaled_grad < opts.gtol {
            calm += 1;
            if calm >= opts.patience {
                converged = true;
                break;
            }
        } else {
            calm = 0;
        }
    }

    let ext = problem.external(&u);
    let dof = (n - k) as f64;
    let chi2_red = chi2 / dof;
    let mut covariance = vec![vec![0.0; k]; k];
    let mut warnings = Vec::new();
    if !converged {
        warnings.push("fit did not converge".to_string());
    }
    if k > 0 {
        let jac = problem.jacobian(&u, &r)?;
        let inv = match check_identifiable(&jac, &problem, opts) {
            Ok(a) => a.try_inverse().ok_or_else(|| Error::Singular { direction: "normal matrix is not invertible".into() })?,
            Err(Error::Singular { direction }) if opts.allow_singular => {
                warnings.push(format!("parameters not identifiable along {direction}"));
                let a = jac.transpose() * &jac;
                let eps = 1e-12 * a.amax();
                a.pseudo_inverse(eps).map_err(|e| Error::Singular { direction: e.to_string() })?
            }
            Err(e) => return Err(e),
        };
        let slopes: Vec<f64> = free.iter().zip(&u).map(|(&i, &ui)| params[i].bound.slope(ui)).collect();
        for i in 0..k {
            for j in 0..k {
                covariance[i][j] = slopes[i] * slopes[j] * inv[(i, j)] * chi2_red;
            }
        }
        for i in 0..k {
            for j in 0..i {
                let m = 0.5 * (covariance[i][j] + covariance[j][i]);
                covariance[i][j] = m;
                covariance[j][i] = m;
            }
        }
    }
    let model_y = model(&ext)?;
    Ok(FitOutcome {
        model_id: String::new(),
        names: free.iter().map(|&i| params[i].name.clone()).collect(),
        params: free.iter().map(|&i| ext[i]).collect(),
        errors: (0..k).map(|i| covariance[i][i].max(0.0).sqrt()).collect(),
        covariance,
        chi2,
        chi2_red,
        n_points: n,
        n_params: k,
        converged,
        iterations,
        residuals: y.iter().zip(&model_y).map(|(a, b)| a - b).collect(),
        fixed: params.iter().filter(|p| p.fixed).map(|p| (p.name.clone(), p.value)).collect(),
        derived: Vec::new(),
        warnings,
        data_digest: data_digest(x, y, sigma),
    })
}

/// How data points are weighted.
#[derive(Debug, Clone, Copy)]
pub enum Weighting<'a> {
    /// Fixed 1σ uncertainties.
    Sigma(&'a [f64]),
    /// Poisson counts: `y_i = scale_i * counts_i`, see
    /// [`least_squares_poisson`].
    Poisson(&'a [f64]),
}

/// Dispatches to [`least_squares`] or [`least_squares_poisson`].
pub fn least_squares_weighted<F>(
    model: F,
    x: &[f64],
    y: &[f64],
    weighting: Weighting<'_>,
    params: &[Param],
    opts: &LmOptions,
) -> Result<FitOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    match weighting {
        Weighting::Sigma(s) => least_squares(model, x, y, s, params, opts),
        Weighting::Poisson(scale) => least_squares_poisson(model, x, y, scale, params, opts),
    }
}

/// Poisson deviance `2 Σ [c ln(c/μ) - (c - μ)]` of a fit outcome, with
/// observed counts `c = y/scale` and expected counts `μ = (y - r)/scale`.
pub fn poisson_deviance(y: &[f64], residuals: &[f64], scale: &[f64]) -> f64 {
    y.iter()
        .zip(residuals)
        .zip(scale)
        .map(|((&y, &r), &s)| {
            let c = y / s;
            let mu = ((y - r) / s).max(MIN_EXPECTED_COUNT);
            let log_term = if c > 0.0 { c * (c / mu).ln() } else { 0.0 };
            2.0 * (log_term - (c - mu))
        })
        .sum()
}

/// Smallest expected count a Poisson weight is built from.
pub const MIN_EXPECTED_COUNT: f64 = 1e-6;

/// Poisson maximum-likelihood fit by iteratively reweighted least squares.
///
/// Point `i` holds `y_i = scale_i * counts_i`. Weights come from the model's
/// expected counts, `sigma_i² = scale_i * model_i`, refreshed after each LM
/// solve until the parameters stop moving; at that fixed point the normal
/// equations coincide with the Poisson likelihood score. Weighting by the
/// observed counts instead biases low-count points downward.
pub fn least_squares_poisson<F>(
    model: F,
    x: &[f64],
    y: &[f64],
    scale: &[f64],
    params: &[Param],
    opts: &LmOptions,
) -> Result<FitOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if scale.len() != y.len() || scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidArgument("count scales must be positive and match the data".into()));
    }
    let weights = |ext: &[f64]| -> Result<Vec<f64>> {
        let m = model(ext)?;
        if m.len() != y.len() {
            return Err(Error::Model(format!("model returned {} values for {} points", m.len(), y.len())));
        }
        Ok(m.iter().zip(scale).map(|(&v, &s)| (s * v.max(s * MIN_EXPECTED_COUNT)).sqrt()).collect())
    };
    let mut current: Vec<Param> = params.to_vec();
    let mut sigma = weights(&current.iter().map(|p| p.value).collect::<Vec<_>>())?;
    let mut outcome = least_squares(&model, x, y, &sigma, &current, opts)?;
    for _ in 0..50 {
        let mut moved = 0.0f64;
        for p in current.iter_mut().filter(|p| !p.fixed) {
            let v = outcome.value(&p.name).expect("free parameter is reported");
            moved = moved.max(((v - p.value) / p.value.abs().max(f64::MIN_POSITIVE)).abs());
            p.value = v;
        }
        let next = weights(&current.iter().map(|p| p.value).collect::<Vec<_>>())?;
        let shift = next.iter().zip(&sigma).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);
        if moved < 1e-10 && shift < 1e-8 {
            break;
        }
        sigma = next;
        outcome = least_squares(&model, x, y, &sigma, &current, opts)?;
    }
    outcome.data_digest = data_digest(x, y, scale);
    Ok(outcome)
}

struct Problem<'a, F> {
    model: &'a F,
    y: &'a [f64],
    sigma: &'a [f64],
    params: &'a [Param],
    free: &'a [usize],
}

impl<F: Fn(&[f64]) -> Result<Vec<f64>>> Problem<'_, F> {
    fn external(&self, u: &[f64]) -> Vec<f64> {
        let mut p: Vec<f64> = self.params.iter().map(|p| p.value).collect();
        for (&i, &ui) in self.free.iter().zip(u) {
            p[i] = self.params[i].bound.to_external(ui);
        }
        p
    }

    fn residuals(&self, u: &[f64]) -> Result<Vec<f64>> {
        let f = (self.model)(&self.external(u))?;
        if f.len() != self.y.len() {
            return Err(Error::Model(format!("model returned {} values for {} points", f.len(), self.y.len())));
        }
        let r: Vec<f64> = self.y.iter().zip(&f).zip(self.sigma).map(|((y, f), s)| (y - f) / s).collect();
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Model("model produced non-finite values".into()));
        }
        Ok(r)
    }

    /// Central-difference Jacobian of the model (not the residual) with
    /// respect to the internal coordinates, rows scaled by `1/sigma`.
    fn jacobian(&self, u: &[f64], r0: &[f64]) -> Result<DMatrix<f64>> {
        let mut jac = DMatrix::zeros(r0.len(), u.len());
        for c in 0..u.len() {
            let h = 6e-6 * u[c].abs().max(1.0);
            let mut up = u.to_vec();
            up[c] += h;
            let mut dn = u.to_vec();
            dn[c] -= h;
            let (rp, rm) = (self.residuals(&up)?, self.residuals(&dn)?);
            for row in 0..r0.len() {
                // r = (y - f)/s, so df/du / s = -(dr/du).
                jac[(row, c)] = (rm[row] - rp[row]) / (2.0 * h);
            }
        }
        Ok(jac)
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Returns `JᵀJ`, or a [`Error::Singular`] naming the direction in parameter
/// space the data cannot constrain.
fn check_identifiable<F>(jac: &DMatrix<f64>, problem: &Problem<'_, F>, opts: &LmOptions) -> Result<DMatrix<f64>> {
    let a = jac.transpose() * jac;
    let k = a.nrows();
    let d: Vec<f64> = (0..k).map(|i| a[(i, i)].sqrt()).collect();
    if let Some(i) = d.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Singular { direction: problem.params[problem.free[i]].name.clone() });
    }
    let corr = DMatrix::from_fn(k, k, |i, j| a[(i, j)] / (d[i] * d[j]));
    let eig = SymmetricEigen::new(corr);
    let (imin, &emin) =
        eig.eigenvalues.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)).expect("at least one parameter");
    let emax = eig.eigenvalues.amax();
    if emin <= opts.singular_tol * emax {
        let v = eig.eigenvectors.column(imin);
        let mut terms: Vec<(f64, &str)> = (0..k)
            .filter(|&i| v[i].abs() > 1e-3)
            .map(|i| (v[i], problem.params[problem.free[i]].name.as_str()))
            .collect();
        if terms.first().is_some_and(|t| t.0 < 0.0) {
            terms.iter_mut().for_each(|t| t.0 = -t.0);
        }
        let direction = terms.iter().map(|(c, name)| format!("{c:+.3}*{name}")).collect::<Vec<_>>().join(" ");
        return Err(Error::Singular { direction });
    }
    Ok(a)
}
