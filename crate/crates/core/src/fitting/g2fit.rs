use std::collections::BTreeMap;
use std::str::FromStr;

use super::lm::{least_squares_poisson, Bound, LmOptions, Param};
use super::outcome::FitOutcome;
use crate::correlator::CorrelationCurve;
use crate::error::{Error, Result};
use crate::photophysics::{effective_timescales, g2_multi_exponential, g2_rate_equation, FourLevelRates, LevelSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum G2Model {
    /// Antibunching plus one bunching exponential.
    Exp3Level,
    /// Antibunching plus two bunching exponentials.
    Exp4Level,
    /// Three-level rate equations (one metastable level).
    Rate3,
    /// Four-level rate equations (two metastable levels).
    Rate4,
}

impl G2Model {
    pub fn id(self) -> &'static str {
        match self {
            G2Model::Exp3Level => "exp3level",
            G2Model::Exp4Level => "exp4level",
            G2Model::Rate3 => "rate3",
            G2Model::Rate4 => "rate4",
        }
    }

    /// Parameter names in fit order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            G2Model::Exp3Level => &["tau21", "tau3", "a3", "sigma"],
            G2Model::Exp4Level => &["tau21", "tau3", "tau4", "a3", "a4", "sigma"],
            G2Model::Rate3 => &["k12", "k21", "k23", "k31", "sigma"],
            G2Model::Rate4 => &["k12", "k21", "k23", "k24", "k31", "k41", "sigma"],
        }
    }

    pub fn is_rate(self) -> bool {
        matches!(self, G2Model::Rate3 | G2Model::Rate4)
    }

    /// Evaluates the model at lags `taus` (seconds) for a full parameter
    /// vector in [`Self::param_names`] order.
    pub fn evaluate(self, p: &[f64], taus: &[f64]) -> Result<Vec<f64>> {
        match self {
            G2Model::Exp3Level => g2_multi_exponential(p[0], p[1], 1.0, p[2], 0.0, p[3], taus),
            G2Model::Exp4Level => g2_multi_exponential(p[0], p[1], p[2], p[3], p[4], p[5], taus),
            G2Model::Rate3 | G2Model::Rate4 => {
                let sigma = *p.last().unwrap();
                let abs: Vec<f64> = taus.iter().map(|t| t.abs()).collect();
                g2_rate_equation(&self.level_system(p)?, sigma, &abs)
            }
        }
    }

    /// The level system of a rate model's parameter vector.
    pub fn level_system(self, p: &[f64]) -> Result<LevelSystem> {
        match self {
            G2Model::Rate3 => LevelSystem::three_level(p[0], p[1], p[2], p[3]),
            G2Model::Rate4 => LevelSystem::four_level(FourLevelRates {
                k12: p[0],
                k21: p[1],
                k23: p[2],
                k24: p[3],
                k31: p[4],
                k41: p[5],
            }),
            _ => Err(Error::InvalidArgument(format!("{} is not a rate model", self.id()))),
        }
    }
}

impl FromStr for G2Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp3level" | "exp3" => Ok(G2Model::Exp3Level),
            "exp4level" | "exp4" => Ok(G2Model::Exp4Level),
            "rate3" => Ok(G2Model::Rate3),
            "rate4" => Ok(G2Model::Rate4),
            other => Err(Error::InvalidArgument(format!("unknown g2 model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct G2FitOptions {
    /// Parameters held at the given values.
    pub fixed: BTreeMap<String, f64>,
    pub lm: LmOptions,
}

impl G2FitOptions {
    pub fn with_fixed(mut self, name: &str, value: f64) -> Self {
        self.fixed.insert(name.to_owned(), value);
        self
    }
}

/// Lag span, in decades, that a second bunching component needs before it is
/// considered resolvable.
pub const MIN_BUNCHING_DECADES: f64 = 2.0;

/// Data prepared for fitting: absolute lags in seconds, g² values, the g²
/// value of one pair count per bin, and the observed-count uncertainties
/// `scale * sqrt(max(counts, 1))`. Fits weight by the model's expected
/// counts; `sigma` only informs starting values.
#[derive(Debug, Clone)]
pub struct G2Data {
    pub lags: Vec<f64>,
    pub g2: Vec<f64>,
    pub scale: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl G2Data {
    pub fn from_curve(curve: &CorrelationCurve) -> Result<Self> {
        if curve.n_bins() < 10 {
            return Err(Error::InvalidArgument(format!("a g2 fit needs at least 10 bins, got {}", curve.n_bins())));
        }
        if curve.g2.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidArgument("curve has undefined g2 values (empty channel?)".into()));
        }
        let scale = curve.count_scale();
        Ok(Self {
            lags: curve.lag_seconds().iter().map(|t| t.abs()).collect(),
            g2: curve.g2.clone(),
            sigma: curve.counts.iter().zip(&scale).map(|(&c, s)| s * (c.max(1) as f64).sqrt()).collect(),
            scale,
        })
    }
}

/// Fits a g² model to a correlation curve with automatically derived
/// starting points.
///
/// Rate models carry one more rate than the curve can determine (five shape
/// quantities for six rates in the four-level case); unless the caller fixes
/// a rate, `k21` is held at half the antibunching rate estimate. Rate-model
/// outcomes carry the effective `tau21`, `tau3`, `tau4` (and `a3`, `a4`) as
/// derived quantities. Throughout, `tau3` is the slower bunching constant.
pub fn fit_g2(curve: &CorrelationCurve, model: G2Model, opts: &G2FitOptions) -> Result<FitOutcome> {
    let data = G2Data::from_curve(curve)?;
    fit_g2_data(&data, model, opts)
}

pub fn fit_g2_data(data: &G2Data, model: G2Model, opts: &G2FitOptions) -> Result<FitOutcome> {
    let names = model.param_names();
    if let Some(bad) = opts.fixed.keys().find(|k| !names.contains(&k.as_str())) {
        return Err(Error::InvalidArgument(format!("{} has no parameter {bad:?}", model.id())));
    }
    let guess = Guess::from_data(data);
    let mut lm = opts.lm.clone();
    lm.allow_singular = true;
    let mut outcome = match model {
        G2Model::Exp3Level | G2Model::Exp4Level => fit_exponential(data, model, &guess, &opts.fixed, &lm)?,
        G2Model::Rate3 | G2Model::Rate4 => fit_rate(data, model, &guess, &opts.fixed, &lm)?,
    };
    outcome.model_id = model.id().to_owned();
    if matches!(model, G2Model::Exp4Level | G2Model::Rate4) {
        let decades = guess.bunching_decades;
        if decades < MIN_BUNCHING_DECADES {
            outcome.warnings.push(format!(
                "bunching spans {decades:.2} lag decades (< {MIN_BUNCHING_DECADES}); a second metastable level may not be resolvable"
            ));
        }
    }
    Ok(outcome)
}

/// Starting values read off the curve shape.
#[derive(Debug, Clone)]
struct Guess {
    sigma: f64,
    tau21: f64,
    /// Total bunching amplitude `(g2_peak - 1) / σ²`.
    bunching: f64,
    /// Candidate bunching times from where the excess decays to fixed
    /// fractions of its peak, ascending.
    bunch_times: Vec<f64>,
    bunching_decades: f64,
}

impl Guess {
    fn from_data(data: &G2Data) -> Self {
        let mut order: Vec<usize> = (0..data.lags.len()).collect();
        order.sort_by(|&a, &b| data.lags[a].total_cmp(&data.lags[b]));
        let x: Vec<f64> = order.iter().map(|&i| data.lags[i]).collect();
        let y: Vec<f64> = order.iter().map(|&i| data.g2[i]).collect();
        let s: Vec<f64> = order.iter().map(|&i| data.sigma[i]).collect();
        let n = x.len();
        let sm: Vec<f64> = (0..n).map(|i| {
            let (lo, hi) = (i.saturating_sub(1), (i + 1).min(n - 1));
            y[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        }).collect();
        let i0 = (0..n).min_by(|&a, &b| sm[a].total_cmp(&sm[b])).unwrap_or(0);
        let g0 = sm[i0];
        let sigma = (1.0 - g0).clamp(0.0025, 0.9801).sqrt();
        let ip = (i0..n).max_by(|&a, &b| sm[a].total_cmp(&sm[b])).unwrap_or(i0);
        let peak = sm[ip].max(1.0);
        let half = g0 + 0.5 * (peak - g0);
        let x_pos = x.iter().copied().find(|&v| v > 0.0).unwrap_or(1e-12);
        let tau21 = (i0..n).find(|&i| sm[i] >= half).map(|i| x[i] / std::f64::consts::LN_2).unwrap_or(x_pos).max(x_pos);
        let bunching = ((peak - 1.0) / (sigma * sigma)).max(0.02);
        let excess = peak - 1.0;
        let mut bunch_times = Vec::new();
        for f in [0.8f64, 0.5, 0.2, 0.05] {
            if let Some(i) = (ip..n).find(|&i| sm[i] - 1.0 <= f * excess) {
                let t = (x[i] / (1.0 / f).ln()).max(tau21 * 2.0);
                if bunch_times.iter().all(|&b: &f64| (t / b).ln().abs() > 0.2) {
                    bunch_times.push(t);
                }
            }
        }
        if bunch_times.is_empty() {
            bunch_times.push((tau21 * 1e3).min(x[n - 1] / 3.0).max(tau21 * 2.0));
        }
        bunch_times.sort_by(f64::total_cmp);
        // Lag range over which the excess above 1 stands out from the noise.
        let significant: Vec<f64> =
            (ip..n).filter(|&i| sm[i] - 1.0 > 3.0 * s[i] / 3f64.sqrt()).map(|i| x[i]).collect();
        let bunching_decades = match (significant.first(), significant.last()) {
            (Some(&a), Some(&b)) if a > 0.0 => (b / a).log10(),
            _ => 0.0,
        };
        Self { sigma, tau21, bunching, bunch_times, bunching_decades }
    }
}

fn build_params(model: G2Model, start: &[f64], fixed: &BTreeMap<String, f64>) -> Vec<Param> {
    model
        .param_names()
        .iter()
        .zip(start)
        .map(|(&name, &v)| match fixed.get(name) {
            Some(&f) => Param::fixed(name, f),
            None => {
                let bound = if name == "sigma" { Bound::UnitInterval } else { Bound::Positive };
                Param::new(name, v, bound)
            }
        })
        .collect()
}

/// Runs every start and keeps the lowest χ²; equal costs (to 1e-12
/// relative) go to the lexicographically smallest parameter vector, ordered
/// by parameter name.
fn best_of(
    data: &G2Data,
    model: G2Model,
    starts: &[Vec<f64>],
    fixed: &BTreeMap<String, f64>,
    lm: &LmOptions,
    canonical: impl Fn(FitOutcome) -> FitOutcome,
) -> Result<FitOutcome> {
    let lags = &data.lags;
    let mut best: Option<FitOutcome> = None;
    let mut last_err = None;
    for start in starts {
        let params = build_params(model, start, fixed);
        let fit = least_squares_poisson(|p| model.evaluate(p, lags), lags, &data.g2, &data.scale, &params, lm);
        match fit {
            Ok(f) => {
                let f = canonical(f);
                best = Some(match best {
                    None => f,
                    Some(b) => {
                        if f.better_than(&b) {
                            f
                        } else {
                            b
                        }
                    }
                });
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::Model("no starting point".into())))
}

fn fit_exponential(
    data: &G2Data,
    model: G2Model,
    g: &Guess,
    fixed: &BTreeMap<String, f64>,
    lm: &LmOptions,
) -> Result<FitOutcome> {
    let mut fixed = fixed.clone();
    let a4_off = model == G2Model::Exp4Level && fixed.get("a4") == Some(&0.0);
    if a4_off {
        // Without its amplitude the second constant has no effect on the
        // curve; hold it so the fit reduces to the three-level one.
        fixed.entry("tau4".into()).or_insert(1.0);
    }
    let mut starts = Vec::new();
    if model == G2Model::Exp3Level || a4_off {
        for &t in &g.bunch_times {
            let s = vec![g.tau21, t, g.bunching, g.sigma];
            starts.push(if model == G2Model::Exp3Level { s } else { vec![s[0], s[1], 1.0, s[2], 0.0, s[3]] });
        }
    } else {
        let mut times = g.bunch_times.clone();
        if times.len() == 1 {
            times = vec![times[0] / 4.0, times[0] * 4.0];
        }
        for i in 0..times.len() {
            for j in 0..i {
                starts.push(vec![g.tau21, times[i], times[j], 0.5 * g.bunching, 0.5 * g.bunching, g.sigma]);
            }
        }
    }
    let swap = model == G2Model::Exp4Level && !fixed.contains_key("tau3") && !fixed.contains_key("tau4");
    best_of(data, model, &starts, &fixed, lm, |f| if swap { canonical_exp4(f) } else { f })
}

/// Orders the two bunching components so that `tau3 > tau4`.
fn canonical_exp4(mut f: FitOutcome) -> FitOutcome {
    let idx = |f: &FitOutcome, n: &str| f.index(n);
    let (Some(t3), Some(t4), Some(a3), Some(a4)) = (idx(&f, "tau3"), idx(&f, "tau4"), idx(&f, "a3"), idx(&f, "a4")) else {
        return f;
    };
    if f.params[t3] >= f.params[t4] {
        return f;
    }
    let mut perm: Vec<usize> = (0..f.params.len()).collect();
    perm.swap(t3, t4);
    perm.swap(a3, a4);
    f.params = perm.iter().map(|&i| f.params[i]).collect();
    f.errors = perm.iter().map(|&i| f.errors[i]).collect();
    f.covariance = perm.iter().map(|&i| perm.iter().map(|&j| f.covariance[i][j]).collect()).collect();
    f
}

fn fit_rate(
    data: &G2Data,
    model: G2Model,
    g: &Guess,
    fixed: &BTreeMap<String, f64>,
    lm: &LmOptions,
) -> Result<FitOutcome> {
    let rates = ["k12", "k21", "k23", "k24", "k31", "k41"];
    let mut fixed = fixed.clone();
    if !fixed.keys().any(|k| rates.contains(&k.as_str())) {
        fixed.insert("k21".into(), 0.5 / g.tau21);
    }
    // Start from the matching exponential fit, mapped onto rates.
    let exp_model = if model == G2Model::Rate3 { G2Model::Exp3Level } else { G2Model::Exp4Level };
    let mut exp_fixed = BTreeMap::new();
    if let Some(&s) = fixed.get("sigma") {
        exp_fixed.insert("sigma".to_string(), s);
    }
    let mut starts = Vec::new();
    let mut seeds = Vec::new();
    if let Ok(e) = fit_exponential(data, exp_model, g, &exp_fixed, lm) {
        seeds.push(e);
    }
    if model == G2Model::Rate4 {
        if let Ok(e) = fit_exponential(data, G2Model::Exp3Level, g, &exp_fixed, lm) {
            seeds.push(e);
        }
    }
    for e in &seeds {
        let v = |n: &str| e.value(n).unwrap_or(f64::NAN);
        let k21 = fixed.get("k21").copied().unwrap_or(0.5 / v("tau21"));
        let components: Vec<(f64, f64)> = if e.index("tau4").is_some() {
            vec![(v("tau3"), v("a3")), (v("tau4"), v("a4"))]
        } else if model == G2Model::Rate4 {
            // Split the single bunching component into two.
            vec![(v("tau3") * 3.0, 0.5 * v("a3")), (v("tau3") / 3.0, 0.5 * v("a3"))]
        } else {
            vec![(v("tau3"), v("a3"))]
        };
        if let Some(r) = rates_from_exponentials(v("tau21"), k21, &components) {
            let mut s = r;
            s.push(v("sigma"));
            starts.push(s);
        }
    }
    if starts.is_empty() {
        let comps: Vec<(f64, f64)> = if model == G2Model::Rate4 {
            vec![(g.bunch_times[g.bunch_times.len() - 1] * 2.0, 0.5 * g.bunching), (g.bunch_times[0] / 2.0, 0.5 * g.bunching)]
        } else {
            vec![(g.bunch_times[0], g.bunching)]
        };
        let k21 = fixed.get("k21").copied().unwrap_or(0.5 / g.tau21);
        if let Some(mut s) = rates_from_exponentials(g.tau21, k21, &comps) {
            s.push(g.sigma);
            starts.push(s);
        }
    }
    let mut f = best_of(data, model, &starts, &fixed, lm, |f| f)?;
    attach_timescales(&mut f, model)?;
    Ok(f)
}

/// Rates `[k12, k21, k2j..., kj1...]` whose effective constants
/// approximate an antibunching time `tau21` and bunching components
/// `(tau_j, a_j)`, for a given `k21`. Uses the quasi-equilibrium picture in
/// which level 2 holds a fraction `K = k12/(k12+k21)` of the fast pair.
fn rates_from_exponentials(tau21: f64, k21: f64, comps: &[(f64, f64)]) -> Option<Vec<f64>> {
    let fast = 1.0 / tau21;
    let mut k2j = vec![0.0; comps.len()];
    let mut kj1 = vec![0.0; comps.len()];
    let mut k12 = (fast - k21).max(0.05 * fast);
    for _ in 0..50 {
        let frac = k12 / (k12 + k21);
        for (j, &(t, a)) in comps.iter().enumerate() {
            let a = a.max(1e-3);
            kj1[j] = 1.0 / (t * (1.0 + a));
            k2j[j] = a * kj1[j] / frac;
        }
        k12 = (fast - k21 - k2j.iter().sum::<f64>()).max(0.05 * fast);
    }
    let mut out = vec![k12, k21];
    out.extend(&k2j);
    out.extend(&kj1);
    if out.iter().all(|v| v.is_finite() && *v > 0.0) {
        Some(out)
    } else {
        None
    }
}

/// Adds effective time constants and bunching weights to a rate-model
/// outcome, with errors propagated through the covariance by central
/// differences.
fn attach_timescales(f: &mut FitOutcome, model: G2Model) -> Result<()> {
    let names = model.param_names();
    let full = |free: &[f64]| -> Vec<f64> {
        names
            .iter()
            .map(|n| match f.index(n) {
                Some(i) => free[i],
                None => f.value(n).unwrap_or(f64::NAN),
            })
            .collect()
    };
    let derive = |free: &[f64]| -> Result<Vec<f64>> {
        let ts = effective_timescales(&model.level_system(&full(free))?)?;
        let c = &ts.components;
        // Ascending times: antibunching, then bunching (tau4 < tau3).
        Ok(match (model, c.len()) {
            (G2Model::Rate4, 3) => vec![c[0].tau, c[2].tau, c[1].tau, c[2].weight, c[1].weight],
            (G2Model::Rate3, 2) => vec![c[0].tau, c[1].tau, c[1].weight],
            _ => return Err(Error::Degenerate("unexpected number of decay modes".into())),
        })
    };
    let labels: &[&str] =
        if model == G2Model::Rate4 { &["tau21", "tau3", "tau4", "a3", "a4"] } else { &["tau21", "tau3", "a3"] };
    let base = derive(&f.params)?;
    let k = f.params.len();
    let mut jac = vec![vec![0.0; k]; base.len()];
    for c in 0..k {
        let h = 1e-6 * f.params[c].abs();
        let mut up = f.params.clone();
        up[c] += h;
        let mut dn = f.params.clone();
        dn[c] -= h;
        if let (Ok(a), Ok(b)) = (derive(&up), derive(&dn)) {
            for r in 0..base.len() {
                jac[r][c] = (a[r] - b[r]) / (2.0 * h);
            }
        }
    }
    for (r, label) in labels.iter().enumerate() {
        let var: f64 = (0..k).map(|i| (0..k).map(|j| jac[r][i] * f.covariance[i][j] * jac[r][j]).sum::<f64>()).sum();
        f.push_derived(label, base[r], var.max(0.0).sqrt());
    }
    if model == G2Model::Rate4 && base[1] < 2.0 * base[2] {
        f.warnings.push("the two metastable time constants lie within a factor of 2".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photophysics::solve_four_level;
    use crate::synth::{standard_grid, synthetic_curve};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn lpe_exp(t: f64) -> f64 {
        g2_multi_exponential(4.6e-9, 54.8e-6, 7.04e-6, 0.8, 1.2, 0.222, &[t]).unwrap()[0]
    }

    #[test]
    fn noiseless_exponential_recovery() {
        let curve = synthetic_curve(&standard_grid(), 1, lpe_exp, 1e8, None).unwrap();
        let f = fit_g2(&curve, G2Model::Exp4Level, &G2FitOptions::default()).unwrap();
        for (n, v) in [("tau21", 4.6e-9), ("tau3", 54.8e-6), ("tau4", 7.04e-6), ("a3", 0.8), ("a4", 1.2), ("sigma", 0.222)] {
            assert!(rel(f.value(n).unwrap(), v) < 1e-4, "{n}: {}", f.value(n).unwrap());
        }
        assert!(f.chi2_red < 1e-6);
    }

    #[test]
    fn noisy_exponential_recovery() {
        let curve = synthetic_curve(&standard_grid(), 1, lpe_exp, 1e6, Some(17)).unwrap();
        let f = fit_g2(&curve, G2Model::Exp4Level, &G2FitOptions::default()).unwrap();
        for (n, v) in [("tau21", 4.6e-9), ("tau3", 54.8e-6), ("tau4", 7.04e-6), ("sigma", 0.222)] {
            assert!(rel(f.value(n).unwrap(), v) < 0.10, "{n}: {}", f.value(n).unwrap());
        }
        assert!(f.converged);
        assert!(f.chi2_red < 1.5);
    }

    #[test]
    fn fixed_zero_a4_reduces_to_three_level() {
        let g = |t: f64| g2_multi_exponential(2.2e-9, 1.233e-3, 1.0, 0.6, 0.0, 0.734, &[t]).unwrap()[0];
        let curve = synthetic_curve(&standard_grid(), 1, g, 1e5, Some(5)).unwrap();
        let three = fit_g2(&curve, G2Model::Exp3Level, &G2FitOptions::default()).unwrap();
        let four = fit_g2(&curve, G2Model::Exp4Level, &G2FitOptions::default().with_fixed("a4", 0.0)).unwrap();
        assert_eq!(three.names, four.names);
        assert_eq!(three.params, four.params);
        assert_eq!(three.chi2, four.chi2);
    }

    #[test]
    fn rate_model_recovers_effective_timescales() {
        let rates = solve_four_level([4.8e-9, 10.1e-6, 238.8e-6], 1e6, 3e5, 1e7).unwrap();
        let sys = LevelSystem::four_level(rates).unwrap();
        let g = |t: f64| g2_rate_equation(&sys, 0.8, &[t]).unwrap()[0];
        let curve = synthetic_curve(&standard_grid(), 1, g, 1e4, Some(23)).unwrap();
        let f = fit_g2(&curve, G2Model::Rate4, &G2FitOptions::default()).unwrap();
        for (n, v) in [("tau21", 4.8e-9), ("tau3", 238.8e-6), ("tau4", 10.1e-6)] {
            assert!(rel(f.value(n).unwrap(), v) < 0.15, "{n}: {}", f.value(n).unwrap());
        }
        assert!((f.value("sigma").unwrap() - 0.8).abs() < 0.05);
        assert!(f.fixed.iter().any(|(n, _)| n == "k21"));
    }

    #[test]
    fn rejects_short_or_undefined_curves() {
        let grid = crate::correlator::BinGrid::linear(0, 5, 1).unwrap();
        let c = CorrelationCurve::from_counts(grid, vec![1; 5], 1, 1, 10, 1);
        assert!(fit_g2(&c, G2Model::Exp3Level, &G2FitOptions::default()).is_err());
        let curve = synthetic_curve(&standard_grid(), 1, lpe_exp, 1e6, None).unwrap();
        let bad = G2FitOptions::default().with_fixed("k99", 1.0);
        assert!(fit_g2(&curve, G2Model::Rate4, &bad).is_err());
    }
}
