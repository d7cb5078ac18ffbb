use serde::Serialize;

use super::outcome::FitOutcome;
use crate::error::{Error, Result};

/// ΔAICc above which an added metastable level counts as resolved.
pub const RESOLVED_DELTA: f64 = 10.0;
/// ΔAICc above which an added level has weak support.
pub const WEAK_DELTA: f64 = 2.0;

/// Corrected Akaike criterion `n ln(χ²/n) + 2k + 2k(k+1)/(n-k-1)`.
pub fn aicc(chi2: f64, n: usize, k: usize) -> Result<f64> {
    if n <= k + 1 {
        return Err(Error::InvalidArgument(format!("AICc needs n > k + 1 (n = {n}, k = {k})")));
    }
    let (nf, kf) = (n as f64, k as f64);
    // A perfect fit has no finite likelihood; clamp so ties stay ties.
    let chi2 = chi2.max(f64::MIN_POSITIVE);
    Ok(nf * (chi2 / nf).ln() + 2.0 * kf + 2.0 * kf * (kf + 1.0) / (nf - kf - 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedModel {
    pub model_id: String,
    pub n_params: usize,
    pub aicc: f64,
    /// AICc above the best model's.
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    Resolved,
    Weak,
    None,
}

impl Support {
    pub fn from_delta(delta: f64) -> Self {
        if delta > RESOLVED_DELTA {
            Support::Resolved
        } else if delta > WEAK_DELTA {
            Support::Weak
        } else {
            Support::None
        }
    }
}

/// Evidence for one more metastable level within a model family:
/// `delta = AICc(simpler) - AICc(richer)`, positive when the richer model
/// is preferred.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelVerdict {
    pub simpler: String,
    pub richer: String,
    pub metastable_levels: usize,
    pub delta: f64,
    pub support: Support,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelRanking {
    /// Ascending AICc; ties keep input order.
    pub ranked: Vec<RankedModel>,
    pub verdicts: Vec<LevelVerdict>,
}

impl ModelRanking {
    pub fn best(&self) -> &RankedModel {
        &self.ranked[0]
    }

    pub fn verdict(&self, richer: &str) -> Option<&LevelVerdict> {
        self.verdicts.iter().find(|v| v.richer == richer)
    }
}

/// Family and metastable-level count of the built-in g² models.
pub fn metastable_levels(model_id: &str) -> Option<(&'static str, usize)> {
    match model_id {
        "exp3level" => Some(("exp", 1)),
        "exp4level" => Some(("exp", 2)),
        "rate3" => Some(("rate", 1)),
        "rate4" => Some(("rate", 2)),
        _ => None,
    }
}

/// Ranks fits of the same data by AICc and, for each model family present
/// with consecutive metastable-level counts, judges whether the extra level
/// is supported.
pub fn compare_models(outcomes: &[FitOutcome]) -> Result<ModelRanking> {
    let first = outcomes.first().ok_or_else(|| Error::InvalidArgument("no outcomes to compare".into()))?;
    if outcomes.iter().any(|o| o.data_digest != first.data_digest || o.n_points != first.n_points) {
        return Err(Error::DigestMismatch);
    }
    let scores = outcomes.iter().map(|o| aicc(o.chi2, o.n_points, o.n_params)).collect::<Result<Vec<_>>>()?;
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let mut ranked: Vec<RankedModel> = outcomes
        .iter()
        .zip(&scores)
        .map(|(o, &s)| RankedModel { model_id: o.model_id.clone(), n_params: o.n_params, aicc: s, delta: s - min })
        .collect();
    ranked.sort_by(|a, b| a.aicc.total_cmp(&b.aicc));

    let mut verdicts = Vec::new();
    for (i, a) in outcomes.iter().enumerate() {
        let Some((fam_a, na)) = metastable_levels(&a.model_id) else { continue };
        for (j, b) in outcomes.iter().enumerate() {
            match metastable_levels(&b.model_id) {
                Some((fam_b, nb)) if fam_b == fam_a && nb == na + 1 => {
                    let delta = scores[i] - scores[j];
                    verdicts.push(LevelVerdict {
                        simpler: a.model_id.clone(),
                        richer: b.model_id.clone(),
                        metastable_levels: nb,
                        delta,
                        support: Support::from_delta(delta),
                    });
                }
                _ => {}
            }
        }
    }
    Ok(ModelRanking { ranked, verdicts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(id: &str, chi2: f64, k: usize, digest: &str) -> FitOutcome {
        let mut o = FitOutcome::empty(id);
        o.chi2 = chi2;
        o.n_points = 200;
        o.n_params = k;
        o.data_digest = digest.into();
        o
    }

    #[test]
    fn formula() {
        let v = aicc(150.0, 100, 3).unwrap();
        let want = 100.0 * 1.5f64.ln() + 6.0 + 24.0 / 96.0;
        assert!((v - want).abs() < 1e-12);
        assert!(aicc(1.0, 4, 3).is_err());
    }

    #[test]
    fn identical_outcomes_tie() {
        let a = outcome("rate3", 210.0, 4, "d");
        let r = compare_models(&[a.clone(), a]).unwrap();
        assert_eq!(r.ranked[0].delta, 0.0);
        assert_eq!(r.ranked[1].delta, 0.0);
        let zero = outcome("exp3level", 0.0, 4, "d");
        let r = compare_models(&[zero.clone(), zero]).unwrap();
        assert_eq!(r.ranked[1].delta, 0.0);
    }

    #[test]
    fn verdict_thresholds() {
        let simple = outcome("rate3", 400.0, 4, "d");
        let rich = outcome("rate4", 300.0, 6, "d");
        let r = compare_models(&[simple.clone(), rich]).unwrap();
        assert_eq!(r.best().model_id, "rate4");
        let v = r.verdict("rate4").unwrap();
        assert_eq!(v.support, Support::Resolved);
        assert!(v.delta > 10.0);
        let barely = outcome("rate4", 399.0, 6, "d");
        let v = compare_models(&[simple, barely]).unwrap().verdicts[0].clone();
        assert_eq!(v.support, Support::None);
        assert!(v.delta < 0.0);
        assert_eq!(Support::from_delta(5.0), Support::Weak);
    }

    #[test]
    fn mismatched_data_is_rejected() {
        let a = outcome("rate3", 1.0, 4, "x");
        let b = outcome("rate4", 1.0, 6, "y");
        assert!(matches!(compare_models(&[a, b]), Err(Error::DigestMismatch)));
        assert!(compare_models(&[]).is_err());
    }
}
