use super::propagate::check_sigma;
use crate::error::{Error, Result};

/// Antibunching plus two bunching exponentials with background fraction σ:
/// `1 - σ² + σ² (1 - (1+a3+a4) e^{-τ/τ21} + a3 e^{-τ/τ3} + a4 e^{-τ/τ4})`.
/// Even in τ. With `a4 = 0` the `tau4` term drops out and `tau4` is not
/// validated.
pub fn g2_multi_exponential(
    tau21: f64,
    tau3: f64,
    tau4: f64,
    a3: f64,
    a4: f64,
    sigma: f64,
    taus: &[f64],
) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("{name} = {v} must be positive")))
        }
    };
    positive("tau21", tau21)?;
    positive("tau3", tau3)?;
    if a4 != 0.0 {
        positive("tau4", tau4)?;
    }
    if !(a3.is_finite() && a4.is_finite()) {
        return Err(Error::InvalidArgument("bunching amplitudes must be finite".into()));
    }
    let s2 = sigma * sigma;
    Ok(taus
        .iter()
        .map(|t| {
            let t = t.abs();
            let e21 = (-t / tau21).exp();
            // Grouped so that every term vanishes identically at τ = 0.
            let mut shape = -(-t / tau21).exp_m1() + a3 * ((-t / tau3).exp() - e21);
            if a4 != 0.0 {
                shape += a4 * ((-t / tau4).exp() - e21);
            }
            1.0 - s2 + s2 * shape
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lag_is_one_minus_sigma_squared() {
        for sigma in [0.222, 0.734, 1.0] {
            let g = g2_multi_exponential(4.6e-9, 54.8e-6, 7.04e-6, 1.7, 0.9, sigma, &[0.0]).unwrap();
            assert_eq!(g[0], 1.0 - sigma * sigma);
        }
    }

    #[test]
    fn pure_antibunching_reduction() {
        let taus = [1e-10, 1e-9, 5e-9, 1e-7];
        let g = g2_multi_exponential(4.8e-9, 1.0, 1.0, 0.0, 0.0, 1.0, &taus).unwrap();
        for (t, v) in taus.iter().zip(&g) {
            assert!((v - (1.0 - (-t / 4.8e-9).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn long_lags_approach_one() {
        let g = g2_multi_exponential(4.6e-9, 54.8e-6, 7.04e-6, 1.7, 0.9, 0.5, &[1.0]).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_constants() {
        assert!(g2_multi_exponential(0.0, 1e-6, 1e-6, 1.0, 1.0, 1.0, &[0.0]).is_err());
        assert!(g2_multi_exponential(1e-9, 1e-6, -1e-6, 1.0, 1.0, 1.0, &[0.0]).is_err());
        assert!(g2_multi_exponential(1e-9, 1e-6, -1e-6, 1.0, 0.0, 1.0, &[0.0]).is_ok());
    }
}
