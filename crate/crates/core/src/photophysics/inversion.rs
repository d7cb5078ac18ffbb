use nalgebra::{Matrix3, Vector3};

use super::level_system::{FourLevelRates, LevelSystem};
use super::propagate::effective_timescales;
use crate::error::{Error, Result};

/// Finds `k21`, `k31` and `k41` such that the four-level model with the given
/// pump and intersystem-crossing rates has effective time constants
/// `targets` (seconds, ascending: antibunching, faster and slower bunching).
///
/// Damped Newton iteration on the log-rates; the metastable level reached by
/// the larger crossing rate is assigned the faster bunching constant.
pub fn solve_four_level(targets: [f64; 3], k12: f64, k23: f64, k24: f64) -> Result<FourLevelRates> {
    if !(targets[0] > 0.0 && targets[0] < targets[1] && targets[1] < targets[2]) {
        return Err(Error::InvalidArgument("targets must be positive and strictly ascending".into()));
    }
    let (fast_isc, slow_isc) = if k24 >= k23 { (k24, k23) } else { (k23, k24) };
    let k21 = 1.0 / targets[0] - k12 - k23 - k24;
    if !(k21 > 0.0) {
        return Err(Error::InvalidArgument("pump and crossing rates exceed the antibunching rate".into()));
    }
    // Quasi-equilibrium between levels 1 and 2 leaks into each metastable
    // level at roughly `K k2j` with `K = k12 / (k12 + k21)`.
    let frac = k12 / (k12 + k21);
    let guess = |t: f64, isc: f64| (1.0 / t - frac * isc).max(0.05 / t);
    let (k_fast, k_slow) = (guess(targets[1], fast_isc), guess(targets[2], slow_isc));
    let (k31, k41) = if k24 >= k23 { (k_slow, k_fast) } else { (k_fast, k_slow) };

    let build = |u: &Vector3<f64>| FourLevelRates { k12, k21: u[0].exp(), k23, k24, k31: u[1].exp(), k41: u[2].exp() };
    let residual = |u: &Vector3<f64>| -> Result<Vector3<f64>> {
        let ts = effective_timescales(&LevelSystem::four_level(build(u))?)?;
        let t = ts.taus();
        if t.len() != 3 {
            return Err(Error::Degenerate("four-level model lost a decay mode".into()));
        }
        Ok(Vector3::new((t[0] / targets[0]).ln(), (t[1] / targets[1]).ln(), (t[2] / targets[2]).ln()))
    };

    let mut u = Vector3::new(k21.ln(), k31.ln(), k41.ln());
    let mut r = residual(&u)?;
    for _ in 0..200 {
        if r.amax() < 1e-13 {
            return Ok(build(&u));
        }
        let h = 1e-6;
        let mut jac = Matrix3::zeros();
        for c in 0..3 {
            let mut up = u;
            up[c] += h;
            let mut dn = u;
            dn[c] -= h;
            jac.set_column(c, &((residual(&up)? - residual(&dn)?) / (2.0 * h)));
        }
        let step = jac.lu().solve(&(-r)).ok_or_else(|| Error::Degenerate("singular inversion Jacobian".into()))?;
        let mut scale = 1.0;
        loop {
            let trial = u + step * scale;
            if let Ok(rt) = residual(&trial) {
                if rt.norm() < r.norm() {
                    u = trial;
                    r = rt;
                    break;
                }
            }
            scale *= 0.5;
            if scale < 1e-6 {
                if r.amax() < 1e-10 {
                    return Ok(build(&u));
                }
                return Err(Error::Degenerate("four-level inversion stalled".into()));
            }
        }
    }
    Err(Error::Degenerate("four-level inversion did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_table_scale_constants() {
        let targets = [4.8e-9, 10.1e-6, 238.8e-6];
        let rates = solve_four_level(targets, 1e6, 3e5, 1e7).unwrap();
        let ts = effective_timescales(&LevelSystem::four_level(rates).unwrap()).unwrap();
        for (t, want) in ts.taus().iter().zip(targets) {
            assert!(((t - want) / want).abs() <= 1e-6, "{t} vs {want}");
        }
        assert!(ts.weights()[1] > 0.0 && ts.weights()[2] > 0.0);
    }

    #[test]
    fn rejects_unordered_targets() {
        assert!(solve_four_level([1e-6, 1e-9, 1e-3], 1e6, 1e5, 1e6).is_err());
    }
}
