use super::lineshape::SpectralFitModel;
use crate::error::{Error, Result};

/// Experimental Debye–Waller factor from the sideband scale factor:
/// `dw_sim / (dw_sim + f_sc (1 - dw_sim))`, the ZPL share of the total area
/// once the simulated sideband is scaled by `f_sc`.
pub fn debye_waller(f_sc: f64, dw_sim: f64) -> Result<f64> {
    if !(f_sc >= 0.0 && f_sc.is_finite()) {
        return Err(Error::InvalidArgument(format!("f_sc {f_sc} must be finite and >= 0")));
    }
    if !(dw_sim > 0.0 && dw_sim <= 1.0) {
        return Err(Error::InvalidArgument(format!("dw_sim {dw_sim} outside (0, 1]")));
    }
    Ok(dw_sim / (dw_sim + f_sc * (1.0 - dw_sim)))
}

/// ZPL fraction of the model's integrated intensity. Equal line shapes make
/// peak ratios area ratios, so this is `1 / (1 + f_sc Σ r_i)`.
pub fn dw_from_curve(model: &SpectralFitModel) -> f64 {
    1.0 / (1.0 + model.f_sc * model.linelist.sideband_weight())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ttio::{DefectLineList, DwPolicy, Mode};

    #[test]
    fn table_anchor_points() {
        assert!((debye_waller(0.42, 0.47).unwrap() - 0.6786).abs() < 1e-4);
        assert!((debye_waller(0.37, 0.47).unwrap() - 0.7056).abs() < 1e-4);
        for d in [0.05, 0.47, 1.0] {
            assert_eq!(debye_waller(1.0, d).unwrap(), d);
        }
        assert!(debye_waller(-0.1, 0.5).is_err());
        assert!(debye_waller(0.1, 0.0).is_err());
    }

    #[test]
    fn curve_fraction_matches_relation() {
        let list = DefectLineList::new(
            "x",
            vec![Mode::new(0.0, 1.0), Mode::new(0.1, 0.75), Mode::new(0.2, 0.25)],
            0.5,
            DwPolicy::Strict,
        )
        .unwrap();
        for f_sc in [0.0, 0.3, 1.0, 2.5] {
            let m = SpectralFitModel::lorentzian(list.clone(), 1.0, 0.01, 2.0, f_sc).unwrap();
            assert!((dw_from_curve(&m) - debye_waller(f_sc, 0.5).unwrap()).abs() <= 1e-12);
        }
    }
}
