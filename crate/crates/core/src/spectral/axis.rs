use crate::error::{Error, Result};
use crate::ttio::{AxisUnit, SpectrumData, SpectrumPoint};

/// Photon energy times wavelength, eV·nm.
pub const HC_EV_NM: f64 = 1239.841984;

/// `E = hc / λ`, its own inverse.
pub fn convert_value(x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::InvalidArgument(format!("cannot convert axis value {x}; it must be positive")));
    }
    Ok(HC_EV_NM / x)
}

/// Re-expresses a spectrum on the other axis. Counts are left untouched.
pub fn convert_axis(spec: &SpectrumData, target: AxisUnit) -> Result<SpectrumData> {
    convert_axis_with(spec, target, false)
}

/// With `jacobian`, counts and sigmas are multiplied by `|dx_old/dx_new| =
/// x_old² / hc`, turning per-bin densities on one axis into densities on
/// the other.
pub fn convert_axis_with(spec: &SpectrumData, target: AxisUnit, jacobian: bool) -> Result<SpectrumData> {
    if spec.unit == target {
        return Ok(spec.clone());
    }
    let points = spec
        .points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let x = convert_value(p.x).map_err(|_| Error::Row { row: i + 1, message: format!("axis value {} cannot be converted", p.x) })?;
            let j = if jacobian { p.x * p.x / HC_EV_NM } else { 1.0 };
            Ok(SpectrumPoint { x, counts: p.counts * j, sigma: p.sigma.map(|s| s * j) })
        })
        .collect::<Result<Vec<_>>>()?;
    SpectrumData::new(target, points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ulps(a: f64, b: f64) -> u64 {
        (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
    }

    #[test]
    fn anchor_values() {
        assert!((convert_value(628.0).unwrap() - 1.97427).abs() < 5e-6);
        assert!((convert_value(1.9751).unwrap() - 627.74).abs() < 5e-3);
        for x in [628.0, 627.74, 1.9751, 1.97427] {
            assert!(ulps(convert_value(convert_value(x).unwrap()).unwrap(), x) <= 1);
        }
    }

    #[test]
    fn zero_and_negative_axes_are_rejected() {
        let s = SpectrumData::new(
            AxisUnit::Nanometers,
            vec![SpectrumPoint { x: 0.0, counts: 1.0, sigma: None }, SpectrumPoint { x: 1.0, counts: 1.0, sigma: None }],
        )
        .unwrap();
        assert!(convert_axis(&s, AxisUnit::ElectronVolts).is_err());
    }

    #[test]
    fn spectrum_reascends_and_keeps_counts() {
        let pts = [(600.0, 10.0), (628.0, 100.0), (700.0, 5.0)]
            .iter()
            .map(|&(x, c)| SpectrumPoint { x, counts: c, sigma: None })
            .collect();
        let s = SpectrumData::new(AxisUnit::Nanometers, pts).unwrap();
        let e = convert_axis(&s, AxisUnit::ElectronVolts).unwrap();
        assert_eq!(e.counts(), vec![5.0, 100.0, 10.0]);
        assert!(e.xs().windows(2).all(|w| w[0] < w[1]));
        let back = convert_axis(&e, AxisUnit::Nanometers).unwrap();
        for (a, b) in back.xs().iter().zip(s.xs()) {
            assert!(ulps(*a, b) <= 1);
        }
        let j = convert_axis_with(&s, AxisUnit::ElectronVolts, true).unwrap();
        assert!((j.counts()[1] - 100.0 * 628.0 * 628.0 / HC_EV_NM).abs() < 1e-9);
    }
}
