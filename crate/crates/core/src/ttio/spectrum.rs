use std::io::{Read, Write};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AxisUnit {
    Nanometers,
    ElectronVolts,
}

impl AxisUnit {
    pub fn label(self) -> &'static str {
        match self {
            AxisUnit::Nanometers => "nm",
            AxisUnit::ElectronVolts => "eV",
        }
    }
}

impl FromStr for AxisUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nm" | "nanometers" => Ok(AxisUnit::Nanometers),
            "ev" | "electronvolts" => Ok(AxisUnit::ElectronVolts),
            other => Err(Error::InvalidArgument(format!("unknown axis unit {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumPoint {
    pub x: f64,
    pub counts: f64,
    pub sigma: Option<f64>,
}

/// A photoluminescence spectrum on a strictly ascending axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumData {
    pub unit: AxisUnit,
    points: Vec<SpectrumPoint>,
}

impl SpectrumData {
    /// Validates and stores the points. A strictly descending axis is
    /// reversed; any other ordering is rejected.
    pub fn new(unit: AxisUnit, mut points: Vec<SpectrumPoint>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            validate_point(i + 1, p)?;
        }
        if points.len() >= 2 && points[0].x > points[1].x {
            points.reverse();
        }
        if let Some(i) = points.windows(2).position(|w| w[1].x <= w[0].x) {
            return Err(Error::Row { row: i + 2, message: "axis is not strictly monotonic".into() });
        }
        Ok(Self { unit, points })
    }

    pub fn points(&self) -> &[SpectrumPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn counts(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.counts).collect()
    }

    /// Per-point uncertainties; Poisson `sqrt(max(counts, 1))` where absent.
    pub fn sigmas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.sigma.unwrap_or_else(|| p.counts.max(1.0).sqrt())).collect()
    }
}

fn validate_point(row: usize, p: &SpectrumPoint) -> Result<()> {
    let bad = |message: &str| Err(Error::Row { row, message: message.into() });
    if !p.x.is_finite() {
        return bad("axis value is not finite");
    }
    if !p.counts.is_finite() {
        return bad("counts are not finite");
    }
    if p.counts < 0.0 {
        return bad("negative counts");
    }
    match p.sigma {
        Some(s) if !(s.is_finite() && s > 0.0) => bad("sigma must be positive"),
        _ => Ok(()),
    }
}

/// Reads `x,counts[,sigma]` rows (comma or tab separated, `#` comments).
/// Row numbers in errors are 1-based file lines.
pub fn read_spectrum<R: Read>(mut source: R, unit: AxisUnit) -> Result<SpectrumData> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let row = lineno + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split([',', '\t']).map(str::trim).collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(Error::Row { row, message: format!("expected 2 or 3 columns, found {}", fields.len()) });
        }
        let num = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Row { row, message: format!("not a number: {s:?}") })
        };
        let point = SpectrumPoint {
            x: num(fields[0])?,
            counts: num(fields[1])?,
            sigma: fields.get(2).map(|s| num(s)).transpose()?,
        };
        validate_point(row, &point)?;
        points.push(point);
    }
    SpectrumData::new(unit, points)
}

pub fn write_spectrum<W: Write>(spec: &SpectrumData, mut dest: W) -> Result<()> {
    writeln!(dest, "# x_{},counts,sigma", spec.unit.label())?;
    for p in spec.points() {
        match p.sigma {
            Some(s) => writeln!(dest, "{},{},{}", p.x, p.counts, s)?,
            None => writeln!(dest, "{},{}", p.x, p.counts)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file() {
        let s = read_spectrum("628,1000\n629,900".as_bytes(), AxisUnit::Nanometers).unwrap();
        assert_eq!(s.len(), 2);
        assert!(s.points()[0].x < s.points()[1].x);
        assert_eq!(s.counts(), vec![1000.0, 900.0]);
    }

    #[test]
    fn descending_axis_is_reversed() {
        let desc = read_spectrum("# header\n630\t5\n629\t7.25\n628\t9\n".as_bytes(), AxisUnit::Nanometers).unwrap();
        let asc = read_spectrum("628,9\n629,7.25\n630,5\n".as_bytes(), AxisUnit::Nanometers).unwrap();
        assert_eq!(desc, asc);
    }

    #[test]
    fn nan_count_names_the_row() {
        let err = read_spectrum("628,1\n629,NaN\n".as_bytes(), AxisUnit::Nanometers).unwrap_err();
        assert!(matches!(err, Error::Row { row: 2, .. }), "{err}");
    }

    #[test]
    fn rejects_negative_counts_and_zigzag_axis() {
        assert!(read_spectrum("1,-1\n".as_bytes(), AxisUnit::Nanometers).is_err());
        assert!(read_spectrum("1,1\n3,1\n2,1\n".as_bytes(), AxisUnit::Nanometers).is_err());
        assert!(read_spectrum("1,1,0\n".as_bytes(), AxisUnit::Nanometers).is_err());
    }

    #[test]
    fn poisson_sigma_when_absent() {
        let s = read_spectrum("1,0\n2,16\n3,4,0.5\n".as_bytes(), AxisUnit::ElectronVolts).unwrap();
        assert_eq!(s.sigmas(), vec![1.0, 4.0, 0.5]);
    }

    #[test]
    fn write_then_read_is_exact() {
        let pts = vec![
            SpectrumPoint { x: 1.1, counts: 0.1 + 0.2, sigma: None },
            SpectrumPoint { x: 1.2000000000000002, counts: 1e-300, sigma: Some(std::f64::consts::PI) },
        ];
        let s = SpectrumData::new(AxisUnit::ElectronVolts, pts).unwrap();
        let mut buf = Vec::new();
        write_spectrum(&s, &mut buf).unwrap();
        assert_eq!(read_spectrum(&buf[..], AxisUnit::ElectronVolts).unwrap(), s);
    }
}
