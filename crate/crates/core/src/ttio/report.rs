//! JSON fit reports.
//!
//! Floats are written in shortest round-trip form, so reading a report back
//! reproduces every number bit for bit. Non-finite values are written as the
//! strings `"NaN"`, `"inf"` and `"-inf"`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::fitting::{Derived, FitOutcome};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Num(f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            F(f64),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::F(v) => Ok(Num(v)),
            Repr::S(s) => match s.as_str() {
                "NaN" => Ok(Num(f64::NAN)),
                "inf" => Ok(Num(f64::INFINITY)),
                "-inf" => Ok(Num(f64::NEG_INFINITY)),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Covariance {
    names: Vec<String>,
    matrix: Vec<Vec<Num>>,
}

#[derive(Serialize, Deserialize)]
struct DerivedDoc {
    value: Num,
    error: Num,
}

#[derive(Serialize, Deserialize)]
struct ReportDoc {
    model: String,
    parameters: IndexMap<String, Num>,
    errors: IndexMap<String, Num>,
    covariance: Covariance,
    chi2: Num,
    chi2_red: Num,
    n_points: usize,
    n_params: usize,
    converged: bool,
    iterations: usize,
    fixed: IndexMap<String, Num>,
    derived: IndexMap<String, DerivedDoc>,
    residuals: Vec<Num>,
    warnings: Vec<String>,
    data_digest: String,
    inputs: BTreeMap<String, String>,
}

/// A fit outcome together with digests of the files it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub outcome: FitOutcome,
    pub inputs: BTreeMap<String, String>,
}

impl FitReport {
    pub fn new(outcome: FitOutcome) -> Self {
        Self { outcome, inputs: BTreeMap::new() }
    }

    pub fn with_input(mut self, label: impl Into<String>, digest: impl Into<String>) -> Self {
        self.inputs.insert(label.into(), digest.into());
        self
    }
}

fn nums(v: &[f64]) -> Vec<Num> {
    v.iter().copied().map(Num).collect()
}

fn to_doc(report: &FitReport) -> ReportDoc {
    let o = &report.outcome;
    let zip = |vals: &[f64]| o.names.iter().cloned().zip(vals.iter().copied().map(Num)).collect();
    ReportDoc {
        model: o.model_id.clone(),
        parameters: zip(&o.params),
        errors: zip(&o.errors),
        covariance: Covariance { names: o.names.clone(), matrix: o.covariance.iter().map(|r| nums(r)).collect() },
        chi2: Num(o.chi2),
        chi2_red: Num(o.chi2_red),
        n_points: o.n_points,
        n_params: o.n_params,
        converged: o.converged,
        iterations: o.iterations,
        fixed: o.fixed.iter().map(|(n, v)| (n.clone(), Num(*v))).collect(),
        derived: o
            .derived
            .iter()
            .map(|d| (d.name.clone(), DerivedDoc { value: Num(d.value), error: Num(d.error) }))
            .collect(),
        residuals: nums(&o.residuals),
        warnings: o.warnings.clone(),
        data_digest: o.data_digest.clone(),
        inputs: report.inputs.clone(),
    }
}

fn from_doc(doc: ReportDoc) -> FitReport {
    let outcome = FitOutcome {
        model_id: doc.model,
        names: doc.covariance.names,
        params: doc.parameters.values().map(|n| n.0).collect(),
        errors: doc.errors.values().map(|n| n.0).collect(),
        covariance: doc.covariance.matrix.into_iter().map(|r| r.into_iter().map(|n| n.0).collect()).collect(),
        chi2: doc.chi2.0,
        chi2_red: doc.chi2_red.0,
        n_points: doc.n_points,
        n_params: doc.n_params,
        converged: doc.converged,
        iterations: doc.iterations,
        residuals: doc.residuals.into_iter().map(|n| n.0).collect(),
        fixed: doc.fixed.into_iter().map(|(k, v)| (k, v.0)).collect(),
        derived: doc
            .derived
            .into_iter()
            .map(|(name, d)| Derived { name, value: d.value.0, error: d.error.0 })
            .collect(),
        warnings: doc.warnings,
        data_digest: doc.data_digest,
    };
    FitReport { outcome, inputs: doc.inputs }
}

pub fn write_fit_report<W: Write>(report: &FitReport, mut dest: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut dest, &to_doc(report))?;
    writeln!(dest)?;
    Ok(())
}

pub fn read_fit_report<R: Read>(source: R) -> Result<FitReport> {
    let doc: ReportDoc = serde_json::from_reader(source)?;
    Ok(from_doc(doc))
}

/// Hex SHA-256 of a byte slice, used for input digests.
pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FitOutcome {
        let mut o = FitOutcome::empty("lorentzian:C2CB");
        o.names = ["A", "gamma_eV", "x0_zpl_eV", "f_sc"].map(String::from).to_vec();
        o.params = vec![4289.4, 0.0118, 1.9751, 0.42];
        o.errors = vec![76.0, 0.0002, 1e-4, 0.1 + 0.2];
        o.covariance = (0..4).map(|i| (0..4).map(|j| if i == j { o.errors[i].powi(2) } else { 1e-17 }).collect()).collect();
        o.chi2 = 1234.5678901234567;
        o.chi2_red = 1.0 / 3.0;
        o.n_points = 600;
        o.n_params = 4;
        o.residuals = vec![-0.0, 5e-324, f64::NAN, f64::INFINITY];
        o.fixed = vec![("gamma_g_eV".into(), 0.0)];
        o.push_derived("dw_exp", 0.6786, 0.005);
        o
    }

    fn round_trip(r: &FitReport) -> FitReport {
        let mut buf = Vec::new();
        write_fit_report(r, &mut buf).unwrap();
        read_fit_report(&buf[..]).unwrap()
    }

    fn bits(v: &[f64]) -> Vec<u64> {
        v.iter().map(|x| x.to_bits()).collect()
    }

    #[test]
    fn report_round_trips_bit_exactly() {
        let r = FitReport::new(sample()).with_input("spectrum", digest_bytes(b"abc"));
        let back = round_trip(&r);
        assert_eq!(bits(&back.outcome.params), bits(&r.outcome.params));
        assert_eq!(bits(&back.outcome.residuals), bits(&r.outcome.residuals));
        assert_eq!(back.outcome.chi2.to_bits(), r.outcome.chi2.to_bits());
        assert_eq!(back.outcome.names, r.outcome.names);
        assert_eq!(back.outcome.derived, r.outcome.derived);
        assert_eq!(back.inputs, r.inputs);
    }

    #[test]
    fn empty_parameter_report_is_valid() {
        let r = FitReport::new(FitOutcome::empty("none"));
        let back = round_trip(&r);
        assert!(back.outcome.names.is_empty());
        assert_eq!(back, r);
    }

    #[test]
    fn spectral_fields_are_present() {
        let mut buf = Vec::new();
        write_fit_report(&FitReport::new(sample()), &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        for k in ["A", "gamma_eV", "x0_zpl_eV", "f_sc"] {
            assert!(v["parameters"].get(k).is_some(), "{k}");
        }
        assert!(v["derived"].get("dw_exp").is_some());
        for k in ["parameters", "errors", "covariance", "chi2_red", "model", "inputs"] {
            assert!(v.get(k).is_some(), "{k}");
        }
    }
}
