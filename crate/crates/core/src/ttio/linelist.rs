use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `dw_sim = 1 / (1 + sum of sideband amplitudes)`.
pub const DW_CONSISTENCY_TOL: f64 = 1e-6;

/// One emission line: the ZPL (`delta_e_ev == 0`, `rel_amp == 1`) or a
/// phonon replica red-shifted by `delta_e_ev` from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub delta_e_ev: f64,
    pub rel_amp: f64,
}

impl Mode {
    pub fn new(delta_e_ev: f64, rel_amp: f64) -> Self {
        Self { name: None, delta_e_ev, rel_amp }
    }

    fn is_zpl(&self) -> bool {
        self.delta_e_ev == 0.0 && self.rel_amp == 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DwPolicy {
    /// Reject lists whose amplitudes disagree with `dw_sim`.
    #[default]
    Strict,
    /// Rescale the sideband amplitudes, keeping their ratios, so that they
    /// reproduce `dw_sim`.
    Renormalize,
}

/// ZPL plus phonon-mode offsets and relative intensities of a candidate defect.
/// The ZPL is always `modes()[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectLineList {
    name: String,
    modes: Vec<Mode>,
    dw_sim: f64,
}

impl DefectLineList {
    pub fn new(name: impl Into<String>, mut modes: Vec<Mode>, dw_sim: f64, policy: DwPolicy) -> Result<Self> {
        let name = name.into();
        if !(dw_sim > 0.0 && dw_sim <= 1.0) {
            return Err(Error::LineList(format!("dw_sim {dw_sim} outside (0, 1]")));
        }
        let zpl_count = modes.iter().filter(|m| m.is_zpl()).count();
        if zpl_count != 1 {
            return Err(Error::LineList(format!(
                "expected exactly one ZPL entry (delta_e_ev = 0, rel_amp = 1), found {zpl_count}"
            )));
        }
        for m in modes.iter().filter(|m| !m.is_zpl()) {
            if !(m.delta_e_ev.is_finite() && m.delta_e_ev > 0.0) {
                return Err(Error::LineList(format!("sideband offset {} must be positive", m.delta_e_ev)));
            }
            if !(m.rel_amp.is_finite() && m.rel_amp > 0.0) {
                return Err(Error::LineList(format!("relative amplitude {} must be positive", m.rel_amp)));
            }
        }
        modes.sort_by(|a, b| b.is_zpl().cmp(&a.is_zpl()).then(a.delta_e_ev.total_cmp(&b.delta_e_ev)));

        let sum: f64 = modes[1..].iter().map(|m| m.rel_amp).sum();
        let implied = 1.0 / (1.0 + sum);
        if (implied - dw_sim).abs() > DW_CONSISTENCY_TOL {
            match policy {
                DwPolicy::Strict => {
                    return Err(Error::LineList(format!(
                        "dw_sim {dw_sim} disagrees with amplitudes (1/(1+{sum}) = {implied})"
                    )))
                }
                DwPolicy::Renormalize => {
                    let target = 1.0 / dw_sim - 1.0;
                    if sum == 0.0 || target == 0.0 {
                        return Err(Error::LineList("cannot renormalize: no sideband weight to rescale".into()));
                    }
                    let scale = target / sum;
                    for m in &mut modes[1..] {
                        m.rel_amp *= scale;
                    }
                }
            }
        }
        Ok(Self { name, modes, dw_sim })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn sidebands(&self) -> &[Mode] {
        &self.modes[1..]
    }

    pub fn dw_sim(&self) -> f64 {
        self.dw_sim
    }

    /// Sum of the sideband relative amplitudes.
    pub fn sideband_weight(&self) -> f64 {
        self.sidebands().iter().map(|m| m.rel_amp).sum()
    }

    /// A list holding only the ZPL.
    pub fn zpl_only(name: impl Into<String>) -> Self {
        Self { name: name.into(), modes: vec![Mode::new(0.0, 1.0)], dw_sim: 1.0 }
    }

    pub fn to_toml(&self) -> String {
        let doc = FileDoc {
            defect: DefectSection { name: self.name.clone(), dw_sim: self.dw_sim },
            mode: self.modes.clone(),
        };
        toml::to_string(&doc).expect("line list serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct DefectSection {
    name: String,
    dw_sim: f64,
}

#[derive(Serialize, Deserialize)]
struct FileDoc {
    defect: DefectSection,
    #[serde(default)]
    mode: Vec<Mode>,
}

pub fn read_linelist<R: Read>(mut source: R, policy: DwPolicy) -> Result<DefectLineList> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let doc: FileDoc = toml::from_str(&text)?;
    DefectLineList::new(doc.defect.name, doc.mode, doc.defect.dw_sim, policy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<DefectLineList> {
        read_linelist(s.as_bytes(), DwPolicy::Strict)
    }

    const TWO_MODE: &str = r#"
[defect]
name = "C2CB"
dw_sim = 0.47

[[mode]]
name = "ZPL"
delta_e_ev = 0.0
rel_amp = 1.0

[[mode]]
delta_e_ev = 0.170
rel_amp = 1.1276596
"#;

    #[test]
    fn zpl_only_list() {
        let l = parse("[defect]\nname = \"bare\"\ndw_sim = 1.0\n[[mode]]\ndelta_e_ev = 0.0\nrel_amp = 1.0\n").unwrap();
        assert_eq!(l.modes().len(), 1);
        assert_eq!(l.sideband_weight(), 0.0);
    }

    #[test]
    fn consistent_two_mode_list() {
        let l = parse(TWO_MODE).unwrap();
        assert_eq!(l.sidebands().len(), 1);
        assert!((1.0 / (1.0 + l.sideband_weight()) - 0.47).abs() < DW_CONSISTENCY_TOL);
    }

    #[test]
    fn inconsistent_dw_is_rejected_or_renormalized() {
        let bad = TWO_MODE.replace("0.47", "0.40");
        assert!(matches!(parse(&bad), Err(Error::LineList(_))));
        let l = read_linelist(bad.as_bytes(), DwPolicy::Renormalize).unwrap();
        assert!((1.0 / (1.0 + l.sideband_weight()) - 0.40).abs() < 1e-12);
    }

    #[test]
    fn missing_zpl_is_an_error() {
        let s = "[defect]\nname = \"x\"\ndw_sim = 0.5\n[[mode]]\ndelta_e_ev = 0.1\nrel_amp = 1.0\n";
        assert!(matches!(parse(s), Err(Error::LineList(_))));
    }

    #[test]
    fn zpl_sorted_first_and_round_trips() {
        let l = DefectLineList::new(
            "x",
            vec![Mode::new(0.2, 0.5), Mode::new(0.0, 1.0), Mode::new(0.1, 0.5)],
            0.5,
            DwPolicy::Strict,
        )
        .unwrap();
        assert_eq!(l.modes()[0].delta_e_ev, 0.0);
        assert_eq!(l.modes()[1].delta_e_ev, 0.1);
        assert_eq!(parse(&l.to_toml()).unwrap(), l);
    }
}
