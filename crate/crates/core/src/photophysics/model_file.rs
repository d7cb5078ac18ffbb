//! Structured-text model files. Levels are numbered from 1 as in the usual
//! spectroscopic convention:
//!
//! ```toml
//! [levels]
//! n = 3
//! emissive = [[2, 1]]
//!
//! [[rate]]
//! i = 1
//! j = 2
//! value = 1.0e6
//!
//! [detector]
//! background_rate = 2.0e4
//! seed = 7
//! ```

use std::io::Read;

use serde::{Deserialize, Serialize};

use super::level_system::LevelSystem;
use super::simulate::DetectorChain;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub system: LevelSystem,
    pub detector: DetectorChain,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    levels: RawLevels,
    #[serde(default)]
    rate: Vec<RawRate>,
    #[serde(default)]
    detector: DetectorChain,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLevels {
    n: usize,
    emissive: Vec<[usize; 2]>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRate {
    i: usize,
    j: usize,
    value: f64,
}

fn zero_based(level: usize) -> Result<usize> {
    level.checked_sub(1).ok_or_else(|| Error::Model("levels are numbered from 1".into()))
}

pub fn read_model<R: Read>(mut source: R) -> Result<ModelFile> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let raw: Raw = toml::from_str(&text)?;
    let transitions = raw
        .rate
        .iter()
        .map(|r| Ok((zero_based(r.i)?, zero_based(r.j)?, r.value)))
        .collect::<Result<Vec<_>>>()?;
    let emissive = raw.levels.emissive.iter().map(|&[i, j]| Ok((zero_based(i)?, zero_based(j)?))).collect::<Result<Vec<_>>>()?;
    let system = LevelSystem::from_transitions(raw.levels.n, &transitions, &emissive)?;
    raw.detector.validate()?;
    Ok(ModelFile { system, detector: raw.detector })
}

impl ModelFile {
    pub fn to_toml(&self) -> String {
        let n = self.system.n_levels();
        let mut rate = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let value = self.system.rate(i, j);
                if i != j && value > 0.0 {
                    rate.push(RawRate { i: i + 1, j: j + 1, value });
                }
            }
        }
        let raw = Raw {
            levels: RawLevels { n, emissive: self.system.emissive().iter().map(|&(i, j)| [i + 1, j + 1]).collect() },
            rate,
            detector: self.detector.clone(),
        };
        toml::to_string(&raw).expect("model files always serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photophysics::FourLevelRates;

    #[test]
    fn round_trip() {
        let system = LevelSystem::four_level(FourLevelRates {
            k12: 1e6,
            k21: 2.0833e8,
            k23: 3e5,
            k24: 1e7,
            k31: 2731.123456789,
            k41: 51234.5,
        })
        .unwrap();
        let detector = DetectorChain { background_rate: 1.5e4, seed: 7, jitter_sigma: 12.5, ..Default::default() };
        let m = ModelFile { system, detector };
        let back = read_model(m.to_toml().as_bytes()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn one_based_levels() {
        let text = "[levels]\nn = 2\nemissive = [[2, 1]]\n[[rate]]\ni = 1\nj = 2\nvalue = 1e6\n[[rate]]\ni = 2\nj = 1\nvalue = 1e8\n";
        let m = read_model(text.as_bytes()).unwrap();
        assert_eq!(m.system.rate(0, 1), 1e6);
        assert_eq!(m.system.emissive(), &[(1, 0)]);
        assert_eq!(m.detector, DetectorChain::default());
        assert!(read_model(text.replace("i = 1", "i = 0").as_bytes()).is_err());
        assert!(read_model(text.replace("[[rate]]", "[[rates]]").as_bytes()).is_err());
    }
}
