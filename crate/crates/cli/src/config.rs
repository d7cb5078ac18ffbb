//! Optional TOML run configuration. Top-level keys set the global options;
//! a table named after a subcommand sets that subcommand's options, keyed
//! by the long flag name with `_` for `-`:
//!
//! ```toml
//! seed = 7
//! out_dir = "run1"
//!
//! [correlate]
//! max_lag = "5ms"
//! ```
//!
//! Flags always win over the file.

use std::path::Path;

use anyhow::Result;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Usage;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<std::path::PathBuf>,
    pub log_level: Option<String>,
}

pub struct ConfigFile {
    pub global: GlobalConfig,
    sections: toml::Table,
}

impl ConfigFile {
    pub fn empty() -> Self {
        Self { global: GlobalConfig::default(), sections: toml::Table::new() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Usage(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = text.parse().map_err(|e| Usage(format!("config {}: {e}", path.display())))?;
        let (sections, scalars): (toml::Table, toml::Table) = table.into_iter().partition(|(_, v)| v.is_table());
        let global = GlobalConfig::deserialize(scalars).map_err(|e| Usage(format!("config {}: {e}", path.display())))?;
        Ok(Self { global, sections })
    }

    /// The subcommand's arguments with any option left unset on the command
    /// line taken from the file.
    pub fn merge<T: Serialize + DeserializeOwned>(&self, subcommand: &str, cli: &T) -> Result<T> {
        let mut merged = match self.sections.get(subcommand) {
            Some(toml::Value::Table(t)) => t.clone(),
            _ => toml::Table::new(),
        };
        let given = toml::Table::try_from(cli)?;
        merged.extend(given);
        T::deserialize(merged).map_err(|e| Usage(format!("config [{subcommand}]: {e}")).into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Serialize, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct Args {
        a: Option<u32>,
        b: Option<String>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        flag: bool,
    }

    fn file(text: &str) -> ConfigFile {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, text).unwrap();
        ConfigFile::load(&p).unwrap()
    }

    #[test]
    fn flags_override_file() {
        let c = file("seed = 3\n[cmd]\na = 1\nb = \"x\"\nflag = true\n");
        assert_eq!(c.global.seed, Some(3));
        let m = c.merge("cmd", &Args { a: Some(9), b: None, flag: false }).unwrap();
        assert_eq!(m, Args { a: Some(9), b: Some("x".into()), flag: true });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let c = file("[cmd]\nzzz = 1\n");
        let err = c.merge("cmd", &Args { a: None, b: None, flag: false }).unwrap_err();
        assert!(err.is::<Usage>());
    }
}
