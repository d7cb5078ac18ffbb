//! Output staging. A command computes every file in memory first; nothing
//! touches the output directory until all of them exist, and each file is
//! written under a temporary name and renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use emitterlab::ttio::digest_bytes;
use serde::Serialize;

use crate::Usage;

/// An input file, read whole and digested.
pub struct Input {
    pub path: PathBuf,
    pub bytes: Vec<u8>,
}

impl Input {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Usage(format!("cannot read {}: {e}", path.display())))?;
        Ok(Self { path: path.to_owned(), bytes })
    }

    pub fn digest(&self) -> String {
        digest_bytes(&self.bytes)
    }
}

#[derive(Serialize)]
struct InputEntry {
    path: String,
    sha256: String,
}

/// Run record written beside the outputs. It carries no timestamps, so
/// identical runs produce identical manifests.
#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    subcommand: &'a str,
    config: &'a serde_json::Value,
    inputs: BTreeMap<&'a str, InputEntry>,
    outputs: BTreeMap<&'a str, String>,
}

pub struct Outputs {
    dir: PathBuf,
    subcommand: &'static str,
    inputs: Vec<(String, PathBuf, String)>,
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn new(dir: &Path, subcommand: &'static str) -> Self {
        Self { dir: dir.to_owned(), subcommand, inputs: Vec::new(), files: Vec::new() }
    }

    pub fn input(&mut self, label: &str, input: &Input) {
        self.inputs.push((label.to_owned(), input.path.clone(), input.digest()));
    }

    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn manifest_name(subcommand: &str) -> String {
        format!("manifest.{subcommand}.json")
    }

    /// Writes every staged file and then the manifest. Refuses to replace
    /// any of the inputs.
    pub fn commit(mut self, config: &serde_json::Value) -> Result<Vec<PathBuf>> {
        let manifest = Manifest {
            tool: "emitterlab",
            version: env!("CARGO_PKG_VERSION"),
            subcommand: self.subcommand,
            config,
            inputs: self
                .inputs
                .iter()
                .map(|(l, p, d)| (l.as_str(), InputEntry { path: p.display().to_string(), sha256: d.clone() }))
                .collect(),
            outputs: self.files.iter().map(|(n, b)| (n.as_str(), digest_bytes(b))).collect(),
        };
        let mut text = serde_json::to_vec_pretty(&manifest)?;
        text.push(b'\n');
        self.files.push((Self::manifest_name(self.subcommand), text));

        for (name, _) in &self.files {
            let target = self.dir.join(name);
            if self.inputs.iter().any(|(_, p, _)| same_file(p, &target)) {
                return Err(Usage(format!("output {} would overwrite an input", target.display())).into());
            }
        }
        fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let target = self.dir.join(name);
            let tmp = self.dir.join(format!(".{name}.partial"));
            fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
            fs::rename(&tmp, &target).with_context(|| format!("renaming into {}", target.display()))?;
            written.push(target);
        }
        Ok(written)
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

/// Tab-separated `x, data, model, residual` rows for plotting a fit.
pub fn overlay(x_label: &str, x: &[f64], data: &[f64], residuals: &[f64]) -> Vec<u8> {
    let mut s = format!("# x: {x_label}\nx\tdata\tmodel\tresidual\n");
    for ((x, d), r) in x.iter().zip(data).zip(residuals) {
        s.push_str(&format!("{x}\t{d}\t{}\t{r}\n", d - r));
    }
    s.into_bytes()
}
