use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance header carried by every report.
#[derive(Clone, Debug, Serialize)]
pub struct RunHeader {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub seed: u64,
    /// Input name to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    pub parameters: BTreeMap<String, String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    #[serde(flatten)]
    header: &'a RunHeader,
    outputs: &'a [String],
}

#[derive(Serialize)]
struct Wrapped<'a, T: Serialize> {
    run: &'a RunHeader,
    #[serde(flatten)]
    body: &'a T,
}

/// Output directory of one subcommand run. Files are recorded in the
/// manifest written by [`Run::finish`].
pub struct Run {
    pub header: RunHeader,
    dir: Option<PathBuf>,
    outputs: Vec<String>,
}

impl Run {
    pub fn new(subcommand: &'static str, seed: u64, dir: Option<&Path>) -> anyhow::Result<Self> {
        if let Some(d) = dir {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
        }
        Ok(Run {
            header: RunHeader {
                tool: "relic",
                version: env!("CARGO_PKG_VERSION"),
                subcommand,
                seed,
                inputs: BTreeMap::new(),
                parameters: BTreeMap::new(),
            },
            dir: dir.map(Path::to_path_buf),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, name: impl Into<String>, bytes: &[u8]) {
        self.header.inputs.insert(name.into(), sha256_hex(bytes));
    }

    pub fn param(&mut self, name: &str, value: impl ToString) {
        self.header.parameters.insert(name.to_string(), value.to_string());
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        if let Some(d) = &self.dir {
            let path = d.join(name);
            fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            self.outputs.push(name.to_string());
        }
        Ok(())
    }

    /// Writes `body` as pretty JSON with the run header under `run`.
    pub fn write_json<T: Serialize>(&mut self, name: &str, body: &T) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(&Wrapped { run: &self.header, body })?;
        self.write_bytes(name, format!("{text}\n").as_bytes())
    }

    pub fn write_csv<F>(&mut self, name: &str, fill: F) -> anyhow::Result<()>
    where
        F: FnOnce(&mut csv::Writer<Vec<u8>>) -> anyhow::Result<()>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        fill(&mut w)?;
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))?;
        self.write_bytes(name, &bytes)
    }

    pub fn finish(mut self) -> anyhow::Result<()> {
        if self.dir.is_none() {
            return Ok(());
        }
        let outputs = std::mem::take(&mut self.outputs);
        let text = serde_json::to_string_pretty(&Manifest {
            header: &self.header,
            outputs: &outputs,
        })?;
        self.outputs = outputs;
        self.write_bytes("manifest.json", format!("{text}\n").as_bytes())
    }
}
