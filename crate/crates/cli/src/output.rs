//! Output files with a provenance record: tool version, subcommand, seed,
//! config hash, input hashes and the effective configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub seed: u64,
    /// Hash of the config file, empty when running on defaults.
    pub config_sha256: String,
    pub inputs: Vec<InputFile>,
    pub config: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl Provenance {
    pub fn csv_header(&self) -> String {
        let mut out = format!("# {} {} {}\n# seed: {}\n", self.tool, self.version, self.command, self.seed);
        if !self.config_sha256.is_empty() {
            let _ = writeln!(out, "# config_sha256: {}", self.config_sha256);
        }
        for input in &self.inputs {
            let _ = writeln!(out, "# input: {} sha256:{}", input.path, input.sha256);
        }
        let _ = writeln!(out, "# config: {}", self.config);
        out
    }
}

/// Collects output files under one directory.
pub struct OutputDir {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        log::info!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }

    /// JSON document `{"provenance": …, "result": …}`.
    pub fn json<T: Serialize>(&mut self, name: &str, prov: &Provenance, result: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Doc<'a, T> {
            provenance: &'a Provenance,
            result: &'a T,
        }
        let text = serde_json::to_string_pretty(&Doc { provenance: prov, result })
            .map_err(|e| CliError::Io(format!("serialising {name}: {e}")))?;
        self.write(name, &(text + "\n"))
    }

    /// CSV table preceded by `#` provenance lines.
    pub fn csv(&mut self, name: &str, prov: &Provenance, columns: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(prov.csv_header().into_bytes());
        let fail = |e: csv::Error| CliError::Io(format!("writing {name}: {e}"));
        w.write_record(columns).map_err(fail)?;
        for row in rows {
            w.write_record(row).map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(format!("writing {name}: {e}")))?;
        self.write(name, &String::from_utf8_lossy(&bytes))
    }
}

/// Shortest round-trip formatting; empty for missing values.
pub fn num(x: f64) -> String {
    format!("{x}")
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}
