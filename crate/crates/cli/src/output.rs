//! Output files with provenance, and the per-run timing ledger.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::Failure;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(config_sha256: String) -> Self {
        Self { tool: "prnf", version: VERSION, config_sha256 }
    }

    /// First line of every CSV output.
    pub fn comment(&self) -> String {
        format!("# {} {} config-sha256={}", self.tool, self.version, self.config_sha256)
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Failure::io(path, e))
}

/// Writes a CSV file whose first line is the provenance comment.
pub fn write_csv(
    path: &Path,
    prov: &Provenance,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), Failure> {
    let mut w = create(path)?;
    writeln!(w, "{}", prov.comment())
        .and_then(|_| body(&mut w))
        .and_then(|_| w.flush())
        .map_err(|e| Failure::io(path, e))
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// JSON metadata next to a binary artifact.
pub fn write_sidecar(path: &Path, meta: &serde_json::Value) -> Result<(), Failure> {
    let side = sidecar_path(path);
    let mut w = create(&side)?;
    serde_json::to_writer_pretty(&mut w, meta)
        .map_err(std::io::Error::other)
        .and_then(|_| writeln!(w))
        .and_then(|_| w.flush())
        .map_err(|e| Failure::io(&side, e))
}

fn timings_path(out: &Path) -> PathBuf {
    out.join("timings.json")
}

/// Stage wall-clock seconds recorded so far in `out`. This is the only output
/// that differs between otherwise identical runs.
pub fn read_timings(out: &Path) -> BTreeMap<String, f64> {
    fs::read(timings_path(out))
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or_default()
}

pub fn record_timing(out: &Path, stage: &str, seconds: f64) -> Result<(), Failure> {
    let mut t = read_timings(out);
    t.insert(stage.to_string(), seconds);
    let path = timings_path(out);
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &t)
        .map_err(std::io::Error::other)
        .and_then(|_| w.flush())
        .map_err(|e| Failure::io(&path, e))
}
