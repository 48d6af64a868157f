//! Histogram files: a two-column CSV `(bin_start_s, counts)` plus a JSON
//! sidecar with the timing metadata.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{TimeHistogram, DEFAULT_DETECTOR_FWHM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramMeta {
    pub bin_width: f64,
    pub herald_index: usize,
    pub storage_time: f64,
    #[serde(default = "default_detector")]
    pub detector_fwhm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

fn default_detector() -> f64 {
    DEFAULT_DETECTOR_FWHM
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    bin_start_s: f64,
    counts: u64,
}

/// `foo.csv` → `foo.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn parse_histogram_csv(text: &str) -> Result<Vec<(f64, u64)>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    reader
        .deserialize::<Row>()
        .enumerate()
        .map(|(i, r)| r.map(|r| (r.bin_start_s, r.counts)).map_err(|e| Error::Parse(format!("histogram row {}: {e}", i + 1))))
        .collect()
}

/// Builds a histogram from CSV rows and metadata, checking that the bin
/// starts match the declared bin width.
pub fn histogram_from_rows(rows: &[(f64, u64)], meta: &HistogramMeta) -> Result<TimeHistogram> {
    let h = TimeHistogram::new(meta.bin_width, rows.iter().map(|r| r.1).collect(), meta.herald_index, meta.storage_time)?;
    for (i, &(start, _)) in rows.iter().enumerate() {
        let expected = h.bin_start(i);
        if (start - expected).abs() > 1e-3 * meta.bin_width {
            return Err(Error::Parse(format!(
                "bin {i} starts at {start:e} s, expected {expected:e} s from bin width and herald index"
            )));
        }
    }
    Ok(h)
}

/// Reads `path` and its JSON sidecar.
pub fn read_histogram(path: &Path) -> Result<(TimeHistogram, HistogramMeta)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let side = sidecar_path(path);
    let meta_text = std::fs::read_to_string(&side).map_err(|e| Error::Io(format!("{}: {e}", side.display())))?;
    let meta: HistogramMeta =
        serde_json::from_str(&meta_text).map_err(|e| Error::Parse(format!("{}: {e}", side.display())))?;
    let rows = parse_histogram_csv(&text)?;
    Ok((histogram_from_rows(&rows, &meta)?, meta))
}

pub fn histogram_csv(h: &TimeHistogram) -> String {
    let mut out = String::from("bin_start_s,counts\n");
    for (i, c) in h.counts().iter().enumerate() {
        out.push_str(&format!("{:e},{c}\n", h.bin_start(i)));
    }
    out
}

/// Writes `path` and its sidecar.
pub fn write_histogram(path: &Path, h: &TimeHistogram, meta: &HistogramMeta) -> Result<()> {
    std::fs::write(path, histogram_csv(h))?;
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(sidecar_path(path), json + "\n")?;
    Ok(())
}

impl HistogramMeta {
    pub fn for_histogram(h: &TimeHistogram, detector_fwhm: f64, label: Option<String>) -> Self {
        Self {
            bin_width: h.bin_width(),
            herald_index: h.herald_index(),
            storage_time: h.storage_time(),
            detector_fwhm,
            label,
        }
    }
}
