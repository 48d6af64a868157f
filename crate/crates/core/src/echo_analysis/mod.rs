//! Echo contrast from detection-time histograms: background estimate,
//! Gaussian echo fit, noise subtraction and detector-response deconvolution.
//!
//! The fitter works in `f64` only.

mod fit;
pub mod io;
pub mod synth;

pub use fit::{fit_echo, fit_echo_in, EchoFit};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Joint detector response FWHM used when none is given.
pub const DEFAULT_DETECTOR_FWHM: f64 = 354e-12;

/// Pre-herald bins needed for a background estimate.
pub const MIN_BACKGROUND_BINS: usize = 50;

/// Detection-time histogram relative to a heralding detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeHistogram {
    bin_width: f64,
    counts: Vec<u64>,
    herald_index: usize,
    storage_time: f64,
}

impl TimeHistogram {
    pub fn new(bin_width: f64, counts: Vec<u64>, herald_index: usize, storage_time: f64) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::domain(format!("bin width {bin_width} must be positive")));
        }
        if herald_index >= counts.len() {
            return Err(Error::domain(format!("herald index {herald_index} outside {} bins", counts.len())));
        }
        if !(storage_time / bin_width >= 10.0) {
            return Err(Error::domain(format!(
                "storage time {storage_time:e} s spans fewer than 10 bins of {bin_width:e} s"
            )));
        }
        Ok(Self { bin_width, counts, herald_index, storage_time })
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn herald_index(&self) -> usize {
        self.herald_index
    }

    /// Expected echo delay after the herald, `2π/Δ`.
    pub fn storage_time(&self) -> f64 {
        self.storage_time
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Centre of bin `i` relative to the herald; the herald bin starts at 0.
    pub fn time(&self, i: usize) -> f64 {
        (i as f64 - self.herald_index as f64 + 0.5) * self.bin_width
    }

    /// Start time of bin `i` relative to the herald.
    pub fn bin_start(&self, i: usize) -> f64 {
        (i as f64 - self.herald_index as f64) * self.bin_width
    }

    /// Bins whose centres lie in `[lo, hi)`.
    pub fn bins_between(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let first = ((lo / self.bin_width - 0.5).ceil() + self.herald_index as f64).max(0.0) as usize;
        let end = ((hi / self.bin_width - 0.5).ceil() + self.herald_index as f64).max(0.0) as usize;
        first.min(self.len())..end.min(self.len())
    }
}

/// Mean counts per bin before the herald.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Background {
    pub mean: f64,
    pub stderr: f64,
    pub bins: usize,
}

pub fn estimate_background(h: &TimeHistogram) -> Result<Background> {
    let bins = h.herald_index;
    if bins < MIN_BACKGROUND_BINS {
        return Err(Error::domain(format!(
            "{bins} bins before the herald, need at least {MIN_BACKGROUND_BINS}"
        )));
    }
    let total: u64 = h.counts[..bins].iter().sum();
    let mean = total as f64 / bins as f64;
    Ok(Background { mean, stderr: (mean / bins as f64).sqrt(), bins })
}

/// `√(w² / (w² − D²))`, the amplitude gain from removing a Gaussian detector
/// response of FWHM `D` from a Gaussian echo of measured FWHM `w`.
pub fn deconvolution_factor(echo_fwhm: f64, detector_fwhm: f64) -> Result<f64> {
    if !(echo_fwhm > detector_fwhm) {
        return Err(Error::Deconvolution { echo_fwhm, detector_fwhm });
    }
    Ok(echo_fwhm / (echo_fwhm * echo_fwhm - detector_fwhm * detector_fwhm).sqrt())
}

/// `d/dw` of [`deconvolution_factor`]: `−D² (w² − D²)^{-3/2}`.
fn deconvolution_slope(echo_fwhm: f64, detector_fwhm: f64) -> f64 {
    let d2 = detector_fwhm * detector_fwhm;
    -d2 * (echo_fwhm * echo_fwhm - d2).powf(-1.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corrections {
    pub subtract_background: bool,
    pub deconvolve: bool,
    pub detector_fwhm: f64,
}

impl Default for Corrections {
    fn default() -> Self {
        Self { subtract_background: false, deconvolve: false, detector_fwhm: DEFAULT_DETECTOR_FWHM }
    }
}

impl Corrections {
    pub fn raw() -> Self {
        Self::default()
    }

    pub fn subtracted() -> Self {
        Self { subtract_background: true, ..Self::default() }
    }

    pub fn full() -> Self {
        Self { subtract_background: true, deconvolve: true, ..Self::default() }
    }

    pub fn with_detector_fwhm(mut self, fwhm: f64) -> Self {
        self.detector_fwhm = fwhm;
        self
    }
}

/// `R = E′/A′` with its first-order uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contrast {
    pub r: f64,
    pub sigma_r: f64,
    /// Echo amplitude after deconvolution, if requested.
    pub amplitude: f64,
    /// Window average after background subtraction, if requested.
    pub average: f64,
    pub deconvolution_factor: f64,
}

pub fn echo_contrast(fit: &EchoFit, corrections: &Corrections) -> Result<Contrast> {
    let (factor, slope) = if corrections.deconvolve {
        (
            deconvolution_factor(fit.fwhm, corrections.detector_fwhm)?,
            deconvolution_slope(fit.fwhm, corrections.detector_fwhm),
        )
    } else {
        (1.0, 0.0)
    };
    let mut average = fit.window_average;
    let mut var_average = fit.window_average_variance;
    if corrections.subtract_background {
        let bg = fit.background.ok_or_else(|| {
            Error::domain(format!("background subtraction needs {MIN_BACKGROUND_BINS} pre-herald bins"))
        })?;
        average -= bg.mean;
        var_average += bg.stderr * bg.stderr;
    }
    if !(average > 0.0) {
        return Err(Error::LowSignal(format!("window average {average} not above background")));
    }
    let amplitude = fit.amplitude * factor;
    let r = amplitude / average;
    let d_e = factor / average;
    let d_w = fit.amplitude * slope / average;
    let d_a = -r / average;
    let var = d_e * d_e * fit.var_amplitude()
        + d_w * d_w * fit.var_fwhm()
        + 2.0 * d_e * d_w * fit.cov_amplitude_fwhm()
        + d_a * d_a * var_average;
    Ok(Contrast { r, sigma_r: var.max(0.0).sqrt(), amplitude, average, deconvolution_factor: factor })
}

/// One row of a sweep: the three levels of correction for one histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub r_raw: Option<f64>,
    pub sigma_raw: Option<f64>,
    pub r_subtracted: Option<f64>,
    pub sigma_subtracted: Option<f64>,
    pub r_deconvolved: Option<f64>,
    pub sigma_deconvolved: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(label: &str, e: &Error) -> Self {
        Self {
            label: label.to_string(),
            r_raw: None,
            sigma_raw: None,
            r_subtracted: None,
            sigma_subtracted: None,
            r_deconvolved: None,
            sigma_deconvolved: None,
            error: Some(e.to_string()),
        }
    }
}

/// Fits every histogram and reports raw, background-subtracted and
/// deconvolved contrasts. A failing histogram yields a row carrying the
/// error; rows are ordered by label, with digit runs compared numerically.
pub fn contrast_vs_param_sweep(histograms: &[(String, TimeHistogram)], detector_fwhm: f64) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = histograms
        .par_iter()
        .map(|(label, h)| {
            let fit = match fit_echo(h) {
                Ok(f) => f,
                Err(e) => return SweepRow::failed(label, &e),
            };
            let mut row = SweepRow::failed(label, &Error::Numeric(String::new()));
            row.error = None;
            let raw = echo_contrast(&fit, &Corrections::raw().with_detector_fwhm(detector_fwhm));
            let sub = echo_contrast(&fit, &Corrections::subtracted().with_detector_fwhm(detector_fwhm));
            let dec = echo_contrast(&fit, &Corrections::full().with_detector_fwhm(detector_fwhm));
            let mut errors = Vec::new();
            for (res, (r, s)) in [
                (raw, (&mut row.r_raw, &mut row.sigma_raw)),
                (sub, (&mut row.r_subtracted, &mut row.sigma_subtracted)),
                (dec, (&mut row.r_deconvolved, &mut row.sigma_deconvolved)),
            ] {
                match res {
                    Ok(c) => {
                        *r = Some(c.r);
                        *s = Some(c.sigma_r);
                    }
                    Err(e) => errors.push(e.to_string()),
                }
            }
            if !errors.is_empty() {
                errors.dedup();
                row.error = Some(errors.join("; "));
            }
            row
        })
        .collect();
    rows.sort_by(|a, b| natural_cmp(&a.label, &b.label));
    rows
}

/// Orders strings with embedded numbers numerically ("N=60" < "N=408").
pub fn natural_cmp(a: &str, b: &str) -> std::cmp::Ordering {
    fn chunks(s: &str) -> Vec<(bool, &str)> {
        let mut out = Vec::new();
        let mut start = 0;
        let bytes = s.as_bytes();
        for i in 1..=bytes.len() {
            if i == bytes.len() || bytes[i].is_ascii_digit() != bytes[start].is_ascii_digit() {
                out.push((bytes[start].is_ascii_digit(), &s[start..i]));
                start = i;
            }
        }
        out
    }
    let (ca, cb) = (chunks(a), chunks(b));
    for (x, y) in ca.iter().zip(&cb) {
        let ord = match (x, y) {
            ((true, p), (true, q)) => {
                let (p, q) = (p.trim_start_matches('0'), q.trim_start_matches('0'));
                p.len().cmp(&q.len()).then_with(|| p.cmp(q))
            }
            ((_, p), (_, q)) => p.cmp(q),
        };
        if ord.is_ne() {
            return ord;
        }
    }
    ca.len().cmp(&cb.len()).then_with(|| a.cmp(b))
}
