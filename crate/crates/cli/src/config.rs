//! Run configuration read from a TOML file. Every section is optional and
//! defaults to the reference operating point.

use std::path::{Path, PathBuf};

use afc_core::echo_sim::{SpectrumShape, ToothShape};
use afc_core::photon_stats::{ChannelConfig, CountRates, SourceStatistics};
use afc_core::spectroscopy::MaterialConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub simulate: SimulateConfig,
    pub pstats: PstatsConfig,
    pub analyze: AnalyzeConfig,
    pub bound: BoundConfig,
    pub atoms: MaterialConfig,
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhotonConfig {
    pub shape: SpectrumShape,
    #[serde(default)]
    pub fwhm: Option<f64>,
    #[serde(default)]
    pub center_offset: f64,
}

impl PhotonConfig {
    pub fn flat() -> Self {
        Self { shape: SpectrumShape::Flat, fwhm: None, center_offset: 0.0 }
    }

    pub fn lorentzian(fwhm: f64) -> Self {
        Self { shape: SpectrumShape::Lorentzian, fwhm: Some(fwhm), center_offset: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Tooth counts of the R-versus-N table.
    pub teeth: Vec<usize>,
    /// Comb bandwidth (Hz) shared by the R-versus-N combs.
    pub bandwidth: f64,
    /// Tooth FWHM (Hz); zero gives ideal teeth.
    pub linewidth: f64,
    pub d1: f64,
    pub d0: f64,
    pub tooth_shape: ToothShape,
    pub photon: PhotonConfig,
    /// Relative standard deviation of per-tooth depth errors, drawn from the seed.
    pub depth_jitter: f64,
    /// Teeth of the comb whose emission trace is written out.
    pub trace_teeth: usize,
    /// Trace samples per storage time; the trace spans 2.5 storage times.
    pub trace_points: usize,
    pub bandwidth_sweep: BandwidthSweep,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            teeth: vec![2, 9, 30, 100, 564],
            bandwidth: 6e9,
            linewidth: 0.0,
            d1: 1.0,
            d0: 0.0,
            tooth_shape: ToothShape::Gaussian,
            photon: PhotonConfig::flat(),
            depth_jitter: 0.0,
            trace_teeth: 9,
            trace_points: 400,
            bandwidth_sweep: BandwidthSweep::default(),
        }
    }
}

/// Combs of fixed tooth spacing and growing bandwidth under one photon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BandwidthSweep {
    pub bandwidths: Vec<f64>,
    /// Tooth spacing (Hz).
    pub spacing: f64,
    pub photon: PhotonConfig,
}

impl Default for BandwidthSweep {
    fn default() -> Self {
        Self {
            bandwidths: vec![0.6e9, 1.2e9, 2.4e9, 4.8e9, 9.6e9],
            spacing: 0.2e9,
            photon: PhotonConfig::lorentzian(6e9),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PstatsConfig {
    pub channel: ChannelConfig,
    /// Largest `r` reported.
    pub r_max: usize,
    /// Monte-Carlo cross-check trials; zero skips it.
    pub mc_trials: u64,
    /// Coincidence and singles rates for estimating `μ` and the heralding efficiencies.
    pub rates: Option<CountRates<f64>>,
}

impl Default for PstatsConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig {
                mu: 1.1e-3,
                sigma_mu: 0.0,
                eta_a: 0.11,
                eta_b: Some(0.0106),
                eta_b_star: None,
                eta_ci: None,
                eta_w: Some(0.33),
                d1: None,
                sigma_d1: 0.0,
                finesse: None,
                eta_t: 0.36,
                stats_model: SourceStatistics::Thermal,
            },
            r_max: 4,
            mc_trials: 0,
            rates: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeConfig {
    /// Histogram CSV files, each with a JSON sidecar; relative to the config file.
    pub histograms: Vec<PathBuf>,
    /// Overrides the sidecar detector FWHM (s).
    pub detector_fwhm: Option<f64>,
    pub subtract_background: bool,
    pub deconvolve: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    pub r: f64,
    pub sigma_r: f64,
    pub n_teeth: usize,
    pub p1: f64,
    pub p2: f64,
    pub starts: usize,
    /// Depths of the written `max_R` curves; empty skips them.
    pub curve_depths: Vec<usize>,
    /// Two-excitation probabilities of the curves, in addition to `p2`.
    pub curve_p2: Vec<f64>,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            r: 256.7,
            sigma_r: 8.7,
            n_teeth: 564,
            p1: 3.5e-3,
            p2: 2.6e-8,
            starts: 200,
            curve_depths: Vec::new(),
            curve_p2: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Label of the analysed histogram whose contrast is certified.
    pub label: Option<String>,
    /// Teeth of the certified comb; defaults to `bound.n_teeth`.
    pub n_teeth: Option<usize>,
}

impl Config {
    /// Parses `text`; relative histogram paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for p in &mut cfg.analyze.histograms {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok((Self::parse(text, base)?, bytes))
    }
}
