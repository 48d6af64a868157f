//! Synthetic detection histograms with a known echo contrast.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{Corrections, TimeHistogram, DEFAULT_DETECTOR_FWHM};
use crate::dicke::ToothAmplitudes;
use crate::echo_sim::{emission_trace, CombSpec};
use crate::error::{Error, Result};

const FOUR_LN2: f64 = 4.0 * std::f64::consts::LN_2;

/// Teeth of the bundled sweep fixtures.
pub const FIXTURE_TEETH: [usize; 8] = [30, 60, 100, 200, 300, 408, 500, 564];

/// Heralded-echo histogram model.
///
/// The echo is a Gaussian of intrinsic FWHM `echo_fwhm` whose peak decays as
/// `echo_amplitude · exp(-t_e / decay_time)`, observed through a Gaussian
/// detector response. After the herald a noise floor of `pedestal` times the
/// intrinsic peak adds to the flat `background`; before it only the
/// background is present. The transmitted part of the photon arrives
/// `transmitted_delay` after the herald.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEcho {
    pub n_teeth: usize,
    /// Comb bandwidth (Hz); the storage time is `N / B`.
    pub comb_bandwidth: f64,
    pub bin_width: f64,
    /// Counts per bin.
    pub background: f64,
    pub detector_fwhm: f64,
    pub echo_fwhm: f64,
    pub echo_amplitude: f64,
    pub decay_time: f64,
    pub pedestal: f64,
    pub transmitted_amplitude: f64,
    pub transmitted_delay: f64,
    pub pre_herald_bins: usize,
    /// Bins kept after the averaging window.
    pub tail_bins: usize,
}

impl Default for SyntheticEcho {
    fn default() -> Self {
        Self {
            n_teeth: 564,
            comb_bandwidth: 6e9,
            bin_width: 80e-12,
            background: 0.9,
            detector_fwhm: DEFAULT_DETECTOR_FWHM,
            echo_fwhm: 202.84e-12,
            echo_amplitude: 1610.5,
            decay_time: 48.55e-9,
            pedestal: 1.6e-3,
            transmitted_amplitude: 4000.0,
            transmitted_delay: 1e-9,
            pre_herald_bins: 2000,
            tail_bins: 250,
        }
    }
}

impl SyntheticEcho {
    pub fn with_teeth(n_teeth: usize) -> Self {
        Self { n_teeth, ..Self::default() }
    }

    pub fn storage_time(&self) -> f64 {
        self.n_teeth as f64 / self.comb_bandwidth
    }

    /// FWHM after the detector response.
    pub fn measured_fwhm(&self) -> f64 {
        self.echo_fwhm.hypot(self.detector_fwhm)
    }

    /// Echo peak before the detector response.
    pub fn intrinsic_amplitude(&self) -> f64 {
        self.echo_amplitude * (-self.storage_time() / self.decay_time).exp()
    }

    /// Echo peak after the detector response (area is conserved).
    pub fn measured_amplitude(&self) -> f64 {
        self.intrinsic_amplitude() * self.echo_fwhm / self.measured_fwhm()
    }

    pub fn pedestal_level(&self) -> f64 {
        self.pedestal * self.intrinsic_amplitude()
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            self.comb_bandwidth,
            self.bin_width,
            self.detector_fwhm,
            self.echo_fwhm,
            self.echo_amplitude,
            self.decay_time,
        ];
        if self.n_teeth == 0 || positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::domain("synthetic echo needs teeth and positive widths, amplitude and rates"));
        }
        if !(self.background >= 0.0 && self.pedestal >= 0.0 && self.transmitted_amplitude >= 0.0) {
            return Err(Error::domain("background, pedestal and transmitted amplitude must be non-negative"));
        }
        Ok(())
    }

    fn total_bins(&self) -> usize {
        self.pre_herald_bins + (1.5 * self.storage_time() / self.bin_width).ceil() as usize + 1 + self.tail_bins
    }

    /// Mean counts per bin, evaluated at bin centres.
    pub fn expected_counts(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let te = self.storage_time();
        let (e, w) = (self.measured_amplitude(), self.measured_fwhm());
        let floor = self.pedestal_level();
        let gauss = |t: f64, c: f64, fwhm: f64| (-FOUR_LN2 * (t - c) * (t - c) / (fwhm * fwhm)).exp();
        Ok((0..self.total_bins())
            .map(|i| {
                let t = (i as f64 - self.pre_herald_bins as f64 + 0.5) * self.bin_width;
                let mut v = self.background + e * gauss(t, te, w);
                v += self.transmitted_amplitude * gauss(t, self.transmitted_delay, self.detector_fwhm);
                if t >= 0.0 {
                    v += floor;
                }
                v
            })
            .collect())
    }

    /// Poisson-sampled histogram.
    pub fn sample(&self, seed: u64) -> Result<TimeHistogram> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts = self.expected_counts()?.into_iter().map(|m| poisson(m, &mut rng)).collect();
        TimeHistogram::new(self.bin_width, counts, self.pre_herald_bins, self.storage_time())
    }

    /// Histogram of the rounded expected counts.
    pub fn noiseless(&self) -> Result<TimeHistogram> {
        let counts = self.expected_counts()?.into_iter().map(|m| m.round() as u64).collect();
        TimeHistogram::new(self.bin_width, counts, self.pre_herald_bins, self.storage_time())
    }

    /// Contrast the analysis should recover, from the model parameters.
    pub fn expected_contrast(&self, corrections: &Corrections) -> f64 {
        let te = self.storage_time();
        let e = self.measured_amplitude();
        let w = self.measured_fwhm();
        // Gaussian area over one storage time, per bin
        let echo_mean = e * w * (std::f64::consts::PI / FOUR_LN2).sqrt() / te;
        let mut a = echo_mean + self.pedestal_level();
        if !corrections.subtract_background {
            a += self.background;
        }
        let e = if corrections.deconvolve {
            e * w / (w * w - corrections.detector_fwhm.powi(2)).sqrt()
        } else {
            e
        };
        e / a
    }
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Options for turning a simulated emission trace into a histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceHistogram {
    pub bin_width: f64,
    /// Expected counts in the echo bin.
    pub peak_counts: f64,
    pub background: f64,
    pub pre_herald_bins: usize,
    /// `None` gives rounded expected counts.
    pub seed: Option<u64>,
}

/// Histogram of a simulated emission `P(t)` for `t` in `[0, 1.6 t_e]`,
/// scaled so the echo bin expects `peak_counts`.
pub fn histogram_from_emission(
    amplitudes: &ToothAmplitudes<f64>,
    comb: &CombSpec<f64>,
    opts: &TraceHistogram,
) -> Result<TimeHistogram> {
    let te = comb.storage_time();
    let post = (1.6 * te / opts.bin_width).ceil() as usize;
    let times: Vec<f64> = (0..post).map(|i| (i as f64 + 0.5) * opts.bin_width).collect();
    let trace = emission_trace(amplitudes, comb, &times)?;
    let peak = emission_trace(amplitudes, comb, &[te])?.p[0];
    if !(peak > 0.0) {
        return Err(Error::domain("simulated echo has no amplitude"));
    }
    let scale = opts.peak_counts / peak;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.unwrap_or(0));
    let means = std::iter::repeat_n(0.0, opts.pre_herald_bins).chain(trace.p.iter().map(|p| p * scale));
    let counts = means
        .map(|m| {
            let m = m + opts.background;
            match opts.seed {
                Some(_) => poisson(m, &mut rng),
                None => m.round() as u64,
            }
        })
        .collect();
    TimeHistogram::new(opts.bin_width, counts, opts.pre_herald_bins, te)
}
