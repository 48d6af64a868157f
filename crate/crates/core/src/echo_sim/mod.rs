//! Time-domain model of comb absorption and collective re-emission.
//!
//! A photon with spectral density `S(ν)` is mapped onto tooth amplitudes,
//! each tooth then rotates at `e^{i jΔ t}` and the emission probability is
//! `P(t) ∝ D(t)² |Σ_j c_j e^{i jΔ t}|²`, where `D(t)` is the Fourier
//! transform of the tooth lineshape. Only ratios of `P` are ever reported.

mod trace;

pub use trace::{fit_comb_trace, parse_comb_trace, CombTrace};

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dicke::ToothAmplitudes;
use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Real};

/// Minimum quadrature samples per comb period.
pub const SAMPLES_PER_PERIOD: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToothShape {
    #[default]
    Gaussian,
    Lorentzian,
    Square,
}

/// Spectral description of a comb.
#[derive(Debug, Clone, PartialEq)]
pub struct CombSpec<T> {
    teeth: usize,
    /// Angular tooth spacing Δ (rad/s).
    spacing: T,
    /// Tooth FWHM γ (Hz). Zero is the ideal, non-dephasing comb.
    linewidth: T,
    d1: T,
    d0: T,
    bandwidth: T,
    tooth_shape: ToothShape,
    depth_jitter: Option<Vec<T>>,
}

impl<T: Real> CombSpec<T> {
    /// Comb of total bandwidth `B` (Hz) and angular spacing `Δ`; `N = round(2πB/Δ)`.
    pub fn new(bandwidth: T, spacing: T, linewidth: T, d1: T, d0: T, tooth_shape: ToothShape) -> Result<Self> {
        if !(bandwidth > T::zero()) || !(spacing > T::zero()) {
            return Err(Error::domain("bandwidth and tooth spacing must be positive"));
        }
        let teeth = (bandwidth * T::TAU() / spacing).round().to_usize().unwrap_or(0);
        Self::checked(teeth, spacing, linewidth, d1, d0, bandwidth, tooth_shape)
    }

    /// Comb with `teeth` teeth spread over `bandwidth` Hz.
    pub fn with_teeth(
        teeth: usize,
        bandwidth: T,
        linewidth: T,
        d1: T,
        d0: T,
        tooth_shape: ToothShape,
    ) -> Result<Self> {
        if teeth == 0 || !(bandwidth > T::zero()) {
            return Err(Error::domain("comb needs at least one tooth and positive bandwidth"));
        }
        let spacing = T::TAU() * bandwidth / T::from_count(teeth);
        Self::checked(teeth, spacing, linewidth, d1, d0, bandwidth, tooth_shape)
    }

    /// Infinitely narrow teeth with unit peak depth.
    pub fn ideal(teeth: usize, spacing: T) -> Result<Self> {
        let bandwidth = T::from_count(teeth) * spacing / T::TAU();
        Self::checked(teeth, spacing, T::zero(), T::one(), T::zero(), bandwidth, ToothShape::Gaussian)
    }

    fn checked(
        teeth: usize,
        spacing: T,
        linewidth: T,
        d1: T,
        d0: T,
        bandwidth: T,
        tooth_shape: ToothShape,
    ) -> Result<Self> {
        if teeth == 0 {
            return Err(Error::domain("comb has no teeth"));
        }
        if !(linewidth >= T::zero()) || !(d1 >= T::zero()) || !(d0 >= T::zero()) {
            return Err(Error::domain("linewidth and optical depths must be non-negative"));
        }
        let comb = Self { teeth, spacing, linewidth, d1, d0, bandwidth, tooth_shape, depth_jitter: None };
        if comb.finesse() <= T::one() {
            return Err(Error::domain(format!("finesse {} <= 1: teeth are not resolved", comb.finesse())));
        }
        Ok(comb)
    }

    /// Per-tooth multiplicative factors on `d1` modelling imperfect comb preparation.
    pub fn with_depth_jitter(mut self, factors: Vec<T>) -> Result<Self> {
        if factors.len() != self.teeth || factors.iter().any(|&f| !(f >= T::zero())) {
            return Err(Error::domain("depth jitter needs one non-negative factor per tooth"));
        }
        self.depth_jitter = Some(factors);
        Ok(self)
    }

    pub fn with_shape(mut self, shape: ToothShape) -> Self {
        self.tooth_shape = shape;
        self
    }

    pub fn teeth(&self) -> usize {
        self.teeth
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn linewidth(&self) -> T {
        self.linewidth
    }

    pub fn d1(&self) -> T {
        self.d1
    }

    pub fn d0(&self) -> T {
        self.d0
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    pub fn tooth_shape(&self) -> ToothShape {
        self.tooth_shape
    }

    /// `F = Δ / (2πγ)`; infinite for an ideal comb.
    pub fn finesse(&self) -> T {
        if self.linewidth == T::zero() {
            T::infinity()
        } else {
            self.spacing / (T::TAU() * self.linewidth)
        }
    }

    /// First echo time `t_e = 2π/Δ`.
    pub fn storage_time(&self) -> T {
        T::TAU() / self.spacing
    }

    /// Centre of tooth `j` relative to the comb centre (Hz).
    pub fn tooth_offset(&self, j: usize) -> T {
        let centre = T::from_count(self.teeth - 1) / T::lit(2.0);
        (T::from_count(j) - centre) * self.spacing / T::TAU()
    }

    /// Amplitude dephasing envelope `D(t)`, the Fourier transform of one
    /// tooth's lineshape normalised to `D(0) = 1`.
    pub fn envelope(&self, t: T) -> T {
        let x = T::PI() * self.linewidth * t.abs();
        if x == T::zero() {
            return T::one();
        }
        match self.tooth_shape {
            ToothShape::Gaussian => (-(x * x) / (T::lit(4.0) * T::LN_2())).exp(),
            ToothShape::Lorentzian => (-x).exp(),
            ToothShape::Square => x.sin() / x,
        }
    }

    /// Absorption probability of tooth `j`, `1 - exp(-d1_j / F)`. For an ideal
    /// comb the limit `F → ∞` is kept proportional to `d1_j`.
    fn tooth_absorption(&self, j: usize) -> T {
        let depth = self.d1 * self.depth_jitter.as_ref().map_or(T::one(), |f| f[j]);
        let finesse = self.finesse();
        if finesse.is_infinite() {
            depth
        } else {
            T::one() - (-depth / finesse).exp()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumShape {
    Lorentzian,
    Flat,
}

/// Spectral density of the incoming photon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonSpectrum<T> {
    pub shape: SpectrumShape,
    pub fwhm: T,
    /// Offset of the photon centre from the comb centre (Hz).
    pub center_offset: T,
}

impl<T: Real> PhotonSpectrum<T> {
    pub fn new(shape: SpectrumShape, fwhm: T, center_offset: T) -> Result<Self> {
        if !(fwhm > T::zero()) {
            return Err(Error::domain("photon FWHM must be positive"));
        }
        Ok(Self { shape, fwhm, center_offset })
    }

    pub fn flat() -> Self {
        Self { shape: SpectrumShape::Flat, fwhm: T::infinity(), center_offset: T::zero() }
    }

    pub fn lorentzian(fwhm: T) -> Result<Self> {
        Self::new(SpectrumShape::Lorentzian, fwhm, T::zero())
    }

    /// Relative density at offset `nu` (Hz), unity at the peak.
    pub fn density(&self, nu: T) -> T {
        match self.shape {
            SpectrumShape::Flat => T::one(),
            SpectrumShape::Lorentzian => {
                let x = (nu - self.center_offset) / (self.fwhm / T::lit(2.0));
                T::one() / (T::one() + x * x)
            }
        }
    }
}

/// Relative emission probability sampled on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionTrace<T> {
    pub times: Vec<T>,
    pub p: Vec<T>,
    pub t_echo: T,
}

/// Tooth amplitudes after absorbing `photon`: `c_j ∝ √(a_j S(ν_j))`, normalised.
pub fn absorb<T: Real>(comb: &CombSpec<T>, photon: &PhotonSpectrum<T>) -> Result<ToothAmplitudes<T>> {
    let weights: Vec<T> = (0..comb.teeth)
        .map(|j| comb.tooth_absorption(j) * photon.density(comb.tooth_offset(j)))
        .collect();
    let total = compensated_sum(weights.iter().copied());
    if !(total > T::zero()) {
        return Err(Error::domain("comb absorbs nothing (d1 = 0 or photon outside the comb)"));
    }
    ToothAmplitudes::new(weights.into_iter().map(|w| Complex::new((w / total).sqrt(), T::zero())).collect())
}

fn interference<T: Real>(c: &[Complex<T>], spacing: T, t: T) -> T {
    // Horner in z = e^{iΔt}
    let z = Complex::from_polar(T::one(), spacing * t);
    c.iter().rev().fold(Complex::new(T::zero(), T::zero()), |acc, &cj| acc * z + cj).norm_sqr()
}

/// `P(t)` on `t_grid` (seconds, ascending), up to a constant factor.
pub fn emission_trace<T: Real>(c: &ToothAmplitudes<T>, comb: &CombSpec<T>, t_grid: &[T]) -> Result<EmissionTrace<T>> {
    if c.len() != comb.teeth {
        return Err(Error::domain(format!("{} amplitudes for a comb of {} teeth", c.len(), comb.teeth)));
    }
    if t_grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::domain("time grid must be sorted ascending"));
    }
    let p = t_grid
        .iter()
        .map(|&t| {
            let d = comb.envelope(t);
            d * d * interference(c.as_slice(), comb.spacing, t)
        })
        .collect();
    Ok(EmissionTrace { times: t_grid.to_vec(), p, t_echo: comb.storage_time() })
}

/// Echo contrast: `P(2π/Δ)` over the mean of `P` on `[π/Δ, 3π/Δ]`
/// (trapezoid rule, at least [`SAMPLES_PER_PERIOD`] samples).
pub fn simulated_contrast<T: Real>(c: &ToothAmplitudes<T>, comb: &CombSpec<T>) -> Result<T> {
    let samples = SAMPLES_PER_PERIOD.max(8 * comb.teeth);
    simulated_contrast_with_samples(c, comb, samples)
}

pub fn simulated_contrast_with_samples<T: Real>(c: &ToothAmplitudes<T>, comb: &CombSpec<T>, samples: usize) -> Result<T> {
    if c.len() != comb.teeth {
        return Err(Error::domain(format!("{} amplitudes for a comb of {} teeth", c.len(), comb.teeth)));
    }
    let samples = samples.max(2);
    let period = comb.storage_time();
    let start = period / T::lit(2.0);
    let h = period / T::from_count(samples);
    let p = |t: T| {
        let d = comb.envelope(t);
        d * d * interference(c.as_slice(), comb.spacing, t)
    };
    let mut acc = crate::scalar::CompensatedSum::new();
    for i in 0..=samples {
        let w = if i == 0 || i == samples { T::lit(0.5) } else { T::one() };
        acc.add(w * p(start + h * T::from_count(i)));
    }
    let mean = acc.value() / T::from_count(samples);
    if !(mean > T::zero()) {
        return Err(Error::domain("period-averaged emission vanishes"));
    }
    Ok(p(period) / mean)
}

/// Row of an `R` versus tooth-count sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContrastRow<T> {
    pub teeth: usize,
    pub contrast: T,
}

/// Contrast for each comb illuminated by `photon`, sorted by tooth count.
pub fn sweep_r_vs_n<T: Real>(combs: &[CombSpec<T>], photon: &PhotonSpectrum<T>) -> Result<Vec<ContrastRow<T>>> {
    let mut rows = combs
        .par_iter()
        .map(|comb| {
            let c = absorb(comb, photon)?;
            Ok(ContrastRow { teeth: comb.teeth, contrast: simulated_contrast(&c, comb)? })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by_key(|r| r.teeth);
    Ok(rows)
}
