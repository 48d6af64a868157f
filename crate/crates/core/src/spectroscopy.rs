//! Number of atoms contributing to one comb tooth, estimated from the
//! integrated absorption and from the single-atom optical depth.
//!
//! Units: lengths in cm, areas in cm², frequencies and rates in Hz. Use the
//! helpers in [`units`] to convert.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub mod units {
    /// Speed of light in cm/s.
    pub const C_CM_PER_S: f64 = 2.997_924_58e10;

    pub fn mm_to_cm(mm: f64) -> f64 {
        mm * 0.1
    }

    pub fn um_to_cm(um: f64) -> f64 {
        um * 1e-4
    }

    pub fn mhz_to_hz(mhz: f64) -> f64 {
        mhz * 1e6
    }

    pub fn khz_to_hz(khz: f64) -> f64 {
        khz * 1e3
    }

    /// Optical frequency (Hz) of a vacuum wavelength in nm.
    pub fn wavelength_nm_to_hz(nm: f64) -> f64 {
        C_CM_PER_S / (nm * 1e-7)
    }

    /// `π r²` in cm² for a radius in µm.
    pub fn disc_area_um(radius_um: f64) -> f64 {
        std::f64::consts::PI * um_to_cm(radius_um).powi(2)
    }
}

/// Material and geometry of the absorbing crystal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams<T> {
    /// Dopant number density (cm⁻³).
    pub n_d: T,
    /// Refractive index.
    pub n: T,
    /// Homogeneous linewidth (Hz).
    pub gamma_h: T,
    /// Spontaneous emission rate (Hz).
    pub gamma_s: T,
    /// `∫α(σ) dσ` over the inhomogeneous line (cm⁻²).
    pub alpha_integral: T,
    /// Crystal length (cm).
    pub length: T,
    /// Beam cross-section (cm²).
    pub area: T,
    /// Transition frequency (Hz).
    pub nu: T,
}

impl<T: Real> MaterialParams<T> {
    /// Tm:LiNbO₃ at 795 nm, 6.8 mm crystal, `A = π (80 µm)²`.
    pub fn tm_linbo3() -> Self {
        Self {
            n_d: T::lit(1.89e19),
            n: T::lit(2.256),
            gamma_h: T::lit(units::khz_to_hz(10.0)),
            gamma_s: T::lit(units::khz_to_hz(2.6)),
            alpha_integral: T::lit(497.0),
            length: T::lit(units::mm_to_cm(6.8)),
            area: T::lit(units::disc_area_um(80.0)),
            nu: T::lit(units::wavelength_nm_to_hz(795.0)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("n_d", self.n_d),
            ("n", self.n),
            ("gamma_h", self.gamma_h),
            ("gamma_s", self.gamma_s),
            ("alpha_integral", self.alpha_integral),
            ("length", self.length),
            ("area", self.area),
            ("nu", self.nu),
        ];
        if let Some((name, v)) = fields.iter().find(|(_, v)| !(*v > T::zero()) || !v.is_finite()) {
            return Err(Error::domain(format!("{name} = {v} must be positive")));
        }
        if self.gamma_h < self.gamma_s {
            return Err(Error::domain("homogeneous linewidth below the spontaneous emission rate"));
        }
        Ok(())
    }

    /// Wavenumber `σ = ν/c` (cm⁻¹).
    pub fn wavenumber(&self) -> T {
        self.nu / T::lit(units::C_CM_PER_S)
    }

    /// `Θ_i = L c ∫α(σ) dσ` (Hz).
    pub fn integrated_absorption(&self) -> T {
        self.length * T::lit(units::C_CM_PER_S) * self.alpha_integral
    }

    /// Optical depth of a single atom of linewidth `Γ_h`:
    /// `(n²+2)² / (72π n A σ²) · γ_s/Γ_h`.
    pub fn single_atom_depth(&self) -> T {
        let local = (self.n * self.n + T::lit(2.0)).powi(2);
        let sigma = self.wavenumber();
        local / (T::lit(72.0) * T::PI() * self.n * self.area * sigma * sigma) * (self.gamma_s / self.gamma_h)
    }
}

/// Optional overrides on top of a named preset, as read from a material file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub preset: Option<String>,
    pub n_d: Option<f64>,
    pub n: Option<f64>,
    pub gamma_h: Option<f64>,
    pub gamma_s: Option<f64>,
    pub alpha_integral: Option<f64>,
    pub length: Option<f64>,
    pub area: Option<f64>,
    pub nu: Option<f64>,
    /// Integrated tooth absorption `Θ_t` (Hz).
    pub theta_t: Option<f64>,
}

impl MaterialConfig {
    pub fn material(&self) -> Result<MaterialParams<f64>> {
        let base = match self.preset.as_deref() {
            None | Some("tm-linbo3") => MaterialParams::tm_linbo3(),
            Some(other) => return Err(Error::domain(format!("unknown material preset {other:?}"))),
        };
        let m = MaterialParams {
            n_d: self.n_d.unwrap_or(base.n_d),
            n: self.n.unwrap_or(base.n),
            gamma_h: self.gamma_h.unwrap_or(base.gamma_h),
            gamma_s: self.gamma_s.unwrap_or(base.gamma_s),
            alpha_integral: self.alpha_integral.unwrap_or(base.alpha_integral),
            length: self.length.unwrap_or(base.length),
            area: self.area.unwrap_or(base.area),
            nu: self.nu.unwrap_or(base.nu),
        };
        m.validate()?;
        Ok(m)
    }
}

/// `N_t = n_d L A Θ_t / Θ_i`.
pub fn atoms_per_tooth_absorption<T: Real>(mat: &MaterialParams<T>, theta_t: T) -> Result<T> {
    atoms_per_tooth_absorption_with(mat, theta_t, mat.integrated_absorption())
}

/// As [`atoms_per_tooth_absorption`] with an explicit `Θ_i`.
pub fn atoms_per_tooth_absorption_with<T: Real>(mat: &MaterialParams<T>, theta_t: T, theta_i: T) -> Result<T> {
    mat.validate()?;
    if !(theta_i > T::zero()) || !(theta_t >= T::zero()) {
        return Err(Error::domain("need theta_i > 0 and theta_t >= 0"));
    }
    Ok(mat.n_d * mat.length * mat.area * theta_t / theta_i)
}

/// `N_t = Θ_t / (Γ_h d_atom)`.
pub fn atoms_per_tooth_singleion<T: Real>(mat: &MaterialParams<T>, theta_t: T) -> Result<T> {
    mat.validate()?;
    if !(theta_t >= T::zero()) {
        return Err(Error::domain("theta_t must be non-negative"));
    }
    Ok(theta_t / (mat.gamma_h * mat.single_atom_depth()))
}

/// Comb finesse from tooth spacing and width, both in Hz.
pub fn finesse<T: Real>(spacing_hz: T, fwhm_hz: T) -> Result<T> {
    if !(spacing_hz > T::zero()) || !(fwhm_hz > T::zero()) {
        return Err(Error::domain("spacing and linewidth must be positive"));
    }
    Ok(spacing_hz / fwhm_hz)
}

/// Effective optical depth `d1 / F` of the comb.
pub fn effective_depth<T: Real>(d1: T, finesse: T) -> Result<T> {
    if !(d1 >= T::zero()) || !(finesse > T::zero()) {
        return Err(Error::domain("need d1 >= 0 and F > 0"));
    }
    Ok(d1 / finesse)
}
