//! Collective dipole algebra for a comb of tooth-qubits.
//!
//! Each tooth is a two-level system with `|0⟩` (no excitation) and `|1⟩`
//! (one excitation shared by the tooth's atoms). Teeth are indexed from
//! `j = 0` with detuning `j·Δ` relative to the lowest tooth. The production
//! path works in the `N`-dimensional single-excitation sector; the full
//! `2^M` space is only built for small oracle checks.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Real};

/// Largest tooth count for which the dense `2^M` operator is built.
pub const MAX_DENSE_TEETH: usize = 14;

/// Number of teeth in a W block (entanglement depth candidate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DickeIndex(usize);

impl DickeIndex {
    pub fn new(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("Dicke index must be at least 1"));
        }
        Ok(Self(m))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// Single-excitation amplitudes `c_j` over the teeth.
///
/// `Σ|c_j|² ≤ 1`; the remainder is vacuum weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ToothAmplitudes<T> {
    amps: Vec<Complex<T>>,
}

impl<T: Real> ToothAmplitudes<T> {
    pub fn new(amps: Vec<Complex<T>>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::domain("at least one tooth is required"));
        }
        let norm = compensated_sum(amps.iter().map(|c| c.norm_sqr()));
        if !norm.is_finite() || norm > T::one() + T::exact_tolerance() {
            return Err(Error::domain(format!("excitation weight {norm} exceeds 1")));
        }
        Ok(Self { amps })
    }

    pub fn from_real(amps: &[T]) -> Result<Self> {
        Self::new(amps.iter().map(|&a| Complex::new(a, T::zero())).collect())
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.amps
    }

    /// Total excitation weight `Σ|c_j|²`.
    pub fn weight(&self) -> T {
        compensated_sum(self.amps.iter().map(|c| c.norm_sqr()))
    }

    /// Number of teeth with a nonzero amplitude.
    pub fn support(&self) -> usize {
        self.amps.iter().filter(|c| c.norm_sqr() > T::zero()).count()
    }
}

/// The W state `|W⟩_M`: equal amplitude `1/√M` on each of `M` teeth.
pub fn w_state<T: Real>(m: DickeIndex) -> ToothAmplitudes<T> {
    let a = T::one() / T::from_count(m.get()).sqrt();
    ToothAmplitudes { amps: vec![Complex::new(a, T::zero()); m.get()] }
}

/// Echo contrast of a single-excitation state, `|Σ c_j|² / Σ|c_j|²`.
pub fn echo_contrast_single_excitation<T: Real>(c: &ToothAmplitudes<T>) -> Result<T> {
    let weight = c.weight();
    if weight <= T::zero() {
        return Err(Error::domain("no excitation: all amplitudes vanish"));
    }
    let sum = c.amps.iter().fold(Complex::new(T::zero(), T::zero()), |acc, &x| acc + x);
    Ok(sum.norm_sqr() / weight)
}

/// Contrast after each tooth acquires phase `φ_j`: `|Σ c_j e^{iφ_j}|² / Σ|c_j|²`.
pub fn dephased_contrast<T: Real>(c: &ToothAmplitudes<T>, phases: &[T]) -> Result<T> {
    if phases.len() != c.len() {
        return Err(Error::domain(format!(
            "phase vector has length {}, expected {}",
            phases.len(),
            c.len()
        )));
    }
    let weight = c.weight();
    if weight <= T::zero() {
        return Err(Error::domain("no excitation: all amplitudes vanish"));
    }
    let sum = c
        .amps
        .iter()
        .zip(phases)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (&x, &phi)| acc + x * Complex::from_polar(T::one(), phi));
    Ok(sum.norm_sqr() / weight)
}

/// Dense matrix of `S₊S₋` in the computational basis of `M` teeth.
///
/// Basis index bit `j` set means tooth `j` is excited. The matrix is real,
/// symmetric and positive semidefinite; diagonal entries count excitations and
/// each off-diagonal one moves a single excitation between two teeth.
pub fn splus_sminus_matrix<T: Real>(m: DickeIndex) -> Result<DMatrix<Complex<T>>> {
    let m = m.get();
    if m > MAX_DENSE_TEETH {
        return Err(Error::Capacity { requested: m, limit: MAX_DENSE_TEETH });
    }
    let dim = 1usize << m;
    let one = Complex::new(T::one(), T::zero());
    let mut out = DMatrix::from_element(dim, dim, Complex::new(T::zero(), T::zero()));
    // <y|S+ S-|x> = #{(l, j) : y = x - e_l + e_j}
    for x in 0..dim {
        for l in (0..m).filter(|&l| x >> l & 1 == 1) {
            let z = x ^ (1 << l);
            for j in (0..m).filter(|&j| z >> j & 1 == 0) {
                let y = z | (1 << j);
                out[(y, x)] += one;
            }
        }
    }
    Ok(out)
}

/// Basis indices with exactly `r` excitations among `m` teeth, ascending.
pub fn sector_basis(m: usize, r: u32) -> Vec<usize> {
    (0..1usize << m).filter(|x| x.count_ones() == r).collect()
}

/// Restriction of a full-space operator to the `r`-excitation sector.
pub fn restrict_to_sector<T: Real>(op: &DMatrix<Complex<T>>, m: usize, r: u32) -> DMatrix<Complex<T>> {
    let basis = sector_basis(m, r);
    DMatrix::from_fn(basis.len(), basis.len(), |a, b| op[(basis[a], basis[b])])
}

/// Pure state of a few teeth over the full `2^M` computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallSystemState<T> {
    teeth: usize,
    amps: Vec<Complex<T>>,
}

impl<T: Real> SmallSystemState<T> {
    pub fn new(teeth: usize, amps: Vec<Complex<T>>) -> Result<Self> {
        if teeth > 24 || amps.len() != 1usize << teeth {
            return Err(Error::domain(format!(
                "state of {teeth} teeth needs {} amplitudes, got {}",
                1usize.checked_shl(teeth as u32).unwrap_or(0),
                amps.len()
            )));
        }
        let norm = compensated_sum(amps.iter().map(|c| c.norm_sqr()));
        let tol = T::lit(1e-12).max(T::exact_tolerance());
        if (norm - T::one()).abs() > tol {
            return Err(Error::domain(format!("state norm {norm} is not 1")));
        }
        Ok(Self { teeth, amps })
    }

    /// `|0⟩^{⊗n}`.
    pub fn vacuum(teeth: usize) -> Self {
        let mut amps = vec![Complex::new(T::zero(), T::zero()); 1 << teeth];
        amps[0] = Complex::new(T::one(), T::zero());
        Self { teeth, amps }
    }

    /// `α|0⟩^{⊗M} + β|W⟩_M` with `α = √(1-β²)`, real non-negative amplitudes.
    pub fn vacuum_plus_w(teeth: usize, beta_sq: T) -> Result<Self> {
        if teeth == 0 {
            return Err(Error::domain("block needs at least one tooth"));
        }
        if !(T::zero()..=T::one()).contains(&beta_sq) {
            return Err(Error::domain(format!("beta^2 = {beta_sq} outside [0, 1]")));
        }
        let mut state = Self::vacuum(teeth);
        state.amps[0] = Complex::new((T::one() - beta_sq).sqrt(), T::zero());
        let w = (beta_sq / T::from_count(teeth)).sqrt();
        for j in 0..teeth {
            state.amps[1 << j] = Complex::new(w, T::zero());
        }
        Ok(state)
    }

    /// Tensor product; `self` occupies the low teeth indices.
    pub fn tensor(&self, other: &Self) -> Self {
        let teeth = self.teeth + other.teeth;
        let mut amps = vec![Complex::new(T::zero(), T::zero()); 1 << teeth];
        for (hi, &b) in other.amps.iter().enumerate() {
            if b.norm_sqr() == T::zero() {
                continue;
            }
            for (lo, &a) in self.amps.iter().enumerate() {
                amps[lo | hi << self.teeth] = a * b;
            }
        }
        Self { teeth, amps }
    }

    pub fn teeth(&self) -> usize {
        self.teeth
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    /// Probability of exactly `r` excitations.
    pub fn sector_weight(&self, r: u32) -> T {
        compensated_sum(
            self.amps.iter().enumerate().filter(|(x, _)| x.count_ones() == r).map(|(_, c)| c.norm_sqr()),
        )
    }

    /// Unnormalised projection onto the `r`-excitation sector.
    pub fn project_sector(&self, r: u32) -> Vec<Complex<T>> {
        self.amps
            .iter()
            .enumerate()
            .map(|(x, &c)| if x.count_ones() == r { c } else { Complex::new(T::zero(), T::zero()) })
            .collect()
    }

    /// Single-excitation amplitudes `c_j = ⟨0…1_j…0|ψ⟩`.
    pub fn single_excitation_amplitudes(&self) -> Vec<Complex<T>> {
        (0..self.teeth).map(|j| self.amps[1 << j]).collect()
    }
}

/// `S₋ψ` for an arbitrary (unnormalised) vector over `teeth` qubits.
pub fn apply_lowering<T: Real>(teeth: usize, psi: &[Complex<T>]) -> Vec<Complex<T>> {
    let mut out = vec![Complex::new(T::zero(), T::zero()); psi.len()];
    for (x, &c) in psi.iter().enumerate() {
        if c.norm_sqr() == T::zero() {
            continue;
        }
        for l in (0..teeth).filter(|&l| x >> l & 1 == 1) {
            out[x ^ (1 << l)] += c;
        }
    }
    out
}

/// `⟨ψ|S₊S₋|ψ⟩ = ‖S₋ψ‖²` for an unnormalised vector.
pub fn splus_sminus_expectation<T: Real>(teeth: usize, psi: &[Complex<T>]) -> T {
    compensated_sum(apply_lowering(teeth, psi).iter().map(|c| c.norm_sqr()))
}
