//! Heralded-source photon statistics: probabilities `P_r` that `r` photons
//! are absorbed by the comb, given the pair-source statistics and the loss
//! budget of both arms.

pub mod monte_carlo;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{one_minus_pow, CompensatedSum, Real};

/// Series terms below this fraction of the running normalisation stop the sum.
pub const SERIES_RTOL: f64 = 1e-15;
/// Hard cap on the number of photon-number terms.
pub const MAX_TERMS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceStatistics {
    #[default]
    Thermal,
    Poisson,
}

/// `μⁿ / (μ+1)^{n+1}`.
pub fn thermal_weight<T: Real>(n: usize, mu: T) -> T {
    let n_t = T::from_count(n);
    (n_t * mu.ln() - (n_t + T::one()) * mu.ln_1p()).exp()
}

/// `e^{-μ} μⁿ / n!`.
pub fn poisson_weight<T: Real>(n: usize, mu: T) -> T {
    let mut w = (-mu).exp();
    for k in 1..=n {
        w *= mu / T::from_count(k);
    }
    w
}

/// Loss budget of the heralded single-photon source and memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel<T> {
    pub mu: T,
    pub eta_a: T,
    pub eta_b: T,
    pub eta_w: T,
    pub eta_t: T,
    #[serde(default)]
    pub statistics: SourceStatistics,
}

impl<T: Real> ChannelModel<T> {
    pub fn new(mu: T, eta_a: T, eta_b: T, eta_w: T, eta_t: T) -> Result<Self> {
        let ch = Self { mu, eta_a, eta_b, eta_w, eta_t, statistics: SourceStatistics::Thermal };
        ch.validate()?;
        Ok(ch)
    }

    pub fn with_statistics(mut self, statistics: SourceStatistics) -> Self {
        self.statistics = statistics;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > T::zero()) || !self.mu.is_finite() {
            return Err(Error::domain(format!("mean pair number must be positive, got {}", self.mu)));
        }
        for (name, eta) in
            [("eta_a", self.eta_a), ("eta_b", self.eta_b), ("eta_w", self.eta_w), ("eta_t", self.eta_t)]
        {
            if !(eta >= T::zero() && eta <= T::one()) {
                return Err(Error::domain(format!("{name} = {eta} is not a probability")));
            }
        }
        if self.eta_a == T::zero() {
            return Err(Error::domain("eta_a = 0: nothing is ever heralded"));
        }
        if self.absorbed_fraction() + self.loss_fraction() > T::one() + T::exact_tolerance() {
            return Err(Error::domain("absorbed and lost fractions exceed one"));
        }
        Ok(())
    }

    /// `η_b η_w`, the per-photon absorption probability.
    pub fn absorbed_fraction(&self) -> T {
        self.eta_b * self.eta_w
    }

    /// `Z² = η_b(1-η_w)(1-η_t) + (1-η_b)`, undetected loss.
    pub fn loss_fraction(&self) -> T {
        self.eta_b * (T::one() - self.eta_w) * (T::one() - self.eta_t) + (T::one() - self.eta_b)
    }

    fn weight(&self, n: usize) -> T {
        match self.statistics {
            SourceStatistics::Thermal => thermal_weight(n, self.mu),
            SourceStatistics::Poisson => poisson_weight(n, self.mu),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcitationProbabilities<T> {
    /// `p[r]` for `r = 0..=r_max`.
    pub p: Vec<T>,
    /// Probability of more than `r_max` absorbed photons.
    pub above_r_max: T,
    /// Bound on the relative mass dropped by truncating the photon-number sum.
    pub truncation_error: T,
    pub terms: usize,
}

impl<T: Real> ExcitationProbabilities<T> {
    pub fn p1(&self) -> T {
        self.p.get(1).copied().unwrap_or_else(T::zero)
    }

    pub fn p2(&self) -> T {
        self.p.get(2).copied().unwrap_or_else(T::zero)
    }
}

/// `P_r` for `r ≤ r_max`, conditioned on a herald in arm `a` and no click
/// behind the memory.
///
/// With heralded weights `h_n = p_n (1 - (1-η_a)^n)`, `x = η_b η_w` and `Z²`
/// the loss fraction,
/// `P_r = Σ_n h_n C(n,r) x^r Z^{2(n-r)} / Σ_n h_n (x + Z²)^n`.
pub fn excitation_probabilities<T: Real>(ch: &ChannelModel<T>, r_max: usize) -> Result<ExcitationProbabilities<T>> {
    ch.validate()?;
    let x = ch.absorbed_fraction();
    let z2 = ch.loss_fraction();
    let s = x + z2;
    let mut norm = CompensatedSum::new();
    let mut acc: Vec<CompensatedSum<T>> = (0..=r_max).map(|_| CompensatedSum::new()).collect();
    let mut above = CompensatedSum::new();
    let rtol = T::lit(SERIES_RTOL);

    let mut n = 1;
    let mut tail_ratio = T::zero();
    loop {
        let h = ch.weight(n) * (T::one() - one_minus_pow(ch.eta_a, n as i32));
        let sn = pow_usize(s, n);
        let term = h * sn;
        norm.add(term);
        // binomial split of the n photons into r absorbed and n-r lost
        let mut binom = T::one();
        for r in 0..=n {
            if r > 0 {
                binom = binom * T::from_count(n - r + 1) / T::from_count(r);
            }
            let t = h * binom * pow_usize(x, r) * pow_usize(z2, n - r);
            if r <= r_max {
                acc[r].add(t);
            } else {
                above.add(t);
            }
        }
        let next = ch.weight(n + 1) * s;
        let ratio = if ch.weight(n) > T::zero() { next / ch.weight(n) } else { T::zero() };
        if term <= rtol * norm.value() && ratio < T::one() {
            tail_ratio = ratio;
            break;
        }
        if term == T::zero() && n > 1 {
            break;
        }
        n += 1;
        if n > MAX_TERMS {
            return Err(Error::Numeric(format!("photon-number series did not converge in {MAX_TERMS} terms")));
        }
    }
    let total = norm.value();
    if !(total > T::zero()) {
        return Err(Error::Numeric("heralding probability underflowed".into()));
    }
    let last = ch.weight(n) * pow_usize(s, n);
    // geometric bound on the dropped tail (weights fall at least as fast as the last ratio)
    let truncation_error = last * tail_ratio / (T::one() - tail_ratio) / total;
    Ok(ExcitationProbabilities {
        p: acc.iter().map(|a| a.value() / total).collect(),
        above_r_max: above.value() / total,
        truncation_error,
        terms: n,
    })
}

fn pow_usize<T: Real>(base: T, exp: usize) -> T {
    match i32::try_from(exp) {
        Ok(e) => base.powi(e),
        Err(_) => base.powf(T::from_count(exp)),
    }
}

/// `μ ≈ 1/g²_ab(0)`, valid for strongly correlated pairs.
pub fn estimate_mu_from_g2<T: Real>(g2_ab: T) -> Result<T> {
    if !(g2_ab > T::lit(10.0)) {
        return Err(Error::domain(format!("g2_ab = {g2_ab} <= 10: the 1/g2 approximation needs g2 >> 1")));
    }
    Ok(g2_ab.recip())
}

/// Coincidence and singles rates of the pair source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct CountRates<T> {
    #[serde(rename = "C_ab")]
    pub c_ab: T,
    #[serde(rename = "S_a")]
    pub s_a: T,
    #[serde(rename = "S_b")]
    pub s_b: T,
    #[serde(default = "default_eta_db")]
    pub eta_db: T,
    pub tau_p: T,
}

fn default_eta_db<T: Real>() -> T {
    T::lit(0.60)
}

impl<T: Real> CountRates<T> {
    pub fn validate(&self) -> Result<()> {
        if [self.c_ab, self.s_a, self.s_b, self.tau_p].iter().any(|&v| !(v >= T::zero())) {
            return Err(Error::domain("count rates must be non-negative"));
        }
        if self.c_ab > self.s_a.min(self.s_b) {
            return Err(Error::domain("coincidence rate exceeds a singles rate"));
        }
        if !(self.eta_db > T::zero() && self.eta_db <= T::one()) {
            return Err(Error::domain("detector efficiency must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Accidental-normalised cross-correlation `C_ab τ_p / (S_a S_b)`.
    pub fn g2_cross(&self) -> Result<T> {
        self.validate()?;
        if self.s_a == T::zero() || self.s_b == T::zero() || self.tau_p == T::zero() {
            return Err(Error::domain("zero singles rate or coherence time"));
        }
        Ok(self.c_ab / (self.s_a * self.s_b * self.tau_p))
    }
}

/// `(η_a, η_b*) = (C_ab / S_b, C_ab / (S_a η_Db))`.
pub fn estimate_etas<T: Real>(rates: &CountRates<T>) -> Result<(T, T)> {
    rates.validate()?;
    if rates.s_a == T::zero() || rates.s_b == T::zero() {
        return Err(Error::domain("zero singles rate"));
    }
    Ok((rates.c_ab / rates.s_b, rates.c_ab / (rates.s_a * rates.eta_db)))
}

/// `η_w = 1 - e^{-d1/F}`.
pub fn write_efficiency<T: Real>(d1: T, finesse: T) -> Result<T> {
    if !(d1 >= T::zero()) || !(finesse >= T::one()) {
        return Err(Error::domain(format!("need d1 >= 0 and finesse >= 1, got d1 = {d1}, F = {finesse}")));
    }
    Ok(-(-d1 / finesse).exp_m1())
}

/// `g²(0) = p_joint / (p_1 p_2)`.
pub fn g2_from_probabilities<T: Real>(p_joint: T, p_1: T, p_2: T) -> Result<T> {
    if !(p_1 > T::zero()) || !(p_2 > T::zero()) {
        return Err(Error::domain("marginal detection probabilities must be positive"));
    }
    if !(p_joint >= T::zero()) {
        return Err(Error::domain("joint probability must be non-negative"));
    }
    Ok(p_joint / (p_1 * p_2))
}

/// Channel description as read from a config file.
///
/// `eta_b` may be given directly or as `eta_b_star * eta_ci`; `eta_w` may be
/// given directly or through `d1` and `finesse`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub mu: f64,
    #[serde(default)]
    pub sigma_mu: f64,
    pub eta_a: f64,
    pub eta_b: Option<f64>,
    pub eta_b_star: Option<f64>,
    pub eta_ci: Option<f64>,
    pub eta_w: Option<f64>,
    pub d1: Option<f64>,
    #[serde(default)]
    pub sigma_d1: f64,
    pub finesse: Option<f64>,
    pub eta_t: f64,
    #[serde(default)]
    pub stats_model: SourceStatistics,
}

/// `P₁`, `P₂` with first-order uncertainties from `μ` and `d1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhotonStatsReport {
    pub p1: f64,
    pub p2: f64,
    pub sigma_p1: f64,
    pub sigma_p2: f64,
    pub p: Vec<f64>,
    pub truncation_error: f64,
    pub channel: ChannelModel<f64>,
}

impl ChannelConfig {
    fn eta_b(&self) -> Result<f64> {
        match (self.eta_b, self.eta_b_star, self.eta_ci) {
            (Some(b), None, None) => Ok(b),
            (None, Some(star), Some(ci)) => Ok(star * ci),
            _ => Err(Error::domain("give either eta_b, or both eta_b_star and eta_ci")),
        }
    }

    fn eta_w_at(&self, d1: Option<f64>) -> Result<f64> {
        match (self.eta_w, d1, self.finesse) {
            (Some(w), None, None) => Ok(w),
            (None, Some(d1), Some(f)) => write_efficiency(d1, f),
            _ => Err(Error::domain("give either eta_w, or both d1 and finesse")),
        }
    }

    fn channel_at(&self, mu: f64, d1: Option<f64>) -> Result<ChannelModel<f64>> {
        Ok(ChannelModel::new(mu, self.eta_a, self.eta_b()?, self.eta_w_at(d1)?, self.eta_t)?
            .with_statistics(self.stats_model))
    }

    pub fn channel(&self) -> Result<ChannelModel<f64>> {
        self.channel_at(self.mu, self.d1)
    }

    /// Evaluates `P_r` up to `r_max` (at least 2) and propagates `sigma_mu`
    /// and `sigma_d1` with central differences.
    pub fn evaluate(&self, r_max: usize) -> Result<PhotonStatsReport> {
        let r_max = r_max.max(2);
        let channel = self.channel()?;
        let base = excitation_probabilities(&channel, r_max)?;
        let p12 = |mu: f64, d1: Option<f64>| -> Result<(f64, f64)> {
            let e = excitation_probabilities(&self.channel_at(mu, d1)?, 2)?;
            Ok((e.p1(), e.p2()))
        };
        let mut var = (0.0, 0.0);
        if self.sigma_mu > 0.0 {
            let h = 1e-4 * self.mu;
            let (a1, a2) = p12(self.mu + h, self.d1)?;
            let (b1, b2) = p12(self.mu - h, self.d1)?;
            var.0 += ((a1 - b1) / (2.0 * h) * self.sigma_mu).powi(2);
            var.1 += ((a2 - b2) / (2.0 * h) * self.sigma_mu).powi(2);
        }
        if let (Some(d1), true) = (self.d1, self.sigma_d1 > 0.0) {
            let h = 1e-4 * d1.max(1e-3);
            let (a1, a2) = p12(self.mu, Some(d1 + h))?;
            let (b1, b2) = p12(self.mu, Some((d1 - h).max(0.0)))?;
            let span = d1 + h - (d1 - h).max(0.0);
            var.0 += ((a1 - b1) / span * self.sigma_d1).powi(2);
            var.1 += ((a2 - b2) / span * self.sigma_d1).powi(2);
        }
        Ok(PhotonStatsReport {
            p1: base.p1(),
            p2: base.p2(),
            sigma_p1: var.0.sqrt(),
            sigma_p2: var.1.sqrt(),
            p: base.p.clone(),
            truncation_error: base.truncation_error,
            channel,
        })
    }
}
