//! Photon-by-photon simulation of the heralding and loss cascade, used as an
//! independent check of [`excitation_probabilities`](super::excitation_probabilities).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;

use super::{ChannelModel, SourceStatistics};
use crate::error::{Error, Result};

/// Shards are fixed so results do not depend on the thread count.
const SHARDS: u64 = 32;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ChannelCounts {
    /// Pair-emission events with at least one pair.
    pub trials: u64,
    pub heralded: u64,
    /// Heralded events with no click behind the memory.
    pub accepted: u64,
    /// `absorbed[r]`: accepted events with exactly `r` absorbed photons.
    pub absorbed: Vec<u64>,
}

impl ChannelCounts {
    fn merge(mut self, other: Self) -> Self {
        self.trials += other.trials;
        self.heralded += other.heralded;
        self.accepted += other.accepted;
        if self.absorbed.len() < other.absorbed.len() {
            self.absorbed.resize(other.absorbed.len(), 0);
        }
        for (a, b) in self.absorbed.iter_mut().zip(other.absorbed) {
            *a += b;
        }
        self
    }

    /// Estimate of `P_r` and its binomial standard error.
    pub fn estimate(&self, r: usize) -> (f64, f64) {
        let n = self.accepted as f64;
        let k = self.absorbed.get(r).copied().unwrap_or(0) as f64;
        let p = k / n;
        (p, (p * (1.0 - p) / n).sqrt())
    }
}

/// Draws `trials` emission events with at least one pair (vacuum never
/// heralds), heralds each pair with probability `η_a`, and sends every
/// `b` photon through absorption (`η_b η_w`), transmission to the detector
/// (`η_b (1-η_w) η_t`, which vetoes the event) or loss.
pub fn simulate_channel(ch: &ChannelModel<f64>, trials: u64, seed: u64) -> Result<ChannelCounts> {
    ch.validate()?;
    let absorb = ch.absorbed_fraction();
    let click = absorb + ch.eta_b * (1.0 - ch.eta_w) * ch.eta_t;
    let geometric = Geometric::new(1.0 / (1.0 + ch.mu)).map_err(|e| Error::Numeric(e.to_string()))?;
    let no_pair = (-ch.mu).exp();
    let counts = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard);
            let share = trials / SHARDS + u64::from(shard < trials % SHARDS);
            let mut out = ChannelCounts { trials: share, absorbed: vec![0; 4], ..Default::default() };
            for _ in 0..share {
                let n = match ch.statistics {
                    SourceStatistics::Thermal => 1 + geometric.sample(&mut rng),
                    SourceStatistics::Poisson => truncated_poisson(&mut rng, ch.mu, no_pair),
                };
                if !(0..n).any(|_| rng.random::<f64>() < ch.eta_a) {
                    continue;
                }
                out.heralded += 1;
                let mut absorbed = 0usize;
                let mut vetoed = false;
                for _ in 0..n {
                    let u = rng.random::<f64>();
                    if u < absorb {
                        absorbed += 1;
                    } else if u < click {
                        vetoed = true;
                        break;
                    }
                }
                if vetoed {
                    continue;
                }
                out.accepted += 1;
                if absorbed >= out.absorbed.len() {
                    out.absorbed.resize(absorbed + 1, 0);
                }
                out.absorbed[absorbed] += 1;
            }
            out
        })
        .reduce(ChannelCounts::default, ChannelCounts::merge);
    if counts.accepted == 0 {
        return Err(Error::Numeric("no accepted events; increase the trial count".into()));
    }
    Ok(counts)
}

/// Poisson variate conditioned on `n >= 1`, by inverse CDF.
fn truncated_poisson<R: Rng>(rng: &mut R, mu: f64, no_pair: f64) -> u64 {
    let u = rng.random::<f64>() * (1.0 - no_pair);
    let mut n = 1u64;
    let mut pmf = no_pair * mu;
    let mut cdf = pmf;
    while cdf < u && n < 10_000 {
        n += 1;
        pmf *= mu / n as f64;
        cdf += pmf;
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photon_stats::excitation_probabilities;

    #[test]
    fn agrees_with_analytic_model() {
        let ch = ChannelModel::new(5e-3, 0.3, 0.7, 0.6, 0.4).unwrap();
        let mc = simulate_channel(&ch, 2_000_000, 11).unwrap();
        let exact = excitation_probabilities(&ch, 2).unwrap();
        for r in 1..=2 {
            let (p, se) = mc.estimate(r);
            assert!((p - exact.p[r]).abs() < 4.0 * se, "r = {r}: {p} ± {se} vs {}", exact.p[r]);
        }
    }

    #[test]
    fn poisson_source_agrees() {
        let ch = ChannelModel::new(2e-2, 0.5, 0.8, 0.7, 0.2).unwrap().with_statistics(SourceStatistics::Poisson);
        let mc = simulate_channel(&ch, 1_000_000, 3).unwrap();
        let exact = excitation_probabilities(&ch, 2).unwrap();
        for r in 1..=2 {
            let (p, se) = mc.estimate(r);
            assert!((p - exact.p[r]).abs() < 4.0 * se, "r = {r}: {p} ± {se} vs {}", exact.p[r]);
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        let ch = ChannelModel::new(1e-2, 0.3, 0.7, 0.6, 0.4).unwrap();
        assert_eq!(simulate_channel(&ch, 50_000, 5).unwrap(), simulate_channel(&ch, 50_000, 5).unwrap());
        assert_ne!(simulate_channel(&ch, 50_000, 5).unwrap(), simulate_channel(&ch, 50_000, 6).unwrap());
    }

    #[test]
    fn truncated_poisson_never_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mu: f64 = 0.5;
        let draws: Vec<u64> = (0..20_000).map(|_| truncated_poisson(&mut rng, mu, (-mu).exp())).collect();
        assert!(draws.iter().all(|&n| n >= 1));
        let mean = draws.iter().sum::<u64>() as f64 / draws.len() as f64;
        let expected = mu / (1.0 - (-mu).exp());
        assert!((mean - expected).abs() < 0.02);
    }
}
