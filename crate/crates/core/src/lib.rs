pub mod dicke;
pub mod depth_bound;
pub mod echo_analysis;
pub mod echo_sim;
pub mod error;
pub mod photon_stats;
pub mod scalar;
pub mod spectroscopy;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision aliases for the generic types.
pub type ToothAmplitudes64 = dicke::ToothAmplitudes<f64>;
pub type CombSpec64 = echo_sim::CombSpec<f64>;
pub type PhotonSpectrum64 = echo_sim::PhotonSpectrum<f64>;
pub type EmissionTrace64 = echo_sim::EmissionTrace<f64>;
pub type ChannelModel64 = photon_stats::ChannelModel<f64>;
pub type ExcitationProbabilities64 = photon_stats::ExcitationProbabilities<f64>;
pub type CountRates64 = photon_stats::CountRates<f64>;
pub type ExcitationBudget64 = depth_bound::ExcitationBudget<f64>;
pub type BoundProblem64 = depth_bound::BoundProblem<f64>;
pub type MaterialParams64 = spectroscopy::MaterialParams<f64>;

/// Single-precision aliases.
pub type ToothAmplitudes32 = dicke::ToothAmplitudes<f32>;
pub type CombSpec32 = echo_sim::CombSpec<f32>;
pub type PhotonSpectrum32 = echo_sim::PhotonSpectrum<f32>;
pub type EmissionTrace32 = echo_sim::EmissionTrace<f32>;
pub type ChannelModel32 = photon_stats::ChannelModel<f32>;
pub type ExcitationProbabilities32 = photon_stats::ExcitationProbabilities<f32>;
pub type MaterialParams32 = spectroscopy::MaterialParams<f32>;
