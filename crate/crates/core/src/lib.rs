//! Asymptotic secret key rates for discrete-modulated continuous-variable QKD.
//!
//! A constellation of coherent states is purified in a truncated Fock basis,
//! split on a beamsplitter into modes C and B₀, sent through an entangling
//! cloner, and the adversary's information is bounded by the Gaussian Holevo
//! quantity maximized over the unknown A–B covariance block.

pub mod channel;
pub mod constellation;
pub mod error;
pub mod fock;
pub mod keyrate;
pub mod source;
pub mod symplectic;

pub use channel::{apply_channel, distance_to_transmittance, ChannelParams, NoiseConvention, PartialCm, Quadrature};
pub use constellation::{calibrate_r, constellation_moments, load_constellation, qam_constellation, Constellation, ConstellationDoc};
pub use error::{Error, Result};
pub use keyrate::{key_rate, Detection, KeyRatePoint, Numerics, Protocol, RateModel};
pub use source::{build_purification, split_on_beamsplitter, PurifiedSource, SourceOptions, ThreeModeSource};
pub use symplectic::{CovarianceMatrix, KappaBlock, Measurement};
