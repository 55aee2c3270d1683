//! Binary modulation on conjugate-reciprocal zeros.
//!
//! A `K`-bit message picks, for each of `K` rays `theta_k`, a zero at radius
//! `R` (bit 1) or `1/R` (bit 0). The transmit block is the coefficient vector
//! of the monic polynomial with those zeros, scaled to energy `K + 1`.
//! Receivers either test each ray directly ([`decoders::dizet_decode`]) or
//! feed the received zeros to a small MLP ([`decoders::nn_decode`]). The
//! constellation `(R, theta)` and the MLP can be learned by gradient descent
//! ([`training`]) and compared by Monte-Carlo simulation ([`montecarlo`]).
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the
//! aliases below fix the common choices.

pub mod channel;
pub mod constellation;
pub mod decoders;
pub mod error;
pub mod montecarlo;
pub mod poly;
pub mod scalar;
pub mod training;

pub use constellation::{dizet_radius, encode, BitMessage};
pub use error::{Error, Result};
pub use scalar::Real;

pub type ComplexPoly64 = poly::ComplexPoly<f64>;
pub type ComplexPoly32 = poly::ComplexPoly<f32>;
pub type ZeroPattern64 = poly::ZeroPattern<f64>;
pub type Constellation64 = constellation::Constellation<f64>;
pub type Constellation32 = constellation::Constellation<f32>;
pub type ConstellationParams64 = constellation::ConstellationParams<f64>;
pub type MlpParams64 = decoders::MlpParams<f64>;
pub type MlpParams32 = decoders::MlpParams<f32>;
pub type Scheme64 = montecarlo::Scheme<f64>;
pub type Scheme32 = montecarlo::Scheme<f32>;
