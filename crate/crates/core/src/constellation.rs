//! Zero constellations and the bit-to-zero mapping.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::poly::{normalize_energy, poly_from_zeros, ComplexPoly, ZeroPattern};
use crate::scalar::{softplus, softplus_inv, Real};

/// Canonical radius `sqrt(1 + 2 lambda sin(pi / K))` that trades radial against
/// angular zero separation.
pub fn dizet_radius(k: usize, lambda: f64) -> Result<f64> {
    if k < 2 {
        return Err(invalid(format!("dizet_radius needs K >= 2, got {k}")));
    }
    if !(lambda > 0.0) {
        return Err(invalid(format!("dizet_radius needs lambda > 0, got {lambda}")));
    }
    Ok((1.0 + 2.0 * lambda * (std::f64::consts::PI / k as f64).sin()).sqrt())
}

/// A K-bit message.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitMessage(Vec<u8>);

impl BitMessage {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(invalid("bits must be 0 or 1"));
        }
        Ok(Self(bits))
    }

    /// Bit `k` of the message is bit `k` of `value` (least significant first).
    pub fn from_index(value: usize, k: usize) -> Self {
        Self((0..k).map(|i| ((value >> i) & 1) as u8).collect())
    }

    /// Inverse of [`BitMessage::from_index`].
    pub fn index(&self) -> usize {
        self.0.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum()
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

/// Radius and per-ray phases of a binary zero constellation.
///
/// Ray `k` carries the conjugate-reciprocal pair `R e^{j theta_k}` (bit 1)
/// and `R^-1 e^{j theta_k}` (bit 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation<T: Real> {
    radius: T,
    phases: Vec<T>,
}

/// Minimum separation between phases, modulo `2 pi`.
pub const MIN_PHASE_GAP: f64 = 1e-6;

impl<T: Real> Constellation<T> {
    pub fn new(radius: T, phases: Vec<T>) -> Result<Self> {
        if phases.is_empty() {
            return Err(invalid("constellation needs K >= 1 phases"));
        }
        if !(radius > T::one()) || !radius.is_finite() {
            return Err(invalid(format!("radius must be finite and > 1, got {radius}")));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(invalid("phases must be finite"));
        }
        let c = Self { radius, phases };
        let gap = c.min_phase_gap();
        if c.phases.len() > 1 && gap.as_f64() <= MIN_PHASE_GAP {
            return Err(invalid(format!("phases must be distinct modulo 2pi (gap {gap})")));
        }
        Ok(c)
    }

    /// Huffman constellation with uniform phases `2 pi k / K`.
    pub fn uniform(k: usize, radius: T) -> Result<Self> {
        Self::new(radius, uniform_phases(k))
    }

    /// Uniform phases at the canonical radius for weighting `lambda`.
    pub fn canonical(k: usize, lambda: f64) -> Result<Self> {
        Self::uniform(k, T::lit(dizet_radius(k, lambda)?))
    }

    pub fn k(&self) -> usize {
        self.phases.len()
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn phases(&self) -> &[T] {
        &self.phases
    }

    /// Phases reduced into `[0, 2 pi)`.
    pub fn wrapped_phases(&self) -> Vec<T> {
        self.phases.iter().map(|&p| wrap_phase(p)).collect()
    }

    /// Smallest circular distance between any two phases.
    pub fn min_phase_gap(&self) -> T {
        sorted_gaps(&self.phases).into_iter().fold(T::infinity(), T::min)
    }

    /// Largest deviation of the sorted circular phase gaps from `2 pi / K`.
    pub fn phase_uniformity_error(&self) -> T {
        let ideal = T::TAU() / T::lit(self.k() as f64);
        sorted_gaps(&self.phases)
            .into_iter()
            .map(|g| (g - ideal).abs())
            .fold(T::zero(), T::max)
    }

    /// The 2K candidate zeros, ordered `[R e^{j t_0}, R^-1 e^{j t_0}, ...]`.
    pub fn candidate_zeros(&self) -> Vec<Complex<T>> {
        let inv = self.radius.recip();
        self.phases
            .iter()
            .flat_map(|&t| [Complex::from_polar(self.radius, t), Complex::from_polar(inv, t)])
            .collect()
    }

    pub fn cast<U: Real>(&self) -> Constellation<U> {
        Constellation {
            radius: U::lit(self.radius.as_f64()),
            phases: self.phases.iter().map(|p| U::lit(p.as_f64())).collect(),
        }
    }
}

pub fn uniform_phases<T: Real>(k: usize) -> Vec<T> {
    (0..k).map(|i| T::TAU() * T::lit(i as f64) / T::lit(k as f64)).collect()
}

pub fn wrap_phase<T: Real>(p: T) -> T {
    let tau = T::TAU();
    let w = p % tau;
    if w < T::zero() {
        w + tau
    } else {
        w
    }
}

/// Circular gaps between consecutive sorted phases; sums to `2 pi`.
fn sorted_gaps<T: Real>(phases: &[T]) -> Vec<T> {
    let mut w: Vec<T> = phases.iter().map(|&p| wrap_phase(p)).collect();
    w.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = w.len();
    (0..n)
        .map(|i| if i + 1 < n { w[i + 1] - w[i] } else { w[0] + T::TAU() - w[n - 1] })
        .collect()
}

/// Zero `k` is `R e^{j theta_k}` when bit `k` is 1 and `R^-1 e^{j theta_k}`
/// otherwise.
pub fn bits_to_zeros<T: Real>(b: &BitMessage, c: &Constellation<T>) -> Result<ZeroPattern<T>> {
    if b.len() != c.k() {
        return Err(invalid(format!("message has {} bits, constellation has K = {}", b.len(), c.k())));
    }
    let inv = c.radius.recip();
    Ok(ZeroPattern(
        b.bits()
            .iter()
            .zip(&c.phases)
            .map(|(&bit, &t)| Complex::from_polar(if bit == 1 { c.radius } else { inv }, t))
            .collect(),
    ))
}

/// Transmit coefficients: monic expansion of the zero pattern, normalized to
/// energy `K + 1`.
pub fn encode<T: Real>(b: &BitMessage, c: &Constellation<T>) -> Result<ComplexPoly<T>> {
    let zeros = bits_to_zeros(b, c)?;
    let p = poly_from_zeros(&zeros, Complex::new(T::one(), T::zero()))?;
    normalize_energy(&p, T::lit((c.k() + 1) as f64))
}

/// Unconstrained learnable parameterization: `R = sqrt(1 + softplus(rho))`
/// keeps `R > 1` for every real `rho`; phases are free reals read mod `2 pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationParams<T: Real> {
    pub rho: T,
    pub phases: Vec<T>,
}

impl<T: Real> ConstellationParams<T> {
    /// Parameters reproducing `c` exactly (up to rounding).
    pub fn from_constellation(c: &Constellation<T>) -> Self {
        let r = c.radius();
        Self {
            rho: softplus_inv(r * r - T::one()),
            phases: c.phases().to_vec(),
        }
    }

    /// Starting point used by training: canonical radius for `lambda = 1/2`
    /// and uniform phases.
    pub fn initial(k: usize) -> Result<Self> {
        Ok(Self::from_constellation(&Constellation::canonical(k, 0.5)?))
    }

    pub fn radius(&self) -> T {
        (T::one() + softplus(self.rho)).sqrt()
    }

    /// `dR / drho`.
    pub fn radius_derivative(&self) -> T {
        crate::scalar::sigmoid(self.rho) / (T::lit(2.0) * self.radius())
    }

    pub fn k(&self) -> usize {
        self.phases.len()
    }

    pub fn to_constellation(&self) -> Result<Constellation<T>> {
        Constellation::new(self.radius(), self.phases.iter().map(|&p| wrap_phase(p)).collect())
    }

    /// Parameters flattened as `[rho, theta_0, ..., theta_{K-1}]`.
    pub fn to_vec(&self) -> Vec<T> {
        std::iter::once(self.rho).chain(self.phases.iter().copied()).collect()
    }

    pub fn from_slice(v: &[T]) -> Self {
        Self {
            rho: v[0],
            phases: v[1..].to_vec(),
        }
    }
}

/// JSON checkpoint form: `{"K", "radius", "phases"}` plus a format version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstellationFile {
    #[serde(default = "format_version")]
    pub format_version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub radius: f64,
    pub phases: Vec<f64>,
}

fn format_version() -> u32 {
    1
}

impl<T: Real> Constellation<T> {
    pub fn to_file(&self) -> ConstellationFile {
        ConstellationFile {
            format_version: 1,
            k: self.k(),
            radius: self.radius.as_f64(),
            phases: self.phases.iter().map(|p| p.as_f64()).collect(),
        }
    }

    pub fn from_file(f: &ConstellationFile) -> Result<Self> {
        if f.phases.len() != f.k {
            return Err(invalid(format!("constellation file: K = {} but {} phases", f.k, f.phases.len())));
        }
        Self::new(T::lit(f.radius), f.phases.iter().map(|&p| T::lit(p)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }
}
