//! Noise and fading applied to transmit coefficients, plus the OFDM
//! frequency-mapping path.
//!
//! Noise is circularly-symmetric complex Gaussian `CN(0, var)`: each of the
//! real and imaginary parts has variance `var / 2`.

use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::poly::ComplexPoly;
use crate::scalar::Real;

pub const DEFAULT_IDFT_SIZE: usize = 32;

/// Per-coefficient complex noise variance for a block of `K + 1` coefficients
/// with energy `K + 1` carrying `K` bits: `(K + 1) / (K 10^(Eb/N0 / 10))`.
pub fn ebn0_to_noise_var(ebn0_db: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(invalid("K must be at least 1"));
    }
    let eb = (k + 1) as f64 / k as f64;
    Ok(eb / 10f64.powf(ebn0_db / 10.0))
}

/// One draw from `CN(0, var)`.
pub fn complex_normal<T: Real, R: Rng + ?Sized>(var: T, rng: &mut R) -> Complex<T> {
    let s = (var * T::lit(0.5)).sqrt();
    let re = T::std_normal(rng);
    let im = T::std_normal(rng);
    Complex::new(re * s, im * s)
}

/// `y_k = x_k + w_k` with independent `w_k ~ CN(0, var)`.
pub fn apply_awgn<T: Real, R: Rng + ?Sized>(x: &ComplexPoly<T>, var: T, rng: &mut R) -> ComplexPoly<T> {
    if var == T::zero() {
        return x.clone();
    }
    ComplexPoly::from_coeffs_unchecked(x.coeffs().iter().map(|&c| c + complex_normal(var, rng)).collect())
}

/// `y = h x + w` with one `h ~ CN(0, 1)` per block. Returns `h` as well.
pub fn apply_flat_fading_with_gain<T: Real, R: Rng + ?Sized>(
    x: &ComplexPoly<T>,
    var: T,
    rng: &mut R,
) -> (ComplexPoly<T>, Complex<T>) {
    let h = complex_normal(T::one(), rng);
    (apply_awgn(&x.scale(h), var, rng), h)
}

pub fn apply_flat_fading<T: Real, R: Rng + ?Sized>(x: &ComplexPoly<T>, var: T, rng: &mut R) -> ComplexPoly<T> {
    apply_flat_fading_with_gain(x, var, rng).0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    Awgn,
    FlatFading,
}

impl ChannelKind {
    pub fn apply<T: Real, R: Rng + ?Sized>(self, x: &ComplexPoly<T>, var: T, rng: &mut R) -> ComplexPoly<T> {
        match self {
            ChannelKind::Awgn => apply_awgn(x, var, rng),
            ChannelKind::FlatFading => apply_flat_fading(x, var, rng),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::FlatFading => "flat_fading",
        }
    }
}

impl std::fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

fn default_idft() -> usize {
    DEFAULT_IDFT_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub ebn0_db: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default = "default_idft")]
    pub idft_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ChannelConfig {
    pub fn new(kind: ChannelKind, ebn0_db: f64, k: usize) -> Self {
        Self {
            kind,
            ebn0_db,
            k,
            idft_size: DEFAULT_IDFT_SIZE,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("channel K must be at least 1"));
        }
        if self.idft_size < self.k + 1 {
            return Err(invalid(format!(
                "idft_size {} smaller than K + 1 = {}",
                self.idft_size,
                self.k + 1
            )));
        }
        if !self.ebn0_db.is_finite() {
            return Err(invalid("ebn0_db must be finite"));
        }
        Ok(())
    }

    pub fn noise_var(&self) -> Result<f64> {
        ebn0_to_noise_var(self.ebn0_db, self.k)
    }
}

/// Unitary OFDM modulator/demodulator with the `K + 1` coefficients on the
/// first bins of an `n`-point transform. No cyclic prefix: a flat channel
/// acts as a scalar on the whole symbol.
pub struct OfdmModem<T: Real> {
    n: usize,
    inverse: Arc<dyn Fft<T>>,
    forward: Arc<dyn Fft<T>>,
}

impl<T: Real> OfdmModem<T> {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            inverse: planner.plan_fft_inverse(n),
            forward: planner.plan_fft_forward(n),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Time-domain samples of one OFDM symbol.
    pub fn modulate(&self, coeffs: &[Complex<T>]) -> Result<Vec<Complex<T>>> {
        if coeffs.len() > self.n {
            return Err(invalid(format!("{} coefficients exceed {} subcarriers", coeffs.len(), self.n)));
        }
        let mut buf = vec![Complex::new(T::zero(), T::zero()); self.n];
        buf[..coeffs.len()].copy_from_slice(coeffs);
        self.inverse.process(&mut buf);
        let s = T::lit(1.0 / (self.n as f64).sqrt());
        buf.iter_mut().for_each(|v| *v = *v * s);
        Ok(buf)
    }

    /// Frequency-domain bins `0..active` of a received symbol.
    pub fn demodulate(&self, mut samples: Vec<Complex<T>>, active: usize) -> Vec<Complex<T>> {
        self.forward.process(&mut samples);
        let s = T::lit(1.0 / (self.n as f64).sqrt());
        samples.truncate(active);
        samples.iter_mut().for_each(|v| *v = *v * s);
        samples
    }

    /// Map, pass through the block channel, demap. Time-domain noise has
    /// per-sample variance `var`, which the unitary transform carries over
    /// unchanged to every demapped coefficient.
    pub fn transmit<R: Rng + ?Sized>(
        &self,
        x: &ComplexPoly<T>,
        kind: ChannelKind,
        var: T,
        rng: &mut R,
    ) -> Result<ComplexPoly<T>> {
        let active = x.coeffs().len();
        let mut time = self.modulate(x.coeffs())?;
        if kind == ChannelKind::FlatFading {
            let h = complex_normal(T::one(), rng);
            time.iter_mut().for_each(|v| *v = *v * h);
        }
        if var > T::zero() {
            time.iter_mut().for_each(|v| *v = *v + complex_normal(var, rng));
        }
        Ok(ComplexPoly::from_coeffs_unchecked(self.demodulate(time, active)))
    }
}

/// One block through the OFDM chain described by `cfg`.
pub fn ofdm_path<T: Real, R: Rng + ?Sized>(x: &ComplexPoly<T>, cfg: &ChannelConfig, rng: &mut R) -> Result<ComplexPoly<T>> {
    cfg.validate()?;
    if x.degree() != cfg.k {
        return Err(invalid(format!("block degree {} != channel K = {}", x.degree(), cfg.k)));
    }
    let var = T::lit(cfg.noise_var()?);
    OfdmModem::new(cfg.idft_size).transmit(x, cfg.kind, var, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{encode, BitMessage, Constellation};
    use crate::poly::{multiset_distance, roots};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn block() -> ComplexPoly<f64> {
        encode(&BitMessage::from_index(0b1011001, 7), &Constellation::canonical(7, 0.5).unwrap()).unwrap()
    }

    #[test]
    fn noise_variance_examples() {
        assert!((ebn0_to_noise_var(10.0, 7).unwrap() - 8.0 / 70.0).abs() < 1e-15);
        assert!((ebn0_to_noise_var(0.0, 1).unwrap() - 2.0).abs() < 1e-15);
        let mut prev = f64::INFINITY;
        for db in -10..20 {
            let v = ebn0_to_noise_var(db as f64, 4).unwrap();
            assert!(v < prev);
            prev = v;
        }
        assert!(ebn0_to_noise_var(3.0, 0).is_err());
    }

    #[test]
    fn zero_variance_is_identity() {
        let x = block();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(apply_awgn(&x, 0.0, &mut rng), x);
    }

    #[test]
    fn awgn_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let var = 0.37;
        let n = 1_000_000;
        let (mut tot, mut re, mut im) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let w: Complex<f64> = complex_normal(var, &mut rng);
            tot += w.norm_sqr();
            re += w.re * w.re;
            im += w.im * w.im;
        }
        let n = n as f64;
        assert!((tot / n / var - 1.0).abs() < 0.01);
        assert!((re / n / (var / 2.0) - 1.0).abs() < 0.02);
        assert!((im / n / (var / 2.0) - 1.0).abs() < 0.02);
    }

    #[test]
    fn fading_gain_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        let e: f64 = (0..n).map(|_| complex_normal::<f64, _>(1.0, &mut rng).norm_sqr()).sum::<f64>() / n as f64;
        assert!((e - 1.0).abs() < 0.01);
    }

    #[test]
    fn noiseless_fading_keeps_roots() {
        let x = block();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let y = apply_flat_fading(&x, 0.0, &mut rng);
            let d = multiset_distance(roots(&y).unwrap().as_slice(), roots(&x).unwrap().as_slice()).unwrap();
            assert!(d < 1e-10);
        }
    }

    #[test]
    fn fading_noise_scales_with_gain() {
        // For a fixed h, (y / h - x) has per-coefficient variance var / |h|^2.
        let x = block();
        let var = 0.2;
        let h = Complex::new(0.3, -0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 40_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let y = apply_awgn(&x.scale(h), var, &mut rng);
            acc += y.coeffs().iter().zip(x.coeffs()).map(|(a, b)| (a / h - b).norm_sqr()).sum::<f64>();
        }
        let est = acc / (n * 8) as f64;
        let want = var / h.norm_sqr();
        assert!((est / want - 1.0).abs() < 0.02, "{est} vs {want}");
    }

    #[test]
    fn ofdm_noiseless_roundtrip() {
        let x = block();
        let modem = OfdmModem::<f64>::new(32);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let y = modem.transmit(&x, ChannelKind::Awgn, 0.0, &mut rng).unwrap();
        for (a, b) in y.coeffs().iter().zip(x.coeffs()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn ofdm_noise_is_white_with_target_variance() {
        let x = ComplexPoly::from_coeffs_unchecked(vec![Complex::new(0.0, 0.0); 8]);
        let modem = OfdmModem::<f64>::new(32);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let var = 0.5;
        let n = 100_000;
        let mut cov = [[Complex::new(0.0, 0.0); 8]; 8];
        for _ in 0..n {
            let y = modem.transmit(&x, ChannelKind::Awgn, var, &mut rng).unwrap();
            let c = y.coeffs();
            for i in 0..8 {
                for j in 0..8 {
                    cov[i][j] += c[i] * c[j].conj();
                }
            }
        }
        for i in 0..8 {
            let d = cov[i][i].re / n as f64;
            assert!((d / var - 1.0).abs() < 0.02, "bin {i}: {d}");
            for j in 0..8 {
                if i != j {
                    assert!((cov[i][j].norm() / n as f64) < 0.01 * var);
                }
            }
        }
    }

    #[test]
    fn ofdm_rejects_small_transform() {
        let x = block();
        let mut cfg = ChannelConfig::new(ChannelKind::Awgn, 5.0, 7);
        cfg.idft_size = 7;
        assert!(ofdm_path(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
        cfg.idft_size = 8;
        assert!(ofdm_path(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).is_ok());
    }

    #[test]
    fn config_json_shape() {
        let cfg: ChannelConfig = serde_json::from_str(r#"{"kind": "flat_fading", "ebn0_db": 5.0, "K": 7}"#).unwrap();
        assert_eq!(cfg.kind, ChannelKind::FlatFading);
        assert_eq!(cfg.idft_size, 32);
    }
}
