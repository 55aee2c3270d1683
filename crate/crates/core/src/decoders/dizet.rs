//! Direct zero testing.

use num_complex::Complex;

use crate::constellation::{BitMessage, Constellation};
use crate::error::{invalid, Result};
use crate::poly::ComplexPoly;
use crate::scalar::Real;

fn check_shape<T: Real>(y: &ComplexPoly<T>, c: &Constellation<T>, l_t: usize) -> Result<()> {
    if l_t != y.degree() + 1 {
        return Err(invalid(format!(
            "L_t = {l_t} does not match received length {}",
            y.degree() + 1
        )));
    }
    if c.k() + 1 > l_t {
        return Err(invalid(format!("constellation K = {} exceeds received degree {}", c.k(), y.degree())));
    }
    Ok(())
}

/// Continuous decision variable for ray `k`:
/// `|Y(R e^{j t_k})| - R^{L_t - 1} |Y(R^-1 e^{j t_k})|`.
///
/// Negative values favour bit 1.
pub fn dizet_tau<T: Real>(y: &ComplexPoly<T>, c: &Constellation<T>, k: usize, l_t: usize) -> Result<T> {
    check_shape(y, c, l_t)?;
    if k >= c.k() {
        return Err(invalid(format!("ray index {k} out of range for K = {}", c.k())));
    }
    Ok(tau_unchecked(y, c.radius(), c.phases()[k], l_t))
}

pub(crate) fn tau_unchecked<T: Real>(y: &ComplexPoly<T>, radius: T, phase: T, l_t: usize) -> T {
    let outer = Complex::from_polar(radius, phase);
    let inner = Complex::from_polar(radius.recip(), phase);
    y.eval(outer).norm() - radius.powi(l_t as i32 - 1) * y.eval(inner).norm()
}

/// All K decision variables.
pub fn dizet_taus<T: Real>(y: &ComplexPoly<T>, c: &Constellation<T>, l_t: usize) -> Result<Vec<T>> {
    check_shape(y, c, l_t)?;
    Ok(c.phases()
        .iter()
        .map(|&t| tau_unchecked(y, c.radius(), t, l_t))
        .collect())
}

/// Hard decisions: bit `k` is 1 iff `tau_k < 0`; ties decode to 0.
pub fn dizet_decode<T: Real>(y: &ComplexPoly<T>, c: &Constellation<T>, l_t: usize) -> Result<BitMessage> {
    let taus = dizet_taus(y, c, l_t)?;
    BitMessage::new(taus.iter().map(|&t| u8::from(t < T::zero())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::encode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn noiseless_signs() {
        let c = Constellation::<f64>::canonical(7, 0.5).unwrap();
        for idx in 0..128 {
            let b = BitMessage::from_index(idx, 7);
            let y = encode(&b, &c).unwrap();
            for k in 0..7 {
                let t = dizet_tau(&y, &c, k, 8).unwrap();
                if b.bits()[k] == 1 {
                    assert!(t < 0.0);
                    let outer = Complex::from_polar(c.radius(), c.phases()[k]);
                    assert!(y.eval(outer).norm() < 1e-12);
                } else {
                    assert!(t > 0.0);
                }
            }
        }
    }

    #[test]
    fn noiseless_decoding_is_perfect() {
        for k in [2usize, 4, 7, 10] {
            let c = Constellation::<f64>::canonical(k, 0.5).unwrap();
            for idx in 0..1 << k {
                let b = BitMessage::from_index(idx, k);
                assert_eq!(dizet_decode(&encode(&b, &c).unwrap(), &c, k + 1).unwrap(), b);
            }
        }
    }

    #[test]
    fn tau_scales_with_modulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = Constellation::<f64>::canonical(5, 1.0).unwrap();
        for _ in 0..50 {
            let y = ComplexPoly::new((0..6).map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
                .unwrap();
            let s = Complex::from_polar(rng.gen_range(0.1..10.0), rng.gen_range(0.0..6.3));
            for k in 0..5 {
                let a = dizet_tau(&y, &c, k, 6).unwrap();
                let b = dizet_tau(&y.scale(s), &c, k, 6).unwrap();
                assert!((b - s.norm() * a).abs() <= 1e-12 * (1.0 + b.abs()));
            }
            assert_eq!(dizet_decode(&y, &c, 6).unwrap(), dizet_decode(&y.scale(s), &c, 6).unwrap());
        }
    }

    #[test]
    fn decisions_agree_with_tau_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = Constellation::<f64>::canonical(6, 0.5).unwrap();
        for _ in 0..100 {
            let y = ComplexPoly::new((0..7).map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
                .unwrap();
            let taus = dizet_taus(&y, &c, 7).unwrap();
            let b = dizet_decode(&y, &c, 7).unwrap();
            for k in 0..6 {
                assert_eq!(b.bits()[k] == 1, taus[k] < 0.0);
            }
        }
    }

    #[test]
    fn argument_checks() {
        let c = Constellation::<f64>::canonical(3, 0.5).unwrap();
        let y = encode(&BitMessage::from_index(5, 3), &c).unwrap();
        assert!(dizet_tau(&y, &c, 3, 4).is_err());
        assert!(dizet_tau(&y, &c, 0, 5).is_err());
        assert!(dizet_decode(&y, &c, 3).is_err());
    }
}
