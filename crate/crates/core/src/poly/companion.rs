//! Companion-matrix eigenvalues via balancing and Wilkinson-shifted QR.

use num_complex::Complex;

use super::{ComplexPoly, ZeroPattern, LEADING_FLOOR};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative deflation floor against the Frobenius norm of the balanced matrix.
const DEFLATION_FLOOR: f64 = 1e-12;

/// Dense row-major square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix<T: Real> {
    n: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex::new(T::zero(), T::zero()); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex<T>) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    fn at(&mut self, i: usize, j: usize) -> &mut Complex<T> {
        &mut self.data[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<Complex<T>>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    fn frobenius(&self) -> T {
        self.data.iter().map(|c| c.norm_sqr()).sum::<T>().sqrt()
    }
}

/// Frobenius companion matrix: ones on the subdiagonal and last column
/// `-y_k / y_K` for `k = 0..K`.
pub fn companion_matrix<T: Real>(p: &ComplexPoly<T>) -> Result<CMatrix<T>> {
    let k = p.degree();
    let lead = p.leading();
    let mag = lead.norm().as_f64();
    if !(mag > LEADING_FLOOR) {
        return Err(Error::DegeneratePolynomial(mag));
    }
    let one = Complex::new(T::one(), T::zero());
    let mut m = CMatrix::zeros(k);
    for i in 1..k {
        m.set(i, i - 1, one);
    }
    for (i, &y) in p.coeffs()[..k].iter().enumerate() {
        m.set(i, k - 1, -y / lead);
    }
    Ok(m)
}

/// Zeros of `p` as eigenvalues of its companion matrix, with the default
/// iteration budget of `100 * K`. No ordering is guaranteed beyond being a
/// deterministic function of the input.
pub fn roots<T: Real>(p: &ComplexPoly<T>) -> Result<ZeroPattern<T>> {
    roots_with_limit(p, 100 * p.degree().max(1))
}

pub fn roots_with_limit<T: Real>(p: &ComplexPoly<T>, max_iter: usize) -> Result<ZeroPattern<T>> {
    if p.coeffs().iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::NonFinite("polynomial coefficient".into()));
    }
    let mut h = companion_matrix(p)?;
    if h.dim() == 1 {
        return Ok(ZeroPattern(vec![h.get(0, 0)]));
    }
    balance(&mut h);
    hessenberg_qr(h, max_iter).map(ZeroPattern)
}

fn abs1<T: Real>(c: Complex<T>) -> T {
    c.re.abs() + c.im.abs()
}

/// Parlett-Reinsch diagonal similarity balancing with radix 2.
fn balance<T: Real>(m: &mut CMatrix<T>) {
    let n = m.dim();
    let radix = T::lit(2.0);
    let radix2 = radix * radix;
    loop {
        let mut converged = true;
        for i in 0..n {
            let mut c = T::zero();
            let mut r = T::zero();
            for j in 0..n {
                if j != i {
                    c += abs1(m.get(j, i));
                    r += abs1(m.get(i, j));
                }
            }
            if c == T::zero() || r == T::zero() {
                continue;
            }
            let s = c + r;
            let mut f = T::one();
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= radix2;
            }
            g = r * radix;
            while c > g {
                f /= radix;
                c /= radix2;
            }
            if (c + r) / f < T::lit(0.95) * s {
                converged = false;
                let g = T::one() / f;
                for j in 0..n {
                    *m.at(i, j) = m.get(i, j) * g;
                    *m.at(j, i) = m.get(j, i) * f;
                }
            }
        }
        if converged {
            break;
        }
    }
}

/// Givens rotation `[c s; -conj(s) c]` with real `c` mapping `(a, b)` to `(r, 0)`.
fn givens<T: Real>(a: Complex<T>, b: Complex<T>) -> (T, Complex<T>) {
    let na = a.norm();
    let nb = b.norm();
    if nb == T::zero() {
        return (T::one(), Complex::new(T::zero(), T::zero()));
    }
    if na == T::zero() {
        return (T::zero(), Complex::new(T::one(), T::zero()));
    }
    let nrm = na.hypot(nb);
    let c = na / nrm;
    let s = (a / na) * b.conj() / nrm;
    (c, s)
}

/// Eigenvalue of the trailing 2x2 block `[a b; c d]` closest to `d`.
fn wilkinson_shift<T: Real>(a: Complex<T>, b: Complex<T>, c: Complex<T>, d: Complex<T>) -> Complex<T> {
    let half = T::lit(0.5);
    let mid = (a + d) * half;
    let diff = (a - d) * half;
    let disc = (diff * diff + b * c).sqrt();
    let l1 = mid + disc;
    let l2 = mid - disc;
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Shifted QR on an upper Hessenberg matrix, eigenvalues only.
fn hessenberg_qr<T: Real>(mut h: CMatrix<T>, max_iter: usize) -> Result<Vec<Complex<T>>> {
    let n = h.dim();
    let eps = T::epsilon();
    let floor = T::lit(DEFLATION_FLOOR) * h.frobenius();
    let zero = Complex::new(T::zero(), T::zero());
    let mut eig = vec![zero; n];
    let mut hi = n - 1;
    let mut total = 0usize;
    let mut since_deflation = 0usize;

    loop {
        if hi == 0 {
            eig[0] = h.get(0, 0);
            break;
        }
        // Find the start of the unreduced trailing block.
        let mut lo = hi;
        while lo > 0 {
            let sub = h.get(lo, lo - 1).norm();
            let local = eps * (h.get(lo, lo).norm() + h.get(lo - 1, lo - 1).norm());
            if sub <= local.max(floor) {
                h.set(lo, lo - 1, zero);
                break;
            }
            lo -= 1;
        }
        if lo == hi {
            eig[hi] = h.get(hi, hi);
            hi -= 1;
            since_deflation = 0;
            continue;
        }
        if total >= max_iter {
            return Err(Error::NoConvergence(max_iter));
        }
        total += 1;
        since_deflation += 1;

        let mu = if since_deflation % 11 == 10 {
            // Exceptional shift to break cycles.
            let s = h.get(hi, hi - 1).norm() + if hi >= 2 { h.get(hi - 1, hi - 2).norm() } else { T::zero() };
            h.get(hi, hi) + Complex::new(T::lit(0.75) * s, T::lit(-0.4375) * s)
        } else {
            wilkinson_shift(h.get(hi - 1, hi - 1), h.get(hi - 1, hi), h.get(hi, hi - 1), h.get(hi, hi))
        };

        for i in lo..=hi {
            *h.at(i, i) = h.get(i, i) - mu;
        }
        let mut rots = Vec::with_capacity(hi - lo);
        for k in lo..hi {
            let (c, s) = givens(h.get(k, k), h.get(k + 1, k));
            for j in k..=hi {
                let x = h.get(k, j);
                let y = h.get(k + 1, j);
                h.set(k, j, x * c + s * y);
                h.set(k + 1, j, y * c - s.conj() * x);
            }
            rots.push((c, s));
        }
        for (idx, &(c, s)) in rots.iter().enumerate() {
            let k = lo + idx;
            for i in lo..=(k + 1).min(hi) {
                let x = h.get(i, k);
                let y = h.get(i, k + 1);
                h.set(i, k, x * c + y * s.conj());
                h.set(i, k + 1, y * c - x * s);
            }
        }
        for i in lo..=hi {
            *h.at(i, i) = h.get(i, i) + mu;
        }
    }
    Ok(eig)
}

#[cfg(test)]
mod tests {
    use super::super::{multiset_distance, poly_from_zeros};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn poly(re: &[f64]) -> ComplexPoly<f64> {
        ComplexPoly::new(re.iter().map(|&x| c(x, 0.0)).collect()).unwrap()
    }

    #[test]
    fn companion_layout() {
        let m = companion_matrix(&poly(&[-1.0, 0.0, 1.0])).unwrap();
        assert_eq!(m.rows(), vec![vec![c(0.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]);
        let m = companion_matrix(&poly(&[1.0, 0.0, 1.0])).unwrap();
        assert_eq!(m.rows(), vec![vec![c(0.0, 0.0), c(-1.0, 0.0)], vec![c(1.0, 0.0), c(0.0, 0.0)]]);
    }

    #[test]
    fn companion_rejects_tiny_leading() {
        let p = ComplexPoly::from_coeffs_unchecked(vec![c(1.0, 0.0), c(1e-14, 0.0)]);
        assert!(matches!(companion_matrix(&p), Err(Error::DegeneratePolynomial(_))));
    }

    #[test]
    fn cubic_eigenvalues() {
        let r = roots(&poly(&[-6.0, 11.0, -6.0, 1.0])).unwrap();
        let d = multiset_distance(r.as_slice(), &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]).unwrap();
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn quadratic_roots() {
        let r = roots(&poly(&[-1.0, 0.0, 1.0])).unwrap();
        assert!(multiset_distance(r.as_slice(), &[c(1.0, 0.0), c(-1.0, 0.0)]).unwrap() < 1e-12);
        let r = roots(&poly(&[1.0, 0.0, 1.0])).unwrap();
        assert!(multiset_distance(r.as_slice(), &[c(0.0, 1.0), c(0.0, -1.0)]).unwrap() < 1e-12);
    }

    #[test]
    fn linear_root() {
        let r = roots(&poly(&[-3.0, 2.0])).unwrap();
        assert_eq!(r.0, vec![c(1.5, 0.0)]);
    }

    #[test]
    fn scaled_polynomial_has_same_roots() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let k = rng.gen_range(2..=10);
            let p = ComplexPoly::new((0..=k).map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect())
                .unwrap();
            let s = Complex::from_polar(rng.gen_range(0.1..10.0), rng.gen_range(0.0..6.28));
            let a = roots(&p).unwrap();
            let b = roots(&p.scale(s)).unwrap();
            assert!(multiset_distance(a.as_slice(), b.as_slice()).unwrap() < 1e-10);
        }
    }

    #[test]
    fn iteration_limit_is_enforced() {
        let p = poly_from_zeros(
            &ZeroPattern((0..8).map(|k| Complex::from_polar(1.2, k as f64)).collect()),
            c(1.0, 0.0),
        )
        .unwrap();
        assert!(matches!(roots_with_limit(&p, 1), Err(Error::NoConvergence(1))));
    }

    #[test]
    fn single_precision_roundtrip() {
        let zs: Vec<Complex<f32>> = (0..7)
            .map(|k| Complex::from_polar(if k % 2 == 0 { 1.2f32 } else { 1.0 / 1.2 }, k as f32 * 0.897))
            .collect();
        let p = poly_from_zeros(&ZeroPattern(zs.clone()), Complex::new(1.0f32, 0.0)).unwrap();
        let r = roots(&p).unwrap();
        assert!(multiset_distance(r.as_slice(), &zs).unwrap() < 1e-3);
    }
}
