//! Complex polynomials in ascending-coefficient form.
//!
//! A [`ComplexPoly`] of degree `K` holds `K + 1` coefficients with `coeffs[k]`
//! multiplying `z^k`. Zeros are recovered through the eigenvalues of the
//! Frobenius companion matrix (see [`roots`]) and differentiated with the
//! simple-eigenvalue perturbation identity (see [`eigenvalue_jacobian`]).

mod companion;
mod jacobian;

pub use companion::{companion_matrix, roots, roots_with_limit, CMatrix};
pub use jacobian::{eigenvalue_jacobian, min_root_gap, EigenJacobian, MAX_CONDITION, SIMPLE_GAP};

use num_complex::Complex;

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Leading coefficients with magnitude at or below this are rejected.
pub const LEADING_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPoly<T: Real> {
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> ComplexPoly<T> {
    /// Build from ascending coefficients. Needs at least two coefficients and a
    /// leading coefficient of magnitude above [`LEADING_FLOOR`].
    pub fn new(coeffs: Vec<Complex<T>>) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(invalid(format!(
                "polynomial needs degree >= 1, got {} coefficient(s)",
                coeffs.len()
            )));
        }
        let lead = coeffs[coeffs.len() - 1].norm().as_f64();
        if !(lead > LEADING_FLOOR) {
            return Err(Error::DegeneratePolynomial(lead));
        }
        Ok(Self { coeffs })
    }

    /// Wrap coefficients without checking the leading term. Received
    /// polynomials are allowed to be arbitrary; the root finder re-checks.
    pub fn from_coeffs_unchecked(coeffs: Vec<Complex<T>>) -> Self {
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex<T>> {
        self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> Complex<T> {
        self.coeffs[self.coeffs.len() - 1]
    }

    /// Squared Euclidean norm of the coefficient vector.
    pub fn energy(&self) -> T {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn scale(&self, c: Complex<T>) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|&x| x * c).collect(),
        }
    }

    /// Horner evaluation of `sum_k coeffs[k] z^k`.
    pub fn eval(&self, z: Complex<T>) -> Complex<T> {
        horner(&self.coeffs, z)
    }

    /// Value and first derivative at `z` in one Horner pass.
    pub fn eval_with_derivative(&self, z: Complex<T>) -> (Complex<T>, Complex<T>) {
        let mut p = Complex::new(T::zero(), T::zero());
        let mut dp = p;
        for &c in self.coeffs.iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p, dp)
    }

    /// Aperiodic autocorrelation `r[m] = sum_k x[k+m] conj(x[k])` for
    /// `m = 0..=K`.
    pub fn autocorrelation(&self) -> Vec<Complex<T>> {
        let n = self.coeffs.len();
        (0..n)
            .map(|m| {
                (0..n - m)
                    .map(|k| self.coeffs[k + m] * self.coeffs[k].conj())
                    .fold(Complex::new(T::zero(), T::zero()), |a, b| a + b)
            })
            .collect()
    }
}

pub(crate) fn horner<T: Real>(coeffs: &[Complex<T>], z: Complex<T>) -> Complex<T> {
    coeffs
        .iter()
        .rev()
        .fold(Complex::new(T::zero(), T::zero()), |acc, &c| acc * z + c)
}

/// An ordered list of polynomial zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroPattern<T: Real>(pub Vec<Complex<T>>);

impl<T: Real> ZeroPattern<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.0
    }
}

/// Expand `leading * prod_k (z - zeros[k])` into ascending coefficients.
pub fn poly_from_zeros<T: Real>(zeros: &ZeroPattern<T>, leading: Complex<T>) -> Result<ComplexPoly<T>> {
    if zeros.is_empty() {
        return Err(invalid("zero pattern is empty"));
    }
    if leading.norm().as_f64() == 0.0 {
        return Err(invalid("leading coefficient must be nonzero"));
    }
    let coeffs = expand_monic(zeros.as_slice());
    ComplexPoly::new(coeffs.into_iter().map(|c| c * leading).collect())
}

/// Monic expansion of `prod (z - a_k)`, ascending order, length `len + 1`.
pub(crate) fn expand_monic<T: Real>(zeros: &[Complex<T>]) -> Vec<Complex<T>> {
    let zero = Complex::new(T::zero(), T::zero());
    let mut c = Vec::with_capacity(zeros.len() + 1);
    c.push(Complex::new(T::one(), T::zero()));
    for &a in zeros {
        c.push(zero);
        for i in (1..c.len()).rev() {
            c[i] = c[i - 1] - a * c[i];
        }
        c[0] = -a * c[0];
    }
    c
}

/// Rescale by a positive real so that the squared coefficient norm equals
/// `target_energy`. Zeros are unchanged.
pub fn normalize_energy<T: Real>(p: &ComplexPoly<T>, target_energy: T) -> Result<ComplexPoly<T>> {
    if !(target_energy > T::zero()) {
        return Err(invalid("target energy must be positive"));
    }
    let e = p.energy();
    if !(e > T::zero()) {
        return Err(invalid("cannot normalize an all-zero polynomial"));
    }
    let s = (target_energy / e).sqrt();
    Ok(ComplexPoly {
        coeffs: p.coeffs.iter().map(|&c| c * s).collect(),
    })
}

/// Free-function form of [`ComplexPoly::eval`].
pub fn eval_poly<T: Real>(p: &ComplexPoly<T>, z: Complex<T>) -> Complex<T> {
    p.eval(z)
}

/// Greedy nearest-neighbour matching between two root multisets. Returns the
/// largest matched distance, or `None` when the sizes differ.
pub fn multiset_distance<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Option<T> {
    if a.len() != b.len() {
        return None;
    }
    let mut used = vec![false; b.len()];
    let mut worst = T::zero();
    for &x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, &y)| (j, (x - y).norm()))
            .fold((usize::MAX, T::infinity()), |best, cur| if cur.1 < best.1 { cur } else { best });
        used[j] = true;
        worst = worst.max(d);
    }
    Some(worst)
}
