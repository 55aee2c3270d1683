//! Derivatives of companion-matrix eigenvalues with respect to the polynomial
//! coefficients.
//!
//! For a simple eigenvalue `l` of the companion matrix `C` with left
//! eigenvector `v` and right eigenvector `u`, `dl = (v^H dC u) / (v^H u)`.
//! Both eigenvectors have closed forms for the companion layout: the left one
//! is `[1, l, ..., l^(K-1)]` and the right one follows a Horner recurrence on
//! the normalized coefficients `c_k = y_k / y_K`. Only the last column of `C`
//! depends on the coefficients, so the chain rule runs through `c_k`.

use num_complex::Complex;

use super::{roots, ComplexPoly, ZeroPattern};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigenvalues closer than this are treated as repeated.
pub const SIMPLE_GAP: f64 = 1e-8;

/// Eigenvalue condition numbers `|v||u| / |v^H u|` above this are treated as
/// a numerically split repeated root.
pub const MAX_CONDITION: f64 = 1e6;

/// Roots of a polynomial together with `d root_i / d y_k`.
#[derive(Debug, Clone)]
pub struct EigenJacobian<T: Real> {
    pub roots: ZeroPattern<T>,
    /// `jac[i][k]` is the complex derivative of root `i` with respect to
    /// coefficient `k`, `k = 0..=K`. Roots are holomorphic in the
    /// coefficients, so the conjugate derivative vanishes.
    pub jac: Vec<Vec<Complex<T>>>,
}

impl<T: Real> EigenJacobian<T> {
    /// Pull a gradient on the roots back onto the coefficients. Gradients of a
    /// real loss are packed as `dL/dRe + i dL/dIm`.
    pub fn pullback(&self, root_grads: &[Complex<T>]) -> Vec<Complex<T>> {
        let ncoef = self.jac.first().map_or(0, |r| r.len());
        let mut out = vec![Complex::new(T::zero(), T::zero()); ncoef];
        for (row, &g) in self.jac.iter().zip(root_grads) {
            for (o, &d) in out.iter_mut().zip(row) {
                *o += d.conj() * g;
            }
        }
        out
    }
}

pub fn min_root_gap<T: Real>(zs: &[Complex<T>]) -> T {
    let mut gap = T::infinity();
    for i in 0..zs.len() {
        for j in i + 1..zs.len() {
            gap = gap.min((zs[i] - zs[j]).norm());
        }
    }
    gap
}

pub fn eigenvalue_jacobian<T: Real>(p: &ComplexPoly<T>) -> Result<EigenJacobian<T>> {
    let zs = roots(p)?;
    let gap = min_root_gap(zs.as_slice());
    if gap.as_f64() < SIMPLE_GAP {
        return Err(Error::DegenerateSpectrum(gap.as_f64()));
    }
    let k = p.degree();
    let y = p.coeffs();
    let lead = p.leading();
    let c: Vec<Complex<T>> = y[..k].iter().map(|&v| v / lead).collect();
    let zero = Complex::new(T::zero(), T::zero());
    let one = Complex::new(T::one(), T::zero());

    let mut jac = Vec::with_capacity(k);
    let mut left = vec![zero; k];
    let mut right = vec![zero; k];
    for &lam in zs.as_slice() {
        left[0] = one;
        for j in 1..k {
            left[j] = left[j - 1] * lam;
        }
        right[k - 1] = one;
        for i in (1..k).rev() {
            right[i - 1] = lam * right[i] + c[i];
        }
        let vu: Complex<T> = left.iter().zip(&right).map(|(a, b)| a * b).fold(zero, |s, x| s + x);
        let nl = left.iter().map(|x| x.norm_sqr()).sum::<T>().sqrt();
        let nr = right.iter().map(|x| x.norm_sqr()).sum::<T>().sqrt();
        let cond = nl * nr / vu.norm();
        if !(cond.as_f64() <= MAX_CONDITION) {
            return Err(Error::DegenerateSpectrum(gap.as_f64()));
        }
        // dC[:, K-1] = -dc, so v^H dC u = -sum_i left_i dc_i right_{K-1}.
        let dc: Vec<Complex<T>> = left.iter().map(|&w| -(w * right[k - 1]) / vu).collect();
        let mut row = vec![zero; k + 1];
        let mut lead_term = zero;
        for i in 0..k {
            row[i] = dc[i] / lead;
            lead_term += dc[i] * c[i];
        }
        // dc_i / dy_K = -c_i / y_K
        row[k] = -lead_term / lead;
        jac.push(row);
    }
    Ok(EigenJacobian { roots: zs, jac })
}
