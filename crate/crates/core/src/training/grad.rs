//! Hand-written reverse pass through encode -> channel -> decode.
//!
//! Complex intermediates carry gradients of a real loss packed as
//! `dL/dRe + i dL/dIm`. For a holomorphic map `u = f(z)` this pulls back as
//! `G_z = conj(f'(z)) G_u`; a real parameter `p` entering through `z(p)`
//! receives `Re(conj(dz/dp) G_z)`.

use ndarray::Array2;
use num_complex::Complex;
use rand::Rng;
use rayon::prelude::*;

use crate::constellation::{BitMessage, ConstellationParams};
use crate::decoders::{MlpGrads, MlpParams};
use crate::error::{Error, Result};
use crate::poly::{eigenvalue_jacobian, expand_monic, roots, ComplexPoly};
use crate::scalar::Real;

use super::loss::{bce_grad, bce_loss, hinge_grad, hinge_loss, LabelOrientation};

fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

/// One training example before encoding: the message and the (already
/// scaled) additive noise for each of the `K + 1` coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample<T: Real> {
    pub message: BitMessage,
    pub noise: Vec<Complex<T>>,
}

/// `dL/dR` and `dL/dtheta_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstGrad<T: Real> {
    pub radius: T,
    pub phases: Vec<T>,
}

impl<T: Real> ConstGrad<T> {
    pub fn zeros(k: usize) -> Self {
        Self {
            radius: T::zero(),
            phases: vec![T::zero(); k],
        }
    }

    fn add(&mut self, o: &Self) {
        self.radius += o.radius;
        for (a, &b) in self.phases.iter_mut().zip(&o.phases) {
            *a += b;
        }
    }

    /// Chain onto the unconstrained parameters `[rho, theta...]`.
    pub fn to_param_grad(&self, params: &ConstellationParams<T>) -> Vec<T> {
        std::iter::once(self.radius * params.radius_derivative())
            .chain(self.phases.iter().copied())
            .collect()
    }
}

/// Forward intermediates of the encoder for one message.
#[derive(Debug, Clone)]
pub struct EncodeTape<T: Real> {
    bits: Vec<u8>,
    radius: T,
    phases: Vec<T>,
    zeros: Vec<Complex<T>>,
    monic: Vec<Complex<T>>,
    scale: T,
    pub x: Vec<Complex<T>>,
}

pub fn encode_forward<T: Real>(radius: T, phases: &[T], message: &BitMessage) -> EncodeTape<T> {
    let zeros: Vec<Complex<T>> = message
        .bits()
        .iter()
        .zip(phases)
        .map(|(&b, &t)| Complex::from_polar(if b == 1 { radius } else { radius.recip() }, t))
        .collect();
    let monic = expand_monic(&zeros);
    let target = T::lit(monic.len() as f64);
    let energy: T = monic.iter().map(|c| c.norm_sqr()).sum();
    let scale = (target / energy).sqrt();
    let x = monic.iter().map(|&c| c * scale).collect();
    EncodeTape {
        bits: message.bits().to_vec(),
        radius,
        phases: phases.to_vec(),
        zeros,
        monic,
        scale,
        x,
    }
}

impl<T: Real> EncodeTape<T> {
    /// Accumulate the pullback of `G_x` onto `(R, theta)`.
    pub fn backward(&self, g_x: &[Complex<T>], acc: &mut ConstGrad<T>) {
        let k = self.zeros.len();
        let s = self.scale;
        let n2: T = self.monic.iter().map(|c| c.norm_sqr()).sum();
        let proj: T = self.monic.iter().zip(g_x).map(|(c, g)| (c.conj() * g).re).sum();
        let g_c: Vec<Complex<T>> = self
            .monic
            .iter()
            .zip(g_x)
            .map(|(&c, &g)| g * s - c * (s * proj / n2))
            .collect();
        let mut others = Vec::with_capacity(k.saturating_sub(1));
        for j in 0..k {
            others.clear();
            others.extend(self.zeros.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, &z)| z));
            let q = expand_monic(&others);
            // d c_i / d alpha_j = -q_i
            let g_a = -q.iter().zip(&g_c).fold(czero::<T>(), |acc, (qi, gi)| acc + qi.conj() * gi);
            let ray = Complex::from_polar(T::one(), self.phases[j]);
            let d_r = if self.bits[j] == 1 { ray } else { -ray / (self.radius * self.radius) };
            acc.radius += (d_r.conj() * g_a).re;
            let d_t = Complex::new(T::zero(), T::one()) * self.zeros[j];
            acc.phases[j] += (d_t.conj() * g_a).re;
        }
    }
}

fn horner_d<T: Real>(coeffs: &[Complex<T>], z: Complex<T>) -> (Complex<T>, Complex<T>) {
    let mut v = czero();
    let mut d = czero();
    for &c in coeffs.iter().rev() {
        d = d * z + v;
        v = v * z + c;
    }
    (v, d)
}

fn unit_or_zero<T: Real>(u: Complex<T>) -> Complex<T> {
    let n = u.norm();
    if n > T::zero() {
        u / n
    } else {
        czero()
    }
}

/// Hinge loss summed over the `K` rays of one received block, with its
/// gradient on the block (`G_y`) and on `(R, theta)` through the decoder.
pub fn dizet_sample_backward<T: Real>(
    y: &[Complex<T>],
    radius: T,
    phases: &[T],
    bits: &[u8],
    margin: T,
    orientation: LabelOrientation,
) -> (T, Vec<Complex<T>>, ConstGrad<T>) {
    let lt1 = (y.len() - 1) as i32;
    let rpow = radius.powi(lt1);
    let mut g_y = vec![czero::<T>(); y.len()];
    let mut g = ConstGrad::zeros(phases.len());
    let mut loss = T::zero();
    let jay = Complex::new(T::zero(), T::one());
    for (k, (&theta, &b)) in phases.iter().zip(bits).enumerate() {
        let ray = Complex::from_polar(T::one(), theta);
        let z1 = ray * radius;
        let z2 = ray / radius;
        let (u1, d1) = horner_d(y, z1);
        let (u2, d2) = horner_d(y, z2);
        let tau = u1.norm() - rpow * u2.norm();
        let label = orientation.label::<T>(b);
        loss += hinge_loss(tau, label, margin);
        let gt = hinge_grad(tau, label, margin);
        if gt == T::zero() {
            continue;
        }
        let g_u1 = unit_or_zero(u1) * gt;
        let g_u2 = unit_or_zero(u2) * (-gt * rpow);
        g.radius -= gt * T::lit(f64::from(lt1)) * radius.powi(lt1 - 1) * u2.norm();
        let (mut p1, mut p2) = (Complex::new(T::one(), T::zero()), Complex::new(T::one(), T::zero()));
        for gy in g_y.iter_mut() {
            *gy += p1.conj() * g_u1 + p2.conj() * g_u2;
            p1 = p1 * z1;
            p2 = p2 * z2;
        }
        let g_z1 = d1.conj() * g_u1;
        let g_z2 = d2.conj() * g_u2;
        g.radius += (ray.conj() * g_z1).re - ((ray / (radius * radius)).conj() * g_z2).re;
        g.phases[k] += ((jay * z1).conj() * g_z1).re + ((jay * z2).conj() * g_z2).re;
    }
    (loss, g_y, g)
}

/// Mean loss and gradient with respect to the constellation parameters
/// `[rho, theta...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DizetGrad<T: Real> {
    pub loss: T,
    pub grad: Vec<T>,
}

/// Mean hinge loss over `B K` decisions and its gradient. Per-sample work
/// runs on the rayon pool; partial results are summed in sample order so the
/// result does not depend on the thread count.
pub fn dizet_loss_grad<T: Real>(
    params: &ConstellationParams<T>,
    samples: &[TrainSample<T>],
    margin: T,
    orientation: LabelOrientation,
) -> DizetGrad<T> {
    let radius = params.radius();
    let k = params.k();
    let parts: Vec<(T, ConstGrad<T>)> = samples
        .par_iter()
        .map(|s| {
            let tape = encode_forward(radius, &params.phases, &s.message);
            let y: Vec<Complex<T>> = tape.x.iter().zip(&s.noise).map(|(&a, &w)| a + w).collect();
            let (loss, g_y, mut g) = dizet_sample_backward(&y, radius, &params.phases, s.message.bits(), margin, orientation);
            tape.backward(&g_y, &mut g);
            (loss, g)
        })
        .collect();
    let mut total = T::zero();
    let mut acc = ConstGrad::zeros(k);
    for (l, g) in &parts {
        total += *l;
        acc.add(g);
    }
    let w = T::lit((samples.len() * k).max(1) as f64).recip();
    DizetGrad {
        loss: total * w,
        grad: acc.to_param_grad(params).into_iter().map(|v| v * w).collect(),
    }
}

/// Mean BCE loss and gradients for the neural path.
#[derive(Debug, Clone)]
pub struct NnGrad<T: Real> {
    pub loss: T,
    /// `[rho, theta...]`, present when the constellation is trainable.
    pub constellation: Option<Vec<T>>,
    pub mlp: MlpGrads<T>,
    pub used: usize,
    /// Samples left out of the mean because their roots were unusable.
    pub skipped: usize,
}

struct Prepared<T: Real> {
    tape: EncodeTape<T>,
    jac: Option<crate::poly::EigenJacobian<T>>,
    features: Vec<T>,
    bits: Vec<u8>,
}

fn prepare<T: Real>(params: &ConstellationParams<T>, s: &TrainSample<T>, radius: T, with_jac: bool) -> Result<Prepared<T>> {
    let tape = encode_forward(radius, &params.phases, &s.message);
    let y = ComplexPoly::new(tape.x.iter().zip(&s.noise).map(|(&a, &w)| a + w).collect())?;
    let (zs, jac) = if with_jac {
        let j = eigenvalue_jacobian(&y)?;
        (j.roots.clone(), Some(j))
    } else {
        (roots(&y)?, None)
    };
    let features = crate::decoders::real_bijection(&zs);
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("roots".into()));
    }
    Ok(Prepared {
        tape,
        jac,
        features,
        bits: s.message.bits().to_vec(),
    })
}

/// Forward and backward through encoder, eigenvalues and MLP. Dropout masks
/// (when `mlp.training`) come from `rng`. With `train_constellation` unset
/// the eigenvalue Jacobian is skipped and only the MLP receives gradients.
pub fn nn_loss_grad<T: Real, R: Rng + ?Sized>(
    params: &ConstellationParams<T>,
    mlp: &MlpParams<T>,
    samples: &[TrainSample<T>],
    train_constellation: bool,
    rng: &mut R,
) -> Result<NnGrad<T>> {
    let k = params.k();
    let radius = params.radius();
    let prepared: Vec<Result<Prepared<T>>> = samples
        .par_iter()
        .map(|s| prepare(params, s, radius, train_constellation))
        .collect();
    let mut ok: Vec<Prepared<T>> = Vec::with_capacity(samples.len());
    let mut skipped = 0;
    for p in prepared {
        match p {
            Ok(p) => ok.push(p),
            Err(Error::DegenerateSpectrum(_) | Error::DegeneratePolynomial(_) | Error::NoConvergence(_) | Error::NonFinite(_)) => {
                skipped += 1
            }
            Err(e) => return Err(e),
        }
    }
    let n = ok.len();
    let zero_grads = || MlpGrads {
        layers: mlp.layers.clone().map(|mut d| {
            d.w.fill(T::zero());
            d.b.fill(T::zero());
            d
        }),
    };
    if n == 0 {
        return Ok(NnGrad {
            loss: T::zero(),
            constellation: train_constellation.then(|| vec![T::zero(); k + 1]),
            mlp: zero_grads(),
            used: 0,
            skipped,
        });
    }
    let x = Array2::from_shape_fn((n, 2 * k), |(i, j)| ok[i].features[j]);
    let (logits, cache) = mlp.forward_cached(x.view(), rng)?;
    let w = T::lit((n * k) as f64).recip();
    let mut loss = T::zero();
    let mut g_out = Array2::zeros((n, k));
    for i in 0..n {
        for j in 0..k {
            let p = logits[[i, j]];
            let b = ok[i].bits[j];
            loss += bce_loss(p, b);
            g_out[[i, j]] = bce_grad(p, b) * w;
        }
    }
    let (mlp_grads, g_in) = mlp.backward(&cache, g_out.view());
    let constellation = if train_constellation {
        let parts: Vec<ConstGrad<T>> = ok
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let g_roots: Vec<Complex<T>> = (0..k).map(|r| Complex::new(g_in[[i, 2 * r]], g_in[[i, 2 * r + 1]])).collect();
                let g_y = p.jac.as_ref().expect("jacobian requested").pullback(&g_roots);
                let mut g = ConstGrad::zeros(k);
                p.tape.backward(&g_y, &mut g);
                g
            })
            .collect();
        let mut acc = ConstGrad::zeros(k);
        for g in &parts {
            acc.add(g);
        }
        Some(acc.to_param_grad(params))
    } else {
        None
    };
    Ok(NnGrad {
        loss: loss * w,
        constellation,
        mlp: mlp_grads,
        used: n,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::{encode, Constellation};
    use crate::decoders::dizet_tau;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_samples(k: usize, n: usize, var: f64, rng: &mut ChaCha8Rng) -> Vec<TrainSample<f64>> {
        (0..n)
            .map(|_| TrainSample {
                message: BitMessage::from_index(rng.gen_range(0..1 << k), k),
                noise: (0..=k).map(|_| crate::channel::complex_normal(var, rng)).collect(),
            })
            .collect()
    }

    /// Loss through the public forward operations only.
    fn dizet_loss_ref(v: &[f64], samples: &[TrainSample<f64>]) -> f64 {
        let p = ConstellationParams::from_slice(v);
        let c = Constellation::new(p.radius(), p.phases.clone()).unwrap();
        let k = c.k();
        let mut tot = 0.0;
        for s in samples {
            let x = encode(&s.message, &c).unwrap();
            let y = ComplexPoly::new(x.coeffs().iter().zip(&s.noise).map(|(a, b)| a + b).collect()).unwrap();
            for j in 0..k {
                let t = dizet_tau(&y, &c, j, k + 1).unwrap();
                tot += hinge_loss(t, LabelOrientation::Consistent.label(s.message.bits()[j]), 1.0);
            }
        }
        tot / (samples.len() * k) as f64
    }

    fn fd(f: impl Fn(&[f64]) -> f64, v: &[f64], h: f64) -> Vec<f64> {
        (0..v.len())
            .map(|i| {
                let mut a = v.to_vec();
                let mut b = v.to_vec();
                a[i] += h;
                b[i] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    fn rel(a: &[f64], b: &[f64]) -> f64 {
        let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let n: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        d / n.max(1e-12)
    }

    #[test]
    fn ray_magnitude_derivative_in_radius() {
        let c = Constellation::<f64>::canonical(5, 0.5).unwrap();
        let y = encode(&BitMessage::from_index(9, 5), &c).unwrap();
        let f = |r: f64| y.eval(Complex::from_polar(r, 0.4)).norm();
        let r = 1.2;
        let (u, d) = horner_d(y.coeffs(), Complex::from_polar(r, 0.4));
        let analytic = ((Complex::from_polar(1.0, 0.4)).conj() * (d.conj() * unit_or_zero(u))).re;
        let fdv = (f(r + 1e-6) - f(r - 1e-6)) / 2e-6;
        assert!((analytic - fdv).abs() <= 1e-4 * fdv.abs());
    }

    #[test]
    fn encode_tape_matches_encode() {
        let c = Constellation::<f64>::canonical(6, 0.7).unwrap();
        let m = BitMessage::from_index(37, 6);
        let t = encode_forward(c.radius(), c.phases(), &m);
        let x = encode(&m, &c).unwrap();
        for (a, b) in t.x.iter().zip(x.coeffs()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn encoder_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = 5;
        let m = BitMessage::from_index(19, k);
        let g_x: Vec<Complex<f64>> = (0..=k).map(|_| Complex::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
        let v: Vec<f64> = std::iter::once(1.3).chain((0..k).map(|i| 0.3 + 1.1 * i as f64)).collect();
        let f = |v: &[f64]| {
            let t = encode_forward(v[0], &v[1..], &m);
            t.x.iter().zip(&g_x).map(|(x, g)| x.re * g.re + x.im * g.im).sum::<f64>()
        };
        let t = encode_forward(v[0], &v[1..], &m);
        let mut acc = ConstGrad::zeros(k);
        t.backward(&g_x, &mut acc);
        let a: Vec<f64> = std::iter::once(acc.radius).chain(acc.phases).collect();
        assert!(rel(&a, &fd(f, &v, 1e-6)) < 1e-7);
    }

    #[test]
    fn dizet_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let k = 4;
            let samples = random_samples(k, 8, 0.3, &mut rng);
            let mut params = ConstellationParams::<f64>::initial(k).unwrap();
            params.rho += rng.gen_range(-0.5..0.5);
            for p in &mut params.phases {
                *p += rng.gen_range(-0.2..0.2);
            }
            let g = dizet_loss_grad(&params, &samples, 1.0, LabelOrientation::Consistent);
            let v = params.to_vec();
            assert!((g.loss - dizet_loss_ref(&v, &samples)).abs() < 1e-12);
            assert!(rel(&g.grad, &fd(|v| dizet_loss_ref(v, &samples), &v, 1e-6)) < 1e-4);
        }
    }

    #[test]
    fn nn_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = 4;
        let samples = random_samples(k, 4, 0.2, &mut rng);
        let params = ConstellationParams::<f64>::initial(k).unwrap();
        let mut mlp = MlpParams::<f64>::random(k, 8, &mut rng).unwrap();
        mlp.training = false;
        let g = nn_loss_grad(&params, &mlp, &samples, true, &mut rng).unwrap();
        assert_eq!(g.used, 4);
        let loss_ref = |v: &[f64], mlp: &MlpParams<f64>| {
            let p = ConstellationParams::from_slice(v);
            let c = Constellation::new(p.radius(), p.phases.clone()).unwrap();
            let mut tot = 0.0;
            for s in &samples {
                let x = encode(&s.message, &c).unwrap();
                let y = ComplexPoly::new(x.coeffs().iter().zip(&s.noise).map(|(a, b)| a + b).collect()).unwrap();
                let logits = crate::decoders::nn_logits(&y, mlp, k).unwrap();
                for (j, &p) in logits.0.iter().enumerate() {
                    tot += bce_loss(p, s.message.bits()[j]);
                }
            }
            tot / (samples.len() * k) as f64
        };
        let v = params.to_vec();
        assert!((g.loss - loss_ref(&v, &mlp)).abs() < 1e-12);
        let fd_c = fd(|v| loss_ref(v, &mlp), &v, 1e-6);
        assert!(rel(g.constellation.as_ref().unwrap(), &fd_c) < 1e-3);

        let flat: Vec<f64> = g.mlp.slices().concat();
        let mut fd_m = Vec::new();
        let n_tensors = 6;
        for t in 0..n_tensors {
            let len = mlp.clone().slices_mut()[t].len();
            for i in 0..len {
                let bump = |h: f64| {
                    let mut m = mlp.clone();
                    m.slices_mut()[t][i] += h;
                    loss_ref(&v, &m)
                };
                fd_m.push((bump(1e-6) - bump(-1e-6)) / 2e-6);
            }
        }
        assert!(rel(&flat, &fd_m) < 1e-3);
    }

    #[test]
    fn frozen_constellation_skips_its_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let samples = random_samples(3, 16, 0.2, &mut rng);
        let params = ConstellationParams::<f64>::initial(3).unwrap();
        let mlp = MlpParams::<f64>::random(3, 8, &mut rng).unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        let a = nn_loss_grad(&params, &mlp, &samples, true, &mut r1).unwrap();
        let b = nn_loss_grad(&params, &mlp, &samples, false, &mut r2).unwrap();
        assert!(b.constellation.is_none());
        assert_eq!(a.mlp, b.mlp);
        assert_eq!(a.loss, b.loss);
    }
}
