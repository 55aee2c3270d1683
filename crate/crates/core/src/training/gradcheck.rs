//! Central finite-difference checks of every analytic gradient used in
//! training. Forward values are recomputed through the public forward
//! operations (encode, `dizet_tau`, `roots`, inference MLP), never through the
//! reverse-pass code under test.

use ndarray::Array2;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{bce_loss, dizet_loss_grad, draw_samples, hinge_loss, nn_loss_grad, LabelOrientation, TrainSample};
use crate::constellation::{encode, Constellation, ConstellationParams};
use crate::decoders::{dizet_tau, nn_logits, MlpParams};
use crate::poly::{eigenvalue_jacobian, roots, ComplexPoly};

pub const FD_STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct GradCheck {
    pub name: String,
    pub instances: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

fn central(f: impl Fn(&[f64]) -> f64, v: &[f64]) -> Vec<f64> {
    let mut a = v.to_vec();
    (0..v.len())
        .map(|i| {
            a[i] = v[i] + FD_STEP;
            let hi = f(&a);
            a[i] = v[i] - FD_STEP;
            let lo = f(&a);
            a[i] = v[i];
            (hi - lo) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `|a - b| / |b|` in the Euclidean norm.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / n.max(1e-12)
}

fn received(c: &Constellation<f64>, s: &TrainSample<f64>) -> ComplexPoly<f64> {
    let x = encode(&s.message, c).expect("valid message");
    ComplexPoly::from_coeffs_unchecked(x.coeffs().iter().zip(&s.noise).map(|(a, w)| a + w).collect())
}

fn perturbed_params(k: usize, rng: &mut ChaCha8Rng) -> ConstellationParams<f64> {
    let mut p = ConstellationParams::initial(k).expect("K >= 2");
    p.rho += rng.gen_range(-0.5..0.5);
    for t in &mut p.phases {
        *t += rng.gen_range(-0.2..0.2);
    }
    p
}

fn hinge_reference(v: &[f64], samples: &[TrainSample<f64>]) -> f64 {
    let p = ConstellationParams::from_slice(v);
    let c = Constellation::new(p.radius(), p.phases.clone()).expect("valid constellation");
    let k = c.k();
    let mut tot = 0.0;
    for s in samples {
        let y = received(&c, s);
        for j in 0..k {
            let t = dizet_tau(&y, &c, j, k + 1).expect("shape");
            tot += hinge_loss(t, LabelOrientation::Consistent.label(s.message.bits()[j]), 1.0);
        }
    }
    tot / (samples.len() * k) as f64
}

/// Mean hinge loss with respect to `(rho, theta)`; K in 2..=4, batch of 8.
pub fn check_hinge_path(instances: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let k = rng.gen_range(2..=4);
        let samples = draw_samples(k, 8, 0.3, &mut rng);
        let params = perturbed_params(k, &mut rng);
        let g = dizet_loss_grad(&params, &samples, 1.0, LabelOrientation::Consistent);
        let fd = central(|v| hinge_reference(v, &samples), &params.to_vec());
        worst = worst.max(relative_error(&g.grad, &fd));
    }
    GradCheck {
        name: "hinge path".into(),
        instances,
        max_rel_err: worst,
        tolerance: TOLERANCE,
    }
}

fn bce_reference(v: &[f64], mlp: &MlpParams<f64>, samples: &[TrainSample<f64>]) -> f64 {
    let p = ConstellationParams::from_slice(v);
    let c = Constellation::new(p.radius(), p.phases.clone()).expect("valid constellation");
    let k = c.k();
    let mut tot = 0.0;
    for s in samples {
        let logits = nn_logits(&received(&c, s), mlp, k).expect("roots");
        for (j, &p) in logits.0.iter().enumerate() {
            tot += bce_loss(p, s.message.bits()[j]);
        }
    }
    tot / (samples.len() * k) as f64
}

/// Mean BCE loss with respect to `(rho, theta)` and every MLP weight;
/// K in 2..=4, `l_hidden` 8, batch of 4, dropout off.
pub fn check_bce_path(instances: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let k = rng.gen_range(2..=4);
        let samples = draw_samples(k, 4, 0.2, &mut rng);
        let params = perturbed_params(k, &mut rng);
        let mut mlp = MlpParams::<f64>::random(k, 8, &mut rng).expect("dims");
        mlp.training = false;
        let g = nn_loss_grad(&params, &mlp, &samples, true, &mut rng).expect("forward");
        let v = params.to_vec();
        let mut analytic = g.constellation.clone().expect("requested");
        analytic.extend(g.mlp.slices().concat());
        let mut fd = central(|v| bce_reference(v, &mlp, &samples), &v);
        let n_tensors = mlp.clone().slices_mut().len();
        let mut m = mlp.clone();
        for t in 0..n_tensors {
            let base = m.slices_mut()[t].to_vec();
            fd.extend(central(
                |w| {
                    let mut mm = m.clone();
                    mm.slices_mut()[t].copy_from_slice(w);
                    bce_reference(&v, &mm, &samples)
                },
                &base,
            ));
            m.slices_mut()[t].copy_from_slice(&base);
        }
        worst = worst.max(relative_error(&analytic, &fd));
    }
    GradCheck {
        name: "bce path".into(),
        instances,
        max_rel_err: worst,
        tolerance: TOLERANCE,
    }
}

/// `d root / d y_k` against perturbed root finding with nearest-root
/// tracking, on noisy BMOCZ blocks with K in 2..=4.
pub fn check_eigen_jacobian(instances: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let k = rng.gen_range(2..=4);
        let c = Constellation::<f64>::canonical(k, rng.gen_range(0.3..1.0)).expect("K >= 2");
        let s = &draw_samples(k, 1, 0.1, &mut rng)[0];
        let y = received(&c, s);
        let j = match eigenvalue_jacobian(&y) {
            Ok(j) => j,
            Err(_) => continue,
        };
        let nearest = |rs: &[Complex<f64>], z: Complex<f64>| {
            *rs.iter().min_by(|a, b| (*a - z).norm().total_cmp(&(*b - z).norm())).expect("nonempty")
        };
        let mut analytic = Vec::new();
        let mut fd = Vec::new();
        for kk in 0..=k {
            for dir in [Complex::new(1.0, 0.0), Complex::new(0.0, 1.0)] {
                let shifted = |h: f64| {
                    let mut cs = y.coeffs().to_vec();
                    cs[kk] += dir * h;
                    roots(&ComplexPoly::from_coeffs_unchecked(cs)).expect("roots").0
                };
                let (hi, lo) = (shifted(FD_STEP), shifted(-FD_STEP));
                for (i, &r) in j.roots.as_slice().iter().enumerate() {
                    let d = (nearest(&hi, r) - nearest(&lo, r)) / (2.0 * FD_STEP);
                    let a = j.jac[i][kk] * dir;
                    analytic.extend([a.re, a.im]);
                    fd.extend([d.re, d.im]);
                }
            }
        }
        worst = worst.max(relative_error(&analytic, &fd));
    }
    GradCheck {
        name: "eigenvalue jacobian".into(),
        instances,
        max_rel_err: worst,
        tolerance: TOLERANCE,
    }
}

/// Parameter and input gradients of a random linear functional of the MLP
/// output; K in 2..=4, `l_hidden` in 2..=8, batch of 4.
pub fn check_mlp_backprop(instances: usize, seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let k = rng.gen_range(2..=4);
        let l = rng.gen_range(2..=8);
        let mlp = MlpParams::<f64>::random(k, l, &mut rng).expect("dims");
        let x = Array2::from_shape_fn((4, 2 * k), |_| rng.gen_range(-2.0..2.0));
        let wts = Array2::from_shape_fn((4, k), |_| rng.gen_range(-1.0..1.0));
        let f = |m: &MlpParams<f64>, x: &Array2<f64>| (m.infer(x.view()).expect("dims") * &wts).sum();
        let (_, cache) = mlp.forward_cached(x.view(), &mut rng).expect("dims");
        let (g, g_in) = mlp.backward(&cache, wts.view());
        let mut analytic = g.slices().concat();
        analytic.extend(g_in.iter().copied());
        let mut fd = Vec::new();
        let mut m = mlp.clone();
        for t in 0..6 {
            let base = m.slices_mut()[t].to_vec();
            fd.extend(central(
                |w| {
                    let mut mm = m.clone();
                    mm.slices_mut()[t].copy_from_slice(w);
                    f(&mm, &x)
                },
                &base,
            ));
            m.slices_mut()[t].copy_from_slice(&base);
        }
        let xs = x.iter().copied().collect::<Vec<_>>();
        fd.extend(central(
            |v| f(&mlp, &Array2::from_shape_vec(x.dim(), v.to_vec()).expect("shape")),
            &xs,
        ));
        worst = worst.max(relative_error(&analytic, &fd));
    }
    GradCheck {
        name: "mlp backprop".into(),
        instances,
        max_rel_err: worst,
        tolerance: TOLERANCE,
    }
}

pub fn run_suite(instances: usize, seed: u64) -> Vec<GradCheck> {
    vec![
        check_hinge_path(instances, seed),
        check_bce_path(instances, seed.wrapping_add(1)),
        check_eigen_jacobian(instances, seed.wrapping_add(2)),
        check_mlp_backprop(instances, seed.wrapping_add(3)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_on_a_few_instances() {
        for c in run_suite(5, 42) {
            assert!(c.passed(), "{} max rel err {}", c.name, c.max_rel_err);
        }
    }
}
