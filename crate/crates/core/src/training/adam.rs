use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Adam with bias correction. Moments are kept per parameter tensor in the
/// order the tensors are passed to [`AdamState::step`].
#[derive(Debug, Clone)]
pub struct AdamState<T: Real> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(shapes: &[usize]) -> Self {
        Self {
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            step: 0,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. Rejects non-finite gradients before touching anything.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]], lr: T) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(invalid("Adam: tensor count mismatch"));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(invalid(format!("Adam: shape mismatch in tensor {i}")));
            }
            if let Some(j) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("gradient tensor {i} entry {j}")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let one = T::one();
        let c1 = one - self.beta1.powi(t);
        let c2 = one - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = self.beta1 * m[j] + (one - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (one - self.beta2) * gj * gj;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                p[j] -= lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut a = AdamState::<f64>::new(&[1]);
        let mut p = [1.0];
        a.step(&mut [&mut p], &[&[0.3]], 0.01).unwrap();
        assert!((p[0] - (1.0 - 0.01 * 0.3 / (0.3 + 1e-8))).abs() < 1e-15);
        let mut q = [1.0];
        let mut b = AdamState::<f64>::new(&[1]);
        b.step(&mut [&mut q], &[&[-5.0]], 0.01).unwrap();
        assert!((q[0] - 1.01).abs() < 1e-9);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut a = AdamState::<f64>::new(&[3]);
        let mut p = [1.0, -2.0, 0.5];
        for _ in 0..5 {
            a.step(&mut [&mut p], &[&[0.0; 3]], 0.1).unwrap();
        }
        assert_eq!(p, [1.0, -2.0, 0.5]);
    }

    #[test]
    fn identical_problems_identical_trajectories() {
        let run = || {
            let mut a = AdamState::<f64>::new(&[1]);
            let mut p = [3.0];
            let mut traj = vec![];
            for i in 0..200 {
                let g = [2.0 * (p[0] - 1.0)];
                a.step(&mut [&mut p], &[&g], 0.05 / (1.0 + i as f64)).unwrap();
                traj.push(p[0].to_bits());
            }
            traj
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut a = AdamState::<f64>::new(&[2]);
        let mut p = [3.0, -4.0];
        for _ in 0..3000 {
            let g = [2.0 * (p[0] - 1.0), 2.0 * (p[1] + 2.0)];
            a.step(&mut [&mut p], &[&g], 0.01).unwrap();
        }
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 2.0).abs() < 1e-3);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut a = AdamState::<f64>::new(&[2]);
        let mut p = [1.0, 1.0];
        assert!(matches!(a.step(&mut [&mut p], &[&[0.1, f64::NAN]], 0.1), Err(Error::NonFinite(_))));
        assert_eq!(p, [1.0, 1.0]);
        assert_eq!(a.steps(), 0);
    }
}
