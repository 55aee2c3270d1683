//! Zero-input neural decoder: a three-layer perceptron with leaky-ReLU hidden
//! activations and dropout, mapping `2K` real inputs to `K` bit logits.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constellation::BitMessage;
use crate::error::{invalid, Error, Result};
use crate::poly::{roots, ComplexPoly, ZeroPattern};
use crate::scalar::Real;

pub const DEFAULT_SLOPE: f64 = 0.01;
pub const DEFAULT_DROPOUT: f64 = 0.25;

/// Largest K the neural decoder is meant for.
pub const MAX_NN_K: usize = 16;

/// Interleave real and imaginary parts: `[Re z0, Im z0, Re z1, Im z1, ...]`.
pub fn real_bijection<T: Real>(zeros: &ZeroPattern<T>) -> Vec<T> {
    zeros.as_slice().iter().flat_map(|z| [z.re, z.im]).collect()
}

/// Inverse of [`real_bijection`].
pub fn real_bijection_inv<T: Real>(x: &[T]) -> Result<ZeroPattern<T>> {
    if x.len() % 2 != 0 {
        return Err(invalid("real vector must have even length"));
    }
    Ok(ZeroPattern(x.chunks(2).map(|p| Complex::new(p[0], p[1])).collect()))
}

/// Per-bit logarithmic odds.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector<T: Real>(pub Vec<T>);

impl<T: Real> LogitVector<T> {
    /// Bit `k` is 1 iff `p_k > 0`; zero logits decode to 0.
    pub fn hard_decision(&self) -> BitMessage {
        BitMessage::new(self.0.iter().map(|&p| u8::from(p > T::zero())).collect())
            .expect("hard decisions are binary")
    }
}

/// Affine layer `out = W x + b` with `W` stored `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T: Real> {
    pub w: Array2<T>,
    pub b: Array1<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            w: Array2::zeros((outputs, inputs)),
            b: Array1::zeros(outputs),
        }
    }

    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and biases.
    pub fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || T::lit(rng.gen_range(-bound..bound));
        Self {
            w: Array2::from_shape_fn((outputs, inputs), |_| draw()),
            b: Array1::from_shape_fn(outputs, |_| draw()),
        }
    }

    fn apply(&self, x: &ArrayView2<T>) -> Array2<T> {
        x.dot(&self.w.t()) + &self.b
    }
}

/// Weights of the three dense layers plus activation and dropout settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T: Real> {
    k: usize,
    l_hidden: usize,
    pub slope: T,
    pub dropout: T,
    /// Dropout masks are drawn only while this is set.
    pub training: bool,
    pub layers: [Dense<T>; 3],
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Real> {
    input: Array2<T>,
    pre: [Array2<T>; 2],
    masks: [Option<Array2<T>>; 2],
    post: [Array2<T>; 2],
}

/// Gradients with the same layout as [`MlpParams::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads<T: Real> {
    pub layers: [Dense<T>; 3],
}

impl<T: Real> MlpGrads<T> {
    pub fn slices(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|d| [d.w.as_slice().expect("standard layout"), d.b.as_slice().expect("standard layout")])
            .collect()
    }

    pub fn scale(&mut self, s: T) {
        for d in &mut self.layers {
            d.w.mapv_inplace(|v| v * s);
            d.b.mapv_inplace(|v| v * s);
        }
    }
}

impl<T: Real> MlpParams<T> {
    fn validate_dims(k: usize, l_hidden: usize) -> Result<()> {
        if k == 0 || l_hidden == 0 {
            return Err(invalid(format!("MLP needs K >= 1 and l_hidden >= 1 (got {k}, {l_hidden})")));
        }
        Ok(())
    }

    pub fn zeros(k: usize, l_hidden: usize) -> Result<Self> {
        Self::validate_dims(k, l_hidden)?;
        Ok(Self {
            k,
            l_hidden,
            slope: T::lit(DEFAULT_SLOPE),
            dropout: T::lit(DEFAULT_DROPOUT),
            training: false,
            layers: [
                Dense::zeros(2 * k, l_hidden),
                Dense::zeros(l_hidden, l_hidden),
                Dense::zeros(l_hidden, k),
            ],
        })
    }

    pub fn random<R: Rng + ?Sized>(k: usize, l_hidden: usize, rng: &mut R) -> Result<Self> {
        Self::validate_dims(k, l_hidden)?;
        Ok(Self {
            k,
            l_hidden,
            slope: T::lit(DEFAULT_SLOPE),
            dropout: T::lit(DEFAULT_DROPOUT),
            training: false,
            layers: [
                Dense::random(2 * k, l_hidden, rng),
                Dense::random(l_hidden, l_hidden, rng),
                Dense::random(l_hidden, k, rng),
            ],
        })
    }

    /// Build from explicit layers, checking every shape.
    pub fn from_layers(layers: [Dense<T>; 3], slope: T, dropout: T) -> Result<Self> {
        let k = layers[2].w.nrows();
        let l_hidden = layers[0].w.nrows();
        Self::validate_dims(k, l_hidden)?;
        let expect = [(l_hidden, 2 * k), (l_hidden, l_hidden), (k, l_hidden)];
        for (i, (d, &(o, n))) in layers.iter().zip(&expect).enumerate() {
            if d.w.dim() != (o, n) || d.b.len() != o {
                return Err(invalid(format!(
                    "layer {i}: expected weights {o}x{n} and {o} biases, got {:?} and {}",
                    d.w.dim(),
                    d.b.len()
                )));
            }
        }
        if !(dropout >= T::zero() && dropout < T::one()) {
            return Err(invalid("dropout rate must be in [0, 1)"));
        }
        Ok(Self {
            k,
            l_hidden,
            slope,
            dropout,
            training: false,
            layers,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn l_hidden(&self) -> usize {
        self.l_hidden
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|d| d.w.len() + d.b.len()).sum()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|d| {
                [
                    d.w.as_slice_mut().expect("standard layout"),
                    d.b.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    fn leaky(&self, v: T) -> T {
        if v > T::zero() {
            v
        } else {
            v * self.slope
        }
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != 2 * self.k {
            return Err(invalid(format!("MLP input width {} != 2K = {}", x.ncols(), 2 * self.k)));
        }
        Ok(())
    }

    /// Batched forward pass keeping intermediates. Dropout masks are drawn
    /// from `rng` only when `training` is set, scaled by `1 / (1 - rate)`.
    pub fn forward_cached<R: Rng + ?Sized>(&self, x: ArrayView2<T>, rng: &mut R) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.check_input(&x)?;
        let keep = T::one() - self.dropout;
        let scale = keep.recip();
        let mut cur = x.to_owned();
        let mut pre: Vec<Array2<T>> = Vec::with_capacity(2);
        let mut masks: Vec<Option<Array2<T>>> = Vec::with_capacity(2);
        let mut post: Vec<Array2<T>> = Vec::with_capacity(2);
        for layer in &self.layers[..2] {
            let h = layer.apply(&cur.view());
            let mut a = h.mapv(|v| self.leaky(v));
            let mask = if self.training && self.dropout > T::zero() {
                let m = Array2::from_shape_fn(a.dim(), |_| if T::unit_uniform(rng) < keep { scale } else { T::zero() });
                a = a * &m;
                Some(m)
            } else {
                None
            };
            pre.push(h);
            masks.push(mask);
            post.push(a.clone());
            cur = a;
        }
        let out = self.layers[2].apply(&cur.view());
        let [p0, p1]: [Array2<T>; 2] = pre.try_into().expect("two hidden layers");
        let [m0, m1]: [Option<Array2<T>>; 2] = masks.try_into().expect("two hidden layers");
        let [a0, a1]: [Array2<T>; 2] = post.try_into().expect("two hidden layers");
        Ok((
            out,
            ForwardCache {
                input: x.to_owned(),
                pre: [p0, p1],
                masks: [m0, m1],
                post: [a0, a1],
            },
        ))
    }

    /// Batched forward pass. In inference mode this is deterministic.
    pub fn forward<R: Rng + ?Sized>(&self, x: ArrayView2<T>, rng: &mut R) -> Result<Array2<T>> {
        self.check_input(&x)?;
        if !self.training {
            return self.infer(x);
        }
        Ok(self.forward_cached(x, rng)?.0)
    }

    /// Inference-mode batched forward pass regardless of `training`.
    pub fn infer(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(&x)?;
        let mut h = self.layers[0].apply(&x);
        h.mapv_inplace(|v| self.leaky(v));
        let mut h = self.layers[1].apply(&h.view());
        h.mapv_inplace(|v| self.leaky(v));
        Ok(self.layers[2].apply(&h.view()))
    }

    /// Reverse pass from `d loss / d logits` to parameter and input gradients.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_out: ArrayView2<T>) -> (MlpGrads<T>, Array2<T>) {
        let g2 = Dense {
            w: grad_out.t().dot(&cache.post[1]),
            b: grad_out.sum_axis(Axis(0)),
        };
        let mut d = grad_out.dot(&self.layers[2].w);
        let mut grads: Vec<Dense<T>> = Vec::with_capacity(3);
        for i in (0..2).rev() {
            if let Some(m) = &cache.masks[i] {
                d = d * m;
            }
            ndarray::Zip::from(&mut d).and(&cache.pre[i]).for_each(|g, &h| {
                if h <= T::zero() {
                    *g = *g * self.slope;
                }
            });
            let input = if i == 0 { &cache.input } else { &cache.post[0] };
            grads.push(Dense {
                w: d.t().dot(input),
                b: d.sum_axis(Axis(0)),
            });
            d = d.dot(&self.layers[i].w);
        }
        let g1 = grads.pop().expect("layer 0");
        let g0 = grads.pop().expect("layer 1");
        // grads was filled in reverse: index 0 holds layer 1, index 1 holds layer 0.
        (MlpGrads { layers: [g1, g0, g2] }, d)
    }

    pub fn cast<U: Real>(&self) -> MlpParams<U> {
        let c = |d: &Dense<T>| Dense {
            w: d.w.mapv(|v| U::lit(v.as_f64())),
            b: d.b.mapv(|v| U::lit(v.as_f64())),
        };
        MlpParams {
            k: self.k,
            l_hidden: self.l_hidden,
            slope: U::lit(self.slope.as_f64()),
            dropout: U::lit(self.dropout.as_f64()),
            training: self.training,
            layers: [c(&self.layers[0]), c(&self.layers[1]), c(&self.layers[2])],
        }
    }
}

/// Single-input forward pass.
pub fn mlp_forward<T: Real, R: Rng + ?Sized>(x: &[T], params: &MlpParams<T>, rng: &mut R) -> Result<LogitVector<T>> {
    let view = ArrayView2::from_shape((1, x.len()), x).map_err(|e| invalid(e.to_string()))?;
    let out = params.forward(view, rng)?;
    Ok(LogitVector(out.row(0).to_vec()))
}

/// Roots, real bijection, inference-mode MLP, hard decision.
pub fn nn_decode<T: Real>(y: &ComplexPoly<T>, params: &MlpParams<T>, k: usize) -> Result<BitMessage> {
    Ok(nn_logits(y, params, k)?.hard_decision())
}

pub fn nn_logits<T: Real>(y: &ComplexPoly<T>, params: &MlpParams<T>, k: usize) -> Result<LogitVector<T>> {
    if y.degree() != k || params.k() != k {
        return Err(invalid(format!(
            "degree {} / decoder K {} do not match K = {k}",
            y.degree(),
            params.k()
        )));
    }
    let x = real_bijection(&roots(y)?);
    let view = ArrayView2::from_shape((1, x.len()), &x).map_err(|e| invalid(e.to_string()))?;
    Ok(LogitVector(params.infer(view)?.row(0).to_vec()))
}

/// Decode many received blocks with one batched MLP evaluation. Blocks whose
/// roots cannot be computed yield `Err` in their slot.
pub fn nn_decode_batch<T: Real>(ys: &[ComplexPoly<T>], params: &MlpParams<T>) -> Vec<Result<BitMessage>> {
    let k = params.k();
    let mut rows: Vec<T> = Vec::with_capacity(ys.len() * 2 * k);
    let mut status: Vec<Result<()>> = Vec::with_capacity(ys.len());
    for y in ys {
        if y.degree() != k {
            status.push(Err(invalid(format!("degree {} != K = {k}", y.degree()))));
            continue;
        }
        match roots(y) {
            Ok(z) => {
                rows.extend(real_bijection(&z));
                status.push(Ok(()));
            }
            Err(e) => status.push(Err(e)),
        }
    }
    let n_ok = rows.len() / (2 * k);
    let logits = if n_ok > 0 {
        match Array2::from_shape_vec((n_ok, 2 * k), rows).map_err(|e| invalid(e.to_string())).and_then(|x| params.infer(x.view())) {
            Ok(l) => Some(l),
            Err(e) => return ys.iter().map(|_| Err(Error::InvalidArgument(e.to_string()))).collect(),
        }
    } else {
        None
    };
    let mut next = 0;
    status
        .into_iter()
        .map(|s| {
            s.map(|()| {
                let row = logits.as_ref().expect("at least one decoded row").row(next);
                next += 1;
                LogitVector(row.to_vec()).hard_decision()
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseFile {
    /// `w[o][i]` multiplies input `i` into output `o`.
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

/// JSON checkpoint form of [`MlpParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpFile {
    #[serde(default = "one")]
    pub format_version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub l_hidden: usize,
    pub slope: f64,
    pub dropout: f64,
    pub layers: Vec<DenseFile>,
}

fn one() -> u32 {
    1
}

impl<T: Real> MlpParams<T> {
    pub fn to_file(&self) -> MlpFile {
        MlpFile {
            format_version: 1,
            k: self.k,
            l_hidden: self.l_hidden,
            slope: self.slope.as_f64(),
            dropout: self.dropout.as_f64(),
            layers: self
                .layers
                .iter()
                .map(|d| DenseFile {
                    w: d.w.outer_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect(),
                    b: d.b.iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        }
    }

    pub fn from_file(f: &MlpFile) -> Result<Self> {
        if f.layers.len() != 3 {
            return Err(invalid(format!("expected 3 layers, found {}", f.layers.len())));
        }
        let mut dense = Vec::with_capacity(3);
        for (i, l) in f.layers.iter().enumerate() {
            let rows = l.w.len();
            let cols = l.w.first().map_or(0, |r| r.len());
            if l.w.iter().any(|r| r.len() != cols) {
                return Err(invalid(format!("layer {i}: ragged weight matrix")));
            }
            let flat: Vec<T> = l.w.iter().flatten().map(|&v| T::lit(v)).collect();
            dense.push(Dense {
                w: Array2::from_shape_vec((rows, cols), flat).map_err(|e| invalid(e.to_string()))?,
                b: Array1::from_iter(l.b.iter().map(|&v| T::lit(v))),
            });
        }
        let layers: [Dense<T>; 3] = dense.try_into().expect("three layers");
        let p = Self::from_layers(layers, T::lit(f.slope), T::lit(f.dropout))?;
        if p.k != f.k || p.l_hidden != f.l_hidden {
            return Err(invalid(format!(
                "header says K = {}, l_hidden = {} but layers imply K = {}, l_hidden = {}",
                f.k, f.l_hidden, p.k, p.l_hidden
            )));
        }
        Ok(p)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }
}
