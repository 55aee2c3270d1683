//! Learning the zero constellation (and the neural decoder) by gradient
//! descent on sampled noisy blocks.
//!
//! Both procedures draw a fresh batch every epoch: uniform messages, encode
//! with the current constellation, add `CN(0, sigma^2)` noise per coefficient.
//! Gradients come from the hand-written reverse pass in [`grad`].

mod adam;
pub mod gradcheck;
mod grad;
mod loss;

use std::path::Path;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_normal, ebn0_to_noise_var};
use crate::constellation::{encode, BitMessage, Constellation, ConstellationParams};
use crate::decoders::{MlpParams, DEFAULT_DROPOUT, DEFAULT_SLOPE, MAX_NN_K};
use crate::error::{invalid, Error, Result};
use crate::poly::ComplexPoly;
use crate::scalar::Real;

pub use adam::AdamState;
pub use grad::{
    dizet_loss_grad, dizet_sample_backward, encode_forward, nn_loss_grad, ConstGrad, DizetGrad, EncodeTape, NnGrad,
    TrainSample,
};
pub use loss::{bce_grad, bce_loss, hinge_grad, hinge_loss, LabelOrientation};

fn default_batch() -> usize {
    256
}
fn default_ebn0() -> f64 {
    10.0
}
fn default_ebn0_stage2() -> f64 {
    5.0
}
fn default_margin() -> f64 {
    1.0
}
fn default_lr_initial() -> f64 {
    1e-2
}
fn default_lr_final() -> f64 {
    1e-4
}
fn default_lambda() -> f64 {
    0.5
}
fn default_slope() -> f64 {
    DEFAULT_SLOPE
}
fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}

/// Hidden width used when none is configured.
pub fn default_l_hidden(k: usize) -> Option<usize> {
    match k {
        4 => Some(500),
        7 => Some(1000),
        10 => Some(1500),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "B", alias = "batch_size", default = "default_batch")]
    pub batch_size: usize,
    pub n_epoch: usize,
    /// Training Eb/N0; stage 1 for the neural procedure.
    #[serde(default = "default_ebn0")]
    pub ebn0_db: f64,
    #[serde(default = "default_ebn0_stage2")]
    pub ebn0_db_stage2: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default = "default_lr_initial")]
    pub lr_initial: f64,
    #[serde(default = "default_lr_final")]
    pub lr_final: f64,
    #[serde(default)]
    pub l_hidden: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub label_orientation: LabelOrientation,
    /// Canonical-radius parameter of the starting constellation.
    #[serde(default = "default_lambda")]
    pub init_lambda: f64,
    #[serde(default = "default_slope")]
    pub slope: f64,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

impl TrainConfig {
    pub fn dizet(k: usize) -> Self {
        Self {
            k,
            batch_size: default_batch(),
            n_epoch: 30_000,
            ebn0_db: default_ebn0(),
            ebn0_db_stage2: default_ebn0_stage2(),
            margin: default_margin(),
            lr_initial: default_lr_initial(),
            lr_final: default_lr_final(),
            l_hidden: None,
            seed: 0,
            label_orientation: LabelOrientation::Consistent,
            init_lambda: default_lambda(),
            slope: default_slope(),
            dropout: default_dropout(),
        }
    }

    pub fn nn(k: usize) -> Self {
        Self {
            n_epoch: 15_000,
            l_hidden: default_l_hidden(k),
            ..Self::dizet(k)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(invalid(format!("K must be >= 2 (got {})", self.k)));
        }
        if self.batch_size < 1 {
            return Err(invalid("B (batch size) must be >= 1"));
        }
        if self.n_epoch < 1 {
            return Err(invalid("n_epoch must be >= 1"));
        }
        if !(self.lr_final > 0.0 && self.lr_initial >= self.lr_final && self.lr_initial.is_finite()) {
            return Err(invalid(format!(
                "learning rates need lr_initial >= lr_final > 0 (got {}, {})",
                self.lr_initial, self.lr_final
            )));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(invalid(format!("margin t must be > 0 (got {})", self.margin)));
        }
        if !self.ebn0_db.is_finite() || !self.ebn0_db_stage2.is_finite() {
            return Err(invalid("ebn0_db must be finite"));
        }
        if !(self.init_lambda > 0.0) {
            return Err(invalid("init_lambda must be > 0"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid(format!("dropout must lie in [0, 1) (got {})", self.dropout)));
        }
        Ok(())
    }

    /// Extra checks for the neural procedure.
    pub fn validate_nn(&self) -> Result<usize> {
        self.validate()?;
        if self.k > MAX_NN_K {
            return Err(invalid(format!("neural decoder supports K <= {MAX_NN_K} (got {})", self.k)));
        }
        match self.l_hidden {
            Some(0) => Err(invalid("l_hidden must be >= 1")),
            Some(l) => Ok(l),
            None => Err(invalid(format!("l_hidden is required for K = {} (no default)", self.k))),
        }
    }
}

/// `beta_i (beta_f / beta_i)^(epoch / n_epoch)`.
pub fn lr_schedule(epoch: usize, cfg: &TrainConfig) -> f64 {
    if epoch == 0 {
        return cfg.lr_initial;
    }
    if epoch >= cfg.n_epoch {
        return cfg.lr_final;
    }
    cfg.lr_initial * (cfg.lr_final / cfg.lr_initial).powf(epoch as f64 / cfg.n_epoch as f64)
}

/// Uniform messages with scaled `CN(0, var)` noise, in draw order.
pub fn draw_samples<T: Real, R: Rng + ?Sized>(k: usize, n: usize, var: T, rng: &mut R) -> Vec<TrainSample<T>> {
    (0..n)
        .map(|_| {
            let bits = (0..k).map(|_| u8::from(rng.gen::<bool>())).collect();
            TrainSample {
                message: BitMessage::new(bits).expect("bits are 0/1"),
                noise: (0..=k).map(|_| complex_normal(var, rng)).collect(),
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct TrainBatch<T: Real> {
    pub messages: Vec<BitMessage>,
    pub received: Vec<ComplexPoly<T>>,
}

/// One batch at `cfg.ebn0_db`, drawn exactly as the training loops draw it.
pub fn gen_batch<T: Real, R: Rng + ?Sized>(cfg: &TrainConfig, c: &Constellation<T>, rng: &mut R) -> Result<TrainBatch<T>> {
    if c.k() != cfg.k {
        return Err(invalid(format!("constellation K = {} but config K = {}", c.k(), cfg.k)));
    }
    let var = T::lit(ebn0_to_noise_var(cfg.ebn0_db, cfg.k)?);
    batch_from_samples(c, draw_samples(cfg.k, cfg.batch_size, var, rng))
}

fn batch_from_samples<T: Real>(c: &Constellation<T>, samples: Vec<TrainSample<T>>) -> Result<TrainBatch<T>> {
    let mut messages = Vec::with_capacity(samples.len());
    let mut received = Vec::with_capacity(samples.len());
    for s in samples {
        let x = encode(&s.message, c)?;
        let y: Vec<Complex<T>> = x.coeffs().iter().zip(&s.noise).map(|(&a, &w)| a + w).collect();
        received.push(ComplexPoly::from_coeffs_unchecked(y));
        messages.push(s.message);
    }
    Ok(TrainBatch { messages, received })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct DizetOutcome<T: Real> {
    pub constellation: Constellation<T>,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone)]
pub struct NnOutcome<T: Real> {
    pub constellation: Constellation<T>,
    pub mlp: MlpParams<T>,
    pub stage1: Vec<TraceRow>,
    pub stage2: Vec<TraceRow>,
    /// Samples dropped from batch means over both stages.
    pub skipped: usize,
}

fn log_every(n: usize) -> usize {
    (n / 10).max(1)
}

fn check_loss<T: Real>(loss: T, epoch: usize, stage: &str) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{stage} loss at epoch {epoch} is {loss}")))
    }
}

/// Minimize the mean hinge loss over `(rho, theta)` at `cfg.ebn0_db`.
pub fn train_dizet<T: Real>(cfg: &TrainConfig) -> Result<DizetOutcome<T>> {
    cfg.validate()?;
    let k = cfg.k;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ConstellationParams::from_constellation(&Constellation::<T>::canonical(k, cfg.init_lambda)?);
    let var = T::lit(ebn0_to_noise_var(cfg.ebn0_db, k)?);
    let margin = T::lit(cfg.margin);
    let mut adam = AdamState::<T>::new(&[1, k]);
    let mut trace = Vec::with_capacity(cfg.n_epoch);
    for epoch in 0..cfg.n_epoch {
        let lr = lr_schedule(epoch, cfg);
        let samples = draw_samples(k, cfg.batch_size, var, &mut rng);
        let g = dizet_loss_grad(&params, &samples, margin, cfg.label_orientation);
        check_loss(g.loss, epoch, "dizet")?;
        adam.step(
            &mut [std::slice::from_mut(&mut params.rho), &mut params.phases],
            &[&g.grad[..1], &g.grad[1..]],
            T::lit(lr),
        )
        .map_err(|e| annotate(e, epoch))?;
        trace.push(TraceRow {
            epoch,
            lr,
            mean_loss: g.loss.as_f64(),
        });
        if epoch % log_every(cfg.n_epoch) == 0 {
            log::info!("dizet epoch {epoch}: loss {:.5} R {:.4}", g.loss, params.radius());
        }
    }
    Ok(DizetOutcome {
        constellation: params.to_constellation()?,
        trace,
    })
}

fn annotate(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite(m) => Error::NonFinite(format!("{m} at epoch {epoch}")),
        e => e,
    }
}

/// Two-stage neural training: joint at `cfg.ebn0_db`, then decoder only at
/// `cfg.ebn0_db_stage2` with the constellation frozen. The learning-rate
/// schedule restarts and optimizer moments are reset between stages.
pub fn train_nn<T: Real>(cfg: &TrainConfig) -> Result<NnOutcome<T>> {
    let l_hidden = cfg.validate_nn()?;
    let k = cfg.k;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ConstellationParams::from_constellation(&Constellation::<T>::canonical(k, cfg.init_lambda)?);
    let mut mlp = MlpParams::<T>::random(k, l_hidden, &mut rng)?;
    mlp.slope = T::lit(cfg.slope);
    mlp.dropout = T::lit(cfg.dropout);
    mlp.training = true;
    let mut skipped = 0;

    let shapes: Vec<usize> = mlp.slices_mut().iter().map(|s| s.len()).collect();
    let var1 = T::lit(ebn0_to_noise_var(cfg.ebn0_db, k)?);
    let mut adam = AdamState::<T>::new(&[&[1, k][..], &shapes].concat());
    let mut stage1 = Vec::with_capacity(cfg.n_epoch);
    for epoch in 0..cfg.n_epoch {
        let lr = lr_schedule(epoch, cfg);
        let samples = draw_samples(k, cfg.batch_size, var1, &mut rng);
        let g = nn_loss_grad(&params, &mlp, &samples, true, &mut rng)?;
        skipped += g.skipped;
        check_loss(g.loss, epoch, "stage 1")?;
        let cg = g.constellation.as_ref().expect("constellation gradient requested");
        let mut ps: Vec<&mut [T]> = vec![std::slice::from_mut(&mut params.rho), &mut params.phases];
        ps.extend(mlp.slices_mut());
        let mut gs: Vec<&[T]> = vec![&cg[..1], &cg[1..]];
        gs.extend(g.mlp.slices());
        adam.step(&mut ps, &gs, T::lit(lr)).map_err(|e| annotate(e, epoch))?;
        stage1.push(TraceRow {
            epoch,
            lr,
            mean_loss: g.loss.as_f64(),
        });
        if epoch % log_every(cfg.n_epoch) == 0 {
            log::info!("nn stage 1 epoch {epoch}: loss {:.5} R {:.4}", g.loss, params.radius());
        }
    }

    log::info!("nn stage 2: constellation frozen at R = {:.4}", params.radius());
    let var2 = T::lit(ebn0_to_noise_var(cfg.ebn0_db_stage2, k)?);
    let mut adam = AdamState::<T>::new(&shapes);
    let mut stage2 = Vec::with_capacity(cfg.n_epoch);
    for epoch in 0..cfg.n_epoch {
        let lr = lr_schedule(epoch, cfg);
        let samples = draw_samples(k, cfg.batch_size, var2, &mut rng);
        let g = nn_loss_grad(&params, &mlp, &samples, false, &mut rng)?;
        skipped += g.skipped;
        check_loss(g.loss, epoch, "stage 2")?;
        adam.step(&mut mlp.slices_mut(), &g.mlp.slices(), T::lit(lr)).map_err(|e| annotate(e, epoch))?;
        stage2.push(TraceRow {
            epoch,
            lr,
            mean_loss: g.loss.as_f64(),
        });
        if epoch % log_every(cfg.n_epoch) == 0 {
            log::info!("nn stage 2 epoch {epoch}: loss {:.5}", g.loss);
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} degenerate samples were left out of batch means");
    }
    mlp.training = false;
    Ok(NnOutcome {
        constellation: params.to_constellation()?,
        mlp,
        stage1,
        stage2,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoders::{dizet_decode, nn_decode};
    use crate::poly::{multiset_distance, roots};

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let cfg = TrainConfig::dizet(4);
        assert_eq!(lr_schedule(0, &cfg), 1e-2);
        assert_eq!(lr_schedule(cfg.n_epoch, &cfg), 1e-4);
        assert!((lr_schedule(cfg.n_epoch / 2, &cfg) - 1e-3).abs() < 1e-15);
        for e in 1..=cfg.n_epoch {
            assert!(lr_schedule(e, &cfg) < lr_schedule(e - 1, &cfg));
        }
    }

    #[test]
    fn config_validation_names_fields() {
        let mut c = TrainConfig::dizet(4);
        c.batch_size = 0;
        assert!(c.validate().unwrap_err().to_string().contains("B"));
        let mut c = TrainConfig::dizet(4);
        c.lr_final = 1.0;
        assert!(c.validate().unwrap_err().to_string().contains("lr"));
        let mut c = TrainConfig::dizet(4);
        c.margin = 0.0;
        assert!(c.validate().is_err());
        let c = TrainConfig::nn(5);
        assert!(c.validate_nn().unwrap_err().to_string().contains("l_hidden"));
        assert_eq!(TrainConfig::nn(7).validate_nn().unwrap(), 1000);
    }

    #[test]
    fn config_from_toml_with_defaults() {
        let c: TrainConfig = toml_like("{\"K\": 7, \"n_epoch\": 10}");
        assert_eq!(c.batch_size, 256);
        assert_eq!(c.ebn0_db, 10.0);
        assert_eq!(c.label_orientation, LabelOrientation::Consistent);
        assert!(serde_json::from_str::<TrainConfig>("{\"K\": 7, \"n_epoch\": 10, \"bogus\": 1}").is_err());
    }

    fn toml_like(s: &str) -> TrainConfig {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn noiseless_batch_roots_match_zeros() {
        let mut cfg = TrainConfig::dizet(6);
        cfg.ebn0_db = f64::INFINITY;
        cfg.batch_size = 50;
        let c = Constellation::<f64>::canonical(6, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = gen_batch(&cfg, &c, &mut rng).unwrap();
        for (m, y) in b.messages.iter().zip(&b.received) {
            let z = crate::constellation::bits_to_zeros(m, &c).unwrap();
            let r = roots(y).unwrap();
            assert!(multiset_distance(z.as_slice(), r.as_slice()).unwrap() < 1e-8);
        }
    }

    #[test]
    fn batch_noise_variance_and_message_uniformity() {
        let k = 3;
        let mut cfg = TrainConfig::dizet(k);
        cfg.batch_size = 100_000;
        cfg.ebn0_db = 3.0;
        let c = Constellation::<f64>::canonical(k, 0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = gen_batch(&cfg, &c, &mut rng).unwrap();
        let var = ebn0_to_noise_var(3.0, k).unwrap();
        let mut counts = vec![0usize; 1 << k];
        let mut acc = vec![0.0; k + 1];
        for (m, y) in b.messages.iter().zip(&b.received) {
            counts[m.index()] += 1;
            let x = encode(m, &c).unwrap();
            for (i, (a, b)) in y.coeffs().iter().zip(x.coeffs()).enumerate() {
                acc[i] += (a - b).norm_sqr();
            }
        }
        for a in acc {
            assert!((a / 1e5 / var - 1.0).abs() < 0.02);
        }
        let e = 1e5 / 8.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 99% quantile of chi-square with 7 degrees of freedom.
        assert!(chi2 < 18.475, "chi2 = {chi2}");
    }

    #[test]
    fn short_dizet_run_is_reproducible_and_decodes() {
        let mut cfg = TrainConfig::dizet(4);
        cfg.n_epoch = 30;
        cfg.batch_size = 32;
        cfg.seed = 3;
        let a = train_dizet::<f64>(&cfg).unwrap();
        let b = train_dizet::<f64>(&cfg).unwrap();
        assert_eq!(a.constellation, b.constellation);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.trace.len(), 30);
        for idx in 0..16 {
            let m = BitMessage::from_index(idx, 4);
            let y = encode(&m, &a.constellation).unwrap();
            assert_eq!(dizet_decode(&y, &a.constellation, 5).unwrap(), m);
        }
    }

    #[test]
    fn dizet_loss_descends_from_canonical() {
        let mut first = 0.0;
        let mut last = 0.0;
        for seed in 0..5 {
            let mut cfg = TrainConfig::dizet(7);
            cfg.n_epoch = 100;
            cfg.seed = seed;
            let t = train_dizet::<f64>(&cfg).unwrap().trace;
            first += t[..10].iter().map(|r| r.mean_loss).sum::<f64>();
            last += t[90..].iter().map(|r| r.mean_loss).sum::<f64>();
        }
        assert!(last < first, "{last} !< {first}");
    }

    #[test]
    fn short_nn_run_two_stages() {
        let mut cfg = TrainConfig::nn(4);
        cfg.n_epoch = 5;
        cfg.batch_size = 16;
        cfg.l_hidden = Some(16);
        let out = train_nn::<f32>(&cfg).unwrap();
        assert_eq!(out.stage1.len(), 5);
        assert_eq!(out.stage2.len(), 5);
        assert_eq!(out.stage2[0].lr, cfg.lr_initial);
        assert!(!out.mlp.training);
        let again = train_nn::<f32>(&cfg).unwrap();
        assert_eq!(out.mlp, again.mlp);
        let m = BitMessage::from_index(3, 4);
        let y = encode(&m, &out.constellation).unwrap();
        assert_eq!(nn_decode(&y, &out.mlp, 4).unwrap().len(), 4);
    }
}
