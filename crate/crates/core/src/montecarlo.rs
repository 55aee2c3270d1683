//! Monte-Carlo BER/BLER sweeps, relative-gain measurement and decoded-class
//! histograms.
//!
//! Trials are grouped into fixed-size chunks. Chunk `c` of grid point `p`
//! draws from a ChaCha stream keyed by `(seed, p, c)`, so every chunk can be
//! simulated on any thread. Chunks are reduced in index order and the stop
//! rule is applied chunk by chunk, which makes results independent of the
//! thread count.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{ebn0_to_noise_var, ChannelKind, OfdmModem, DEFAULT_IDFT_SIZE};
use crate::constellation::{encode, BitMessage, Constellation};
use crate::decoders::{dizet_decode, nn_decode_batch, MlpParams};
use crate::error::{invalid, Error, Result};
use crate::poly::ComplexPoly;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    Dizet,
    Nn,
}

#[derive(Debug, Clone)]
pub enum Decoder<T: Real> {
    Dizet,
    Nn(MlpParams<T>),
}

/// A constellation paired with the decoder that reads it.
#[derive(Debug, Clone)]
pub struct Scheme<T: Real> {
    pub label: String,
    pub constellation: Constellation<T>,
    pub decoder: Decoder<T>,
}

impl<T: Real> Scheme<T> {
    pub fn dizet(label: impl Into<String>, constellation: Constellation<T>) -> Self {
        Self {
            label: label.into(),
            constellation,
            decoder: Decoder::Dizet,
        }
    }

    pub fn nn(label: impl Into<String>, constellation: Constellation<T>, mut mlp: MlpParams<T>) -> Result<Self> {
        if mlp.k() != constellation.k() {
            return Err(invalid(format!(
                "decoder K = {} does not match constellation K = {}",
                mlp.k(),
                constellation.k()
            )));
        }
        mlp.training = false;
        Ok(Self {
            label: label.into(),
            constellation,
            decoder: Decoder::Nn(mlp),
        })
    }

    pub fn k(&self) -> usize {
        self.constellation.k()
    }

    pub fn kind(&self) -> DecoderKind {
        match self.decoder {
            Decoder::Dizet => DecoderKind::Dizet,
            Decoder::Nn(_) => DecoderKind::Nn,
        }
    }

    /// Decode a batch of received blocks; failures are `Err` in their slot.
    pub fn decode_batch(&self, ys: &[ComplexPoly<T>]) -> Vec<Result<BitMessage>> {
        match &self.decoder {
            Decoder::Dizet => {
                let l_t = self.k() + 1;
                ys.iter().map(|y| dizet_decode(y, &self.constellation, l_t)).collect()
            }
            Decoder::Nn(mlp) => nn_decode_batch(ys, mlp),
        }
    }
}

/// How transmit coefficients reach the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "path", rename_all = "snake_case")]
pub enum ChannelPath {
    /// Noise and fading applied directly to the coefficients.
    Coefficient,
    /// Coefficients mapped onto OFDM subcarriers of an `idft_size` transform.
    Ofdm { idft_size: usize },
}

impl Default for ChannelPath {
    fn default() -> Self {
        ChannelPath::Coefficient
    }
}

impl ChannelPath {
    pub fn ofdm() -> Self {
        ChannelPath::Ofdm {
            idft_size: DEFAULT_IDFT_SIZE,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    pub min_block_errors: u64,
    pub max_trials: u64,
    /// Trials per independently seeded chunk.
    pub chunk: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            min_block_errors: 200,
            max_trials: 2_000_000,
            chunk: 2048,
        }
    }
}

impl StopRule {
    pub fn validate(&self) -> Result<()> {
        if self.max_trials == 0 || self.chunk == 0 {
            return Err(invalid("max_trials and chunk must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ebn0_db: f64,
    pub trials: u64,
    pub bit_errors: u64,
    pub block_errors: u64,
    /// Blocks the decoder could not process; already included in the error
    /// counts with every bit wrong.
    pub decoder_failures: u64,
    pub ber: f64,
    pub bler: f64,
    pub ci_ber: f64,
    pub ci_bler: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub scheme: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub channel: ChannelKind,
    pub path: ChannelPath,
    pub decoder: DecoderKind,
    pub seed: u64,
    pub points: Vec<SweepPoint>,
}

/// Half-width of the 95% Wilson score interval for `successes` out of `n`.
pub fn wilson_half_width(successes: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.5;
    }
    let z = 1.959_963_984_540_054_f64;
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n)
}

/// Centre of the Wilson interval; with [`wilson_half_width`] gives the bounds.
pub fn wilson_center(successes: u64, n: u64) -> f64 {
    if n == 0 {
        return 0.5;
    }
    let z2 = 1.959_963_984_540_054_f64.powi(2);
    let n = n as f64;
    (successes as f64 / n + z2 / (2.0 * n)) / (1.0 + z2 / n)
}

/// Stream for chunk `chunk` of grid point `point`.
pub fn chunk_rng(seed: u64, point: u64, chunk: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&point.to_le_bytes());
    key[16..24].copy_from_slice(&chunk.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn random_message<R: Rng + ?Sized>(k: usize, rng: &mut R) -> BitMessage {
    BitMessage::new((0..k).map(|_| u8::from(rng.gen::<bool>())).collect()).expect("bits are 0/1")
}

struct Transmitter<T: Real> {
    kind: ChannelKind,
    var: T,
    modem: Option<OfdmModem<T>>,
}

impl<T: Real> Transmitter<T> {
    fn new(kind: ChannelKind, path: ChannelPath, var: f64) -> Self {
        Self {
            kind,
            var: T::lit(var),
            modem: match path {
                ChannelPath::Coefficient => None,
                ChannelPath::Ofdm { idft_size } => Some(OfdmModem::new(idft_size)),
            },
        }
    }

    fn send<R: Rng + ?Sized>(&self, x: &ComplexPoly<T>, rng: &mut R) -> Result<ComplexPoly<T>> {
        match &self.modem {
            None => Ok(self.kind.apply(x, self.var, rng)),
            Some(m) => m.transmit(x, self.kind, self.var, rng),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    trials: u64,
    bit_errors: u64,
    block_errors: u64,
    failures: u64,
}

impl Tally {
    fn add(&mut self, o: &Tally) {
        self.trials += o.trials;
        self.bit_errors += o.bit_errors;
        self.block_errors += o.block_errors;
        self.failures += o.failures;
    }
}

fn run_chunk<T: Real>(scheme: &Scheme<T>, tx: &Transmitter<T>, n: u64, mut rng: ChaCha8Rng) -> Result<Tally> {
    let k = scheme.k();
    let mut msgs = Vec::with_capacity(n as usize);
    let mut ys = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let m = random_message(k, &mut rng);
        let x = encode(&m, &scheme.constellation)?;
        ys.push(tx.send(&x, &mut rng)?);
        msgs.push(m);
    }
    let mut t = Tally {
        trials: n,
        ..Tally::default()
    };
    for (m, d) in msgs.iter().zip(scheme.decode_batch(&ys)) {
        match d {
            Ok(d) => {
                let e = m.hamming(&d) as u64;
                t.bit_errors += e;
                t.block_errors += u64::from(e > 0);
            }
            Err(_) => {
                t.failures += 1;
                t.block_errors += 1;
                t.bit_errors += k as u64;
            }
        }
    }
    Ok(t)
}

fn simulate_point<T: Real>(
    scheme: &Scheme<T>,
    tx: &Transmitter<T>,
    stop: &StopRule,
    seed: u64,
    point: u64,
) -> Result<Tally> {
    let wave = rayon::current_num_threads().max(1) as u64;
    let mut total = Tally::default();
    let mut next = 0u64;
    while total.trials < stop.max_trials && total.block_errors < stop.min_block_errors {
        let sizes: Vec<(u64, u64)> = (0..wave)
            .map(|i| {
                let start = (next + i) * stop.chunk;
                (next + i, stop.chunk.min(stop.max_trials.saturating_sub(start)))
            })
            .filter(|&(_, n)| n > 0)
            .collect();
        if sizes.is_empty() {
            break;
        }
        let tallies: Vec<Result<Tally>> = sizes
            .par_iter()
            .map(|&(c, n)| run_chunk(scheme, tx, n, chunk_rng(seed, point, c)))
            .collect();
        for t in tallies {
            if total.trials >= stop.max_trials || total.block_errors >= stop.min_block_errors {
                break;
            }
            total.add(&t?);
        }
        next += sizes.len() as u64;
    }
    Ok(total)
}

/// Estimate BER and BLER at every grid point. An infinite Eb/N0 simulates
/// the noiseless channel.
pub fn run_sweep<T: Real>(
    scheme: &Scheme<T>,
    channel: ChannelKind,
    path: ChannelPath,
    grid: &[f64],
    stop: &StopRule,
    seed: u64,
) -> Result<SweepResult> {
    sweep(scheme, channel, path, grid, stop, seed, None)
}

/// Like [`run_sweep`], but stops walking the grid after the first point whose
/// BLER is at or below `target_bler`. Points that are simulated are identical
/// to the corresponding [`run_sweep`] points.
pub fn run_sweep_to_target<T: Real>(
    scheme: &Scheme<T>,
    channel: ChannelKind,
    path: ChannelPath,
    grid: &[f64],
    stop: &StopRule,
    seed: u64,
    target_bler: f64,
) -> Result<SweepResult> {
    sweep(scheme, channel, path, grid, stop, seed, Some(target_bler))
}

fn sweep<T: Real>(
    scheme: &Scheme<T>,
    channel: ChannelKind,
    path: ChannelPath,
    grid: &[f64],
    stop: &StopRule,
    seed: u64,
    target: Option<f64>,
) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(invalid("Eb/N0 grid is empty"));
    }
    stop.validate()?;
    if let ChannelPath::Ofdm { idft_size } = path {
        if idft_size < scheme.k() + 1 {
            return Err(invalid(format!("idft_size {idft_size} smaller than K + 1 = {}", scheme.k() + 1)));
        }
    }
    let k = scheme.k();
    let mut points = Vec::with_capacity(grid.len());
    for (p, &db) in grid.iter().enumerate() {
        if db.is_nan() {
            return Err(invalid("Eb/N0 grid contains NaN"));
        }
        let var = if db == f64::INFINITY { 0.0 } else { ebn0_to_noise_var(db, k)? };
        let tx = Transmitter::<T>::new(channel, path, var);
        let t = simulate_point(scheme, &tx, stop, seed, p as u64)?;
        let bits = t.trials * k as u64;
        let point = SweepPoint {
            ebn0_db: db,
            trials: t.trials,
            bit_errors: t.bit_errors,
            block_errors: t.block_errors,
            decoder_failures: t.failures,
            ber: t.bit_errors as f64 / bits as f64,
            bler: t.block_errors as f64 / t.trials as f64,
            ci_ber: wilson_half_width(t.bit_errors, bits),
            ci_bler: wilson_half_width(t.block_errors, t.trials),
        };
        log::info!(
            "{} {} {db} dB: {} trials, ber {:.3e}, bler {:.3e}",
            scheme.label,
            channel,
            point.trials,
            point.ber,
            point.bler
        );
        if t.failures > 0 {
            log::warn!("{}: {} decoder failures at {db} dB", scheme.label, t.failures);
        }
        points.push(point);
        if target.is_some_and(|t| point.bler <= t) {
            break;
        }
    }
    Ok(SweepResult {
        scheme: scheme.label.clone(),
        k,
        channel,
        path,
        decoder: scheme.kind(),
        seed,
        points,
    })
}

#[derive(Debug, Serialize)]
struct CsvRow<'a> {
    scheme: &'a str,
    #[serde(rename = "K")]
    k: usize,
    channel: &'a str,
    ebn0_db: f64,
    trials: u64,
    bit_errors: u64,
    block_errors: u64,
    ber: f64,
    bler: f64,
    ci_ber: f64,
    ci_bler: f64,
}

pub const CSV_HEADER: &str = "scheme,K,channel,ebn0_db,trials,bit_errors,block_errors,ber,bler,ci_ber,ci_bler";

/// All sweeps into one CSV with the fixed column set [`CSV_HEADER`].
pub fn write_sweeps_csv(path: &Path, results: &[SweepResult]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(CSV_HEADER.split(','))?;
    for r in results {
        let channel = match r.path {
            ChannelPath::Coefficient => r.channel.label().to_string(),
            ChannelPath::Ofdm { .. } => format!("{}_ofdm", r.channel.label()),
        };
        for p in &r.points {
            let row = CsvRow {
                scheme: &r.scheme,
                k: r.k,
                channel: &channel,
                ebn0_db: p.ebn0_db,
                trials: p.trials,
                bit_errors: p.bit_errors,
                block_errors: p.block_errors,
                ber: p.ber,
                bler: p.bler,
                ci_ber: p.ci_ber,
                ci_bler: p.ci_bler,
            };
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Eb/N0 at which a BLER curve reaches `target`, interpolating `log10(bler)`
/// linearly in dB between the first bracketing pair of nonzero points.
pub fn ebn0_at_bler(r: &SweepResult, target: f64) -> Result<f64> {
    let mut pts: Vec<&SweepPoint> = r.points.iter().filter(|p| p.ebn0_db.is_finite()).collect();
    pts.sort_by(|a, b| a.ebn0_db.total_cmp(&b.ebn0_db));
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.bler > 0.0 && b.bler > 0.0 && a.bler >= target && b.bler <= target {
            let (la, lb, lt) = (a.bler.log10(), b.bler.log10(), target.log10());
            if la == lb {
                return Ok(a.ebn0_db);
            }
            return Ok(a.ebn0_db + (lt - la) / (lb - la) * (b.ebn0_db - a.ebn0_db));
        }
    }
    Err(Error::NotBracketed(r.scheme.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainEntry {
    pub scheme: String,
    pub ebn0_at_target: f64,
    pub gain_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub target_bler: f64,
    pub baseline: String,
    pub entries: Vec<GainEntry>,
}

impl GainReport {
    pub fn gain(&self, scheme: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.scheme == scheme).map(|e| e.gain_db)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Gain of every curve over the one labelled `baseline`:
/// `ebn0(baseline) - ebn0(scheme)` at `target_bler`.
pub fn measure_gain(results: &[SweepResult], baseline: &str, target_bler: f64) -> Result<GainReport> {
    if !(target_bler > 0.0 && target_bler < 1.0) {
        return Err(invalid(format!("target BLER must lie in (0, 1) (got {target_bler})")));
    }
    let base = results
        .iter()
        .find(|r| r.scheme == baseline)
        .ok_or_else(|| invalid(format!("baseline scheme '{baseline}' not among results")))?;
    let b = ebn0_at_bler(base, target_bler)?;
    let entries = results
        .iter()
        .map(|r| {
            let e = ebn0_at_bler(r, target_bler)?;
            Ok(GainEntry {
                scheme: r.scheme.clone(),
                ebn0_at_target: e,
                gain_db: if r.scheme == baseline { 0.0 } else { b - e },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GainReport {
        target_bler,
        baseline: baseline.to_string(),
        entries,
    })
}

pub const MAX_HISTOGRAM_K: usize = 8;

/// Decoded-class counts; entry `v` counts decodes whose bits read as the
/// integer `v` (class `v + 1`).
pub fn class_histogram<T: Real>(
    scheme: &Scheme<T>,
    channel: ChannelKind,
    ebn0_db: f64,
    n_decodes: u64,
    seed: u64,
) -> Result<Vec<u64>> {
    let k = scheme.k();
    if k > MAX_HISTOGRAM_K {
        return Err(invalid(format!("class histogram supports K <= {MAX_HISTOGRAM_K} (got {k})")));
    }
    let var = if ebn0_db == f64::INFINITY { 0.0 } else { ebn0_to_noise_var(ebn0_db, k)? };
    let tx = Transmitter::<T>::new(channel, ChannelPath::Coefficient, var);
    let chunk = 4096u64;
    let n_chunks = n_decodes.div_ceil(chunk);
    let parts: Vec<Result<Vec<u64>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let n = chunk.min(n_decodes - c * chunk);
            let mut rng = chunk_rng(seed, u64::MAX, c);
            let mut ys = Vec::with_capacity(n as usize);
            for _ in 0..n {
                let x = encode(&random_message(k, &mut rng), &scheme.constellation)?;
                ys.push(tx.send(&x, &mut rng)?);
            }
            let mut h = vec![0u64; 1 << k];
            for d in scheme.decode_batch(&ys).into_iter().flatten() {
                h[d.index()] += 1;
            }
            Ok(h)
        })
        .collect();
    let mut hist = vec![0u64; 1 << k];
    for p in parts {
        for (a, b) in hist.iter_mut().zip(p?) {
            *a += b;
        }
    }
    Ok(hist)
}

/// Transmitted-class counts; equal to what a noiseless [`class_histogram`]
/// with the same seed decodes perfectly.
pub fn transmitted_histogram(k: usize, n_decodes: u64, seed: u64) -> Vec<u64> {
    let chunk = 4096u64;
    let mut hist = vec![0u64; 1 << k];
    for c in 0..n_decodes.div_ceil(chunk) {
        let mut rng = chunk_rng(seed, u64::MAX, c);
        for _ in 0..chunk.min(n_decodes - c * chunk) {
            hist[random_message(k, &mut rng).index()] += 1;
        }
    }
    hist
}
