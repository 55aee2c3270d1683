//! Command configuration files. Every field has a default, so a config file
//! only needs the values it changes; TOML and JSON are both accepted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use zeroforge::channel::ChannelKind;
use zeroforge::montecarlo::{DecoderKind, StopRule};
use zeroforge::training::TrainConfig;

use crate::CliError;

/// Parse a TOML or JSON file into a JSON value (JSON when the extension says
/// so or the text starts with `{`).
pub fn read_value(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    if is_json {
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    } else {
        let v: toml::Value = toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        serde_json::to_value(v).map_err(|e| CliError::Validation(e.to_string()))
    }
}

/// Recursively overlay `top` onto `base`.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, t) => *b = t,
    }
}

fn user_value(path: Option<&Path>) -> Result<Value, CliError> {
    match path {
        Some(p) => read_value(p),
        None => Ok(Value::Object(Default::default())),
    }
}

fn resolve<T: for<'de> Deserialize<'de>>(mut base: Value, user: Value) -> Result<T, CliError> {
    merge(&mut base, user);
    serde_json::from_value(base).map_err(|e| CliError::Validation(format!("invalid config: {e}")))
}

fn k_of(user: &Value, default: usize) -> Result<usize, CliError> {
    match user.get("K") {
        None => Ok(default),
        Some(v) => v
            .as_u64()
            .map(|k| k as usize)
            .ok_or_else(|| CliError::Validation(format!("K must be a positive integer (got {v})"))),
    }
}

#[derive(Debug, Clone, Copy)]
pub enum TrainKind {
    Dizet,
    Nn,
}

/// Training config with the per-procedure defaults filled in before the
/// file's values are applied.
pub fn train_config(path: Option<&Path>, kind: TrainKind) -> Result<TrainConfig, CliError> {
    let user = user_value(path)?;
    let k = k_of(&user, match kind {
        TrainKind::Dizet => 4,
        TrainKind::Nn => 7,
    })?;
    let base = match kind {
        TrainKind::Dizet => TrainConfig::dizet(k),
        TrainKind::Nn => TrainConfig::nn(k),
    };
    resolve(serde_json::to_value(base).expect("config serializes"), user)
}

/// One curve to simulate: a constellation source and a decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSpec {
    pub label: String,
    pub decoder: DecoderKind,
    /// Canonical constellation with this `lambda`; ignored when a
    /// constellation checkpoint is given.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub constellation: Option<PathBuf>,
    #[serde(default)]
    pub mlp: Option<PathBuf>,
}

fn default_schemes() -> Vec<SchemeSpec> {
    vec![
        SchemeSpec {
            label: "lambda_0.5".into(),
            decoder: DecoderKind::Dizet,
            lambda: Some(0.5),
            constellation: None,
            mlp: None,
        },
        SchemeSpec {
            label: "lambda_1".into(),
            decoder: DecoderKind::Dizet,
            lambda: Some(1.0),
            constellation: None,
            mlp: None,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub schemes: Vec<SchemeSpec>,
    /// Label of the scheme gains are measured against.
    pub baseline: String,
    pub channels: Vec<ChannelKind>,
    pub grid: Vec<f64>,
    pub target_bler: f64,
    pub stop: StopRule,
    /// Route blocks through the OFDM mapping instead of the coefficient channel.
    pub ofdm: bool,
    pub idft_size: usize,
    /// Stop each curve at the first grid point at or below `target_bler`.
    pub stop_below_target: bool,
    pub seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            k: 7,
            schemes: default_schemes(),
            baseline: "lambda_0.5".into(),
            channels: vec![ChannelKind::Awgn],
            grid: (0..=14).map(f64::from).collect(),
            target_bler: 1e-3,
            stop: StopRule::default(),
            ofdm: false,
            idft_size: zeroforge::channel::DEFAULT_IDFT_SIZE,
            stop_below_target: false,
            seed: 0,
        }
    }
}

impl SimulateConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let v = |m: String| Err(CliError::Validation(m));
        if self.schemes.is_empty() {
            return v("schemes: list is empty".into());
        }
        if self.grid.is_empty() {
            return v("grid: no Eb/N0 points".into());
        }
        if self.channels.is_empty() {
            return v("channels: list is empty".into());
        }
        if !self.schemes.iter().any(|s| s.label == self.baseline) {
            return v(format!("baseline '{}' is not a scheme label", self.baseline));
        }
        validate_schemes(&self.schemes)?;
        self.stop.validate().map_err(CliError::from)
    }
}

fn validate_schemes(schemes: &[SchemeSpec]) -> Result<(), CliError> {
    for (i, s) in schemes.iter().enumerate() {
        if schemes[..i].iter().any(|o| o.label == s.label) {
            return Err(CliError::Validation(format!("duplicate scheme label '{}'", s.label)));
        }
        if s.constellation.is_none() && s.lambda.is_none() {
            return Err(CliError::Validation(format!(
                "scheme '{}': needs either lambda or a constellation checkpoint",
                s.label
            )));
        }
        if s.decoder == DecoderKind::Nn && s.mlp.is_none() {
            return Err(CliError::Validation(format!("scheme '{}': nn decoder needs an mlp checkpoint", s.label)));
        }
    }
    Ok(())
}

pub fn simulate_config(path: Option<&Path>) -> Result<SimulateConfig, CliError> {
    let user = user_value(path)?;
    let mut c: SimulateConfig = resolve(serde_json::to_value(SimulateConfig::default()).expect("serializes"), user)?;
    relativize(&mut c.schemes, path);
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistogramConfig {
    #[serde(rename = "K")]
    pub k: usize,
    pub schemes: Vec<SchemeSpec>,
    pub channel: ChannelKind,
    pub ebn0_db: f64,
    /// Ignore `ebn0_db` and decode noiseless blocks.
    pub noiseless: bool,
    pub n_decodes: u64,
    pub seed: u64,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            k: 4,
            schemes: vec![default_schemes().remove(0)],
            channel: ChannelKind::Awgn,
            ebn0_db: -5.0,
            noiseless: false,
            n_decodes: 50_000,
            seed: 0,
        }
    }
}

impl HistogramConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schemes.is_empty() {
            return Err(CliError::Validation("schemes: list is empty".into()));
        }
        if self.k > zeroforge::montecarlo::MAX_HISTOGRAM_K {
            return Err(CliError::Validation(format!(
                "K = {} unsupported: histograms need K <= {}",
                self.k,
                zeroforge::montecarlo::MAX_HISTOGRAM_K
            )));
        }
        validate_schemes(&self.schemes)
    }
}

pub fn histogram_config(path: Option<&Path>) -> Result<HistogramConfig, CliError> {
    let user = user_value(path)?;
    let mut c: HistogramConfig = resolve(serde_json::to_value(HistogramConfig::default()).expect("serializes"), user)?;
    relativize(&mut c.schemes, path);
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradCheckConfig {
    pub instances: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { instances: 100, seed: 0 }
    }
}

pub fn grad_check_config(path: Option<&Path>) -> Result<GradCheckConfig, CliError> {
    let user = user_value(path)?;
    resolve(serde_json::to_value(GradCheckConfig::default()).expect("serializes"), user)
}

/// Checkpoint paths in a config file are relative to that file.
fn relativize(schemes: &mut [SchemeSpec], config: Option<&Path>) {
    let Some(dir) = config.and_then(Path::parent) else {
        return;
    };
    for s in schemes {
        for p in [&mut s.constellation, &mut s.mlp].into_iter().flatten() {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}
