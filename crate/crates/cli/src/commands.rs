use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use zeroforge::constellation::Constellation;
use zeroforge::decoders::MlpParams;
use zeroforge::montecarlo::{
    class_histogram, measure_gain, run_sweep, run_sweep_to_target, write_sweeps_csv, ChannelPath, DecoderKind, GainReport, Scheme,
};
use zeroforge::training::{gradcheck, train_dizet as fit_dizet, train_nn as fit_nn, write_trace_csv};

use crate::config::{self, SchemeSpec, TrainKind};
use crate::manifest::RunManifest;
use crate::{CliError, Common};

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(|e| CliError::Runtime(e.into()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn train_dizet(name: &str, common: &Common) -> Result<(), CliError> {
    let mut cfg = config::train_config(common.config.as_deref(), TrainKind::Dizet)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let mut manifest = RunManifest::start(name, &cfg, cfg.seed);
    log::info!("training DiZeT constellation: K = {}, {} epochs", cfg.k, cfg.n_epoch);
    let out = fit_dizet::<f64>(&cfg)?;
    log::info!("learned R = {:.4}", out.constellation.radius());
    std::fs::write(manifest.output(common.out.join("constellation.json")), out.constellation.to_json()?)?;
    write_trace_csv(&manifest.output(common.out.join("loss.csv")), &out.trace)?;
    manifest.finish(&common.out)?;
    Ok(())
}

pub fn train_nn(name: &str, common: &Common) -> Result<(), CliError> {
    let mut cfg = config::train_config(common.config.as_deref(), TrainKind::Nn)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let l_hidden = cfg.validate_nn()?;
    let mut manifest = RunManifest::start(name, &cfg, cfg.seed);
    log::info!("training neural decoder: K = {}, l_hidden = {l_hidden}, {} epochs per stage", cfg.k, cfg.n_epoch);
    let out = fit_nn::<f32>(&cfg)?;
    log::info!("learned R = {:.4}", out.constellation.radius());
    std::fs::write(manifest.output(common.out.join("constellation.json")), out.constellation.to_json()?)?;
    std::fs::write(manifest.output(common.out.join("mlp.json")), out.mlp.to_json()?)?;
    write_trace_csv(&manifest.output(common.out.join("loss_stage1.csv")), &out.stage1)?;
    write_trace_csv(&manifest.output(common.out.join("loss_stage2.csv")), &out.stage2)?;
    manifest.finish(&common.out)?;
    Ok(())
}

fn load_scheme(spec: &SchemeSpec, k: usize) -> Result<Scheme<f64>, CliError> {
    let c = match (&spec.constellation, spec.lambda) {
        (Some(p), _) => Constellation::<f64>::from_json(&read(p)?)?,
        (None, Some(l)) => Constellation::canonical(k, l)?,
        (None, None) => unreachable!("validated"),
    };
    if c.k() != k {
        return Err(CliError::Validation(format!(
            "scheme '{}': constellation has K = {} but config K = {k}",
            spec.label,
            c.k()
        )));
    }
    match spec.decoder {
        DecoderKind::Dizet => Ok(Scheme::dizet(spec.label.clone(), c)),
        DecoderKind::Nn => {
            let path = spec.mlp.as_ref().expect("validated");
            let mlp = MlpParams::<f64>::from_json(&read(path)?)?;
            if mlp.k() != k {
                return Err(CliError::Validation(format!(
                    "scheme '{}': decoder has K = {} but config K = {k}",
                    spec.label,
                    mlp.k()
                )));
            }
            Ok(Scheme::nn(spec.label.clone(), c, mlp)?)
        }
    }
}

#[derive(Serialize)]
#[serde(untagged)]
enum GainOutcome {
    Report(GainReport),
    Error { error: String },
}

pub fn simulate(name: &str, common: &Common) -> Result<(), CliError> {
    let mut cfg = config::simulate_config(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let schemes = cfg.schemes.iter().map(|s| load_scheme(s, cfg.k)).collect::<Result<Vec<_>, _>>()?;
    let mut manifest = RunManifest::start(name, &cfg, cfg.seed);
    let path = if cfg.ofdm {
        ChannelPath::Ofdm {
            idft_size: cfg.idft_size,
        }
    } else {
        ChannelPath::Coefficient
    };
    let mut all = Vec::new();
    let mut gains = BTreeMap::new();
    let mut failures = Vec::new();
    for &ch in &cfg.channels {
        let mut results = Vec::with_capacity(schemes.len());
        for s in &schemes {
            let r = if cfg.stop_below_target {
                run_sweep_to_target(s, ch, path, &cfg.grid, &cfg.stop, cfg.seed, cfg.target_bler)?
            } else {
                run_sweep(s, ch, path, &cfg.grid, &cfg.stop, cfg.seed)?
            };
            results.push(r);
        }
        let outcome = match measure_gain(&results, &cfg.baseline, cfg.target_bler) {
            Ok(r) => GainOutcome::Report(r),
            Err(e) => {
                failures.push(format!("{ch}: {e}"));
                GainOutcome::Error { error: e.to_string() }
            }
        };
        gains.insert(ch.label().to_string(), outcome);
        all.extend(results);
    }
    write_sweeps_csv(&manifest.output(common.out.join("sweeps.csv")), &all)?;
    write_json(&manifest.output(common.out.join("gains.json")), &gains)?;
    manifest.finish(&common.out)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(anyhow::anyhow!("gain measurement failed: {}", failures.join("; "))))
    }
}

pub fn histogram(name: &str, common: &Common) -> Result<(), CliError> {
    let mut cfg = config::histogram_config(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let schemes = cfg.schemes.iter().map(|s| load_scheme(s, cfg.k)).collect::<Result<Vec<_>, _>>()?;
    let mut manifest = RunManifest::start(name, &cfg, cfg.seed);
    let db = if cfg.noiseless { f64::INFINITY } else { cfg.ebn0_db };
    let path = manifest.output(common.out.join("histogram.csv"));
    let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Runtime(e.into()))?;
    w.write_record(["scheme", "class", "count"]).map_err(|e| CliError::Runtime(e.into()))?;
    for s in &schemes {
        let h = class_histogram(s, cfg.channel, db, cfg.n_decodes, cfg.seed)?;
        let ends = (h[0] + h[h.len() - 1]) as f64 / cfg.n_decodes as f64;
        log::info!("{}: classes 1 and {} take {:.1}% of decodes", s.label, h.len(), 100.0 * ends);
        for (i, c) in h.iter().enumerate() {
            w.write_record([s.label.clone(), (i + 1).to_string(), c.to_string()])
                .map_err(|e| CliError::Runtime(e.into()))?;
        }
    }
    w.flush()?;
    drop(w);
    manifest.finish(&common.out)?;
    Ok(())
}

pub fn grad_check(name: &str, common: &Common) -> Result<(), CliError> {
    let mut cfg = config::grad_check_config(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if cfg.instances == 0 {
        return Err(CliError::Validation("instances must be >= 1".into()));
    }
    let mut manifest = RunManifest::start(name, &cfg, cfg.seed);
    let checks = gradcheck::run_suite(cfg.instances, cfg.seed);
    for c in &checks {
        log::info!(
            "{}: {} over {} instances, max relative error {:.2e}",
            c.name,
            if c.passed() { "pass" } else { "FAIL" },
            c.instances,
            c.max_rel_err
        );
    }
    write_json(&manifest.output(common.out.join("gradcheck.json")), &checks)?;
    manifest.finish(&common.out)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(anyhow::anyhow!("gradient checks failed: {}", failed.join(", "))))
    }
}
