//! Configuration loading and result files.
//!
//! Configurations are JSON. Overrides use `key=value` with dotted keys for
//! nested fields (`model.phi=0.9`); values are parsed as JSON when possible
//! and taken as strings otherwise. Tabular outputs are CSV with a header row
//! and LF line endings; each is paired with a JSON summary that echoes the
//! resolved configuration.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::experiments::{ExperimentConfig, LongRunRow, RunRow, SweepResult};

/// Environment variable that overrides the configured master seed.
pub const SEED_ENV: &str = "PFVAR_SEED";

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (k, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("override {key}: {part} is not inside an object")))?;
        if k + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("split yields at least one part")
}

/// Applies `key=value` overrides to a raw JSON configuration.
pub fn apply_overrides(root: &mut Value, overrides: &[String]) -> Result<()> {
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override {ov:?} is not of the form KEY=VALUE")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::InvalidConfig(format!("override {ov:?} has an empty key")));
        }
        let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_string()));
        set_path(root, key, value)?;
    }
    Ok(())
}

/// Parses and validates a configuration from JSON text. Relative paths inside
/// it resolve against `base_dir`.
pub fn parse_config_str(text: &str, overrides: &[String], base_dir: Option<&Path>) -> Result<ExperimentConfig> {
    let mut raw: Value =
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("config is not valid JSON: {e}")))?;
    apply_overrides(&mut raw, overrides)?;
    let mut cfg: ExperimentConfig =
        serde_json::from_value(raw).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    cfg.model.resolve(base_dir)?;
    if let Some(p) = cfg.observations_path.take() {
        let full = match base_dir {
            Some(dir) if p.is_relative() => dir.join(&p),
            _ => p,
        };
        cfg.observations = Some(read_observations(&full)?);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a configuration file, applying overrides.
pub fn parse_config(path: impl AsRef<Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config_str(&text, overrides, path.parent())
}

/// Seed precedence: explicit flag, then `PFVAR_SEED`, then the configuration.
pub fn resolve_seed(cfg: &mut ExperimentConfig, flag: Option<u64>) -> Result<()> {
    if let Some(s) = flag {
        cfg.seed = s;
    } else if let Ok(v) = std::env::var(SEED_ENV) {
        cfg.seed = v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("{SEED_ENV}={v:?} is not a 64-bit unsigned integer")))?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(path)?))
}

/// Reads a single-column CSV with header `y`.
pub fn read_observations(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    if headers.len() != 1 || &headers[0] != "y" {
        return Err(Error::InvalidConfig(format!(
            "{}: expected a single column with header \"y\"",
            path.display()
        )));
    }
    rdr.records()
        .enumerate()
        .map(|(k, rec)| {
            let rec = rec?;
            rec[0].trim().parse::<f64>().map_err(|_| {
                Error::InvalidConfig(format!("{}: row {} is not a number: {:?}", path.display(), k + 1, &rec[0]))
            })
        })
        .collect()
}

pub fn write_observations(path: impl AsRef<Path>, ys: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["y"])?;
    for y in ys {
        w.write_record([y.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `(lag, replicate, estimate)` rows.
pub fn write_sweep_csv(path: impl AsRef<Path>, sweep: &SweepResult) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["lag", "replicate", "estimate"])?;
    for s in &sweep.per_lag {
        for (r, v) in s.estimates.iter().enumerate() {
            w.write_record([s.lag.to_string(), r.to_string(), v.to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `(n, fixed_lag, cle, eve_count, enoch_count)` rows.
pub fn write_long_run_csv(path: impl AsRef<Path>, rows: &[LongRunRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_run_csv(path: impl AsRef<Path>, rows: &[RunRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `(n, failure_rate)` rows.
pub fn write_ci_csv(path: impl AsRef<Path>, rates: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv_writer(path)?;
    w.write_record(["n", "failure_rate"])?;
    for (m, r) in rates.iter().enumerate() {
        w.write_record([m.to_string(), r.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Summary<'a, R: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a ExperimentConfig,
    results: R,
}

/// JSON summary echoing the resolved configuration next to `results`.
pub fn write_summary<R: Serialize>(
    path: impl AsRef<Path>,
    command: &str,
    cfg: &ExperimentConfig,
    results: R,
) -> Result<()> {
    let summary = Summary {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        results,
    };
    write_json(path, &summary)
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
