//! Experiment specs for `sweep`: a grid of architectures, one swept
//! parameter, and seeds over a fixed base TrainConfig. The spec hash is
//! computed over a canonical form (tables key-sorted recursively), so
//! reordering fields in the file never changes the hash.

use ddse::encoder::Arch;
use ddse::trainer::TrainConfig;
use ddse::{Error, Result};
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptParam {
    /// s / n; s becomes round(value * n), at least 1.
    SparsityRatio,
    /// Code dimension m; values must be positive integers.
    FeatureDim,
    /// Fraction of the training pool, subsampled per seed.
    SampleFraction,
    /// Unrolled iteration count k; values must be nonnegative integers.
    Iterations,
}

impl SweptParam {
    pub fn tag(self) -> &'static str {
        match self {
            SweptParam::SparsityRatio => "sparsity_ratio",
            SweptParam::FeatureDim => "feature_dim",
            SweptParam::SampleFraction => "sample_fraction",
            SweptParam::Iterations => "iterations",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Architecture tags, each trained at every (value, seed).
    pub archs: Vec<String>,
    pub param: SweptParam,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Output directory; defaults to runs/sweep-<hash prefix>.
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Base pool fraction applied when `param` is not sample_fraction.
    #[serde(default)]
    pub sample_fraction: Option<f64>,
    /// Flat TrainConfig keys overriding the defaults for every run.
    #[serde(default)]
    pub train: toml::Table,
}

impl ExperimentSpec {
    pub fn parse(text: &str) -> Result<ExperimentSpec> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| Error::config(format!("spec file: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.archs.is_empty() || self.values.is_empty() || self.seeds.is_empty() {
            return Err(Error::config(
                "spec needs at least one arch, one value, and one seed",
            ));
        }
        for name in &self.archs {
            Arch::parse(name)?;
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("spec seeds must be distinct"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("spec values must be finite"));
        }
        let mut values = self.values.clone();
        values.sort_by(f64::total_cmp);
        if values.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("spec values must be distinct"));
        }
        if let Some(f) = self.sample_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::config(format!(
                    "spec sample_fraction must lie in (0, 1], got {f}"
                )));
            }
        }
        Ok(())
    }

    /// Base config shared by every run: defaults overlaid with [train].
    pub fn base_config(&self) -> Result<TrainConfig> {
        crate::config::merge_table(&TrainConfig::default(), self.train.clone())
    }

    /// Concrete TrainConfig and pool fraction for one (value, seed) cell.
    /// `n` is the input dimension, needed to turn a sparsity ratio into s.
    pub fn config_for(&self, value: f64, seed: u64, n: usize) -> Result<(TrainConfig, f64)> {
        let mut config = self.base_config()?;
        config.seed = seed;
        let mut fraction = self.sample_fraction.unwrap_or(1.0);
        match self.param {
            SweptParam::SparsityRatio => {
                if !(value > 0.0 && value <= 1.0) {
                    return Err(Error::config(format!(
                        "sparsity_ratio values must lie in (0, 1], got {value}"
                    )));
                }
                config.s = ((value * n as f64).round() as usize).max(1);
            }
            SweptParam::FeatureDim => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::config(format!(
                        "feature_dim values must be positive integers, got {value}"
                    )));
                }
                config.m = value as usize;
            }
            SweptParam::SampleFraction => {
                if !(value > 0.0 && value <= 1.0) {
                    return Err(Error::config(format!(
                        "sample_fraction values must lie in (0, 1], got {value}"
                    )));
                }
                fraction = value;
            }
            SweptParam::Iterations => {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::config(format!(
                        "iterations values must be nonnegative integers, got {value}"
                    )));
                }
                config.k = value as usize;
            }
        }
        config.validate()?;
        Ok((config, fraction))
    }
}

fn canonical(value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::String(s) => write!(out, "s:{s:?}").expect("string write"),
        toml::Value::Integer(i) => write!(out, "i:{i}").expect("string write"),
        toml::Value::Float(f) => write!(out, "f:{f}").expect("string write"),
        toml::Value::Boolean(b) => write!(out, "b:{b}").expect("string write"),
        toml::Value::Datetime(d) => write!(out, "d:{d}").expect("string write"),
        toml::Value::Array(items) => {
            out.push('[');
            for item in items {
                canonical(item, out);
                out.push(',');
            }
            out.push(']');
        }
        toml::Value::Table(table) => {
            let mut keys: Vec<&String> = table.keys().collect();
            keys.sort();
            out.push('{');
            for key in keys {
                write!(out, "{key:?}=").expect("string write");
                canonical(&table[key], out);
                out.push(';');
            }
            out.push('}');
        }
    }
}

/// Order-independent hash of the spec file contents.
pub fn spec_hash(text: &str) -> Result<String> {
    let value: toml::Value =
        toml::from_str(text).map_err(|e| Error::config(format!("spec file: {e}")))?;
    let mut canon = String::new();
    canonical(&value, &mut canon);
    let digest = Sha256::digest(canon.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        write!(hex, "{byte:02x}").expect("string write");
    }
    Ok(hex)
}

/// One completed training run inside a sweep.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub arch: String,
    pub param: &'static str,
    pub value: f64,
    pub seed: u64,
    pub error: f64,
    pub nonzeros: usize,
    pub wall_time_s: f64,
    pub spec_hash: String,
    /// Path of the run's history.csv relative to the sweep directory.
    pub history: String,
}

pub const RECORDS_HEADER: &str =
    "arch,param,value,seed,error,nonzeros,wall_time_s,spec_hash,history";

impl RunRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.arch,
            self.param,
            self.value,
            self.seed,
            self.error,
            self.nonzeros,
            self.wall_time_s,
            self.spec_hash,
            self.history
        )
    }
}
