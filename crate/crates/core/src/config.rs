//! Run configuration: a TOML file with one table per stage, layered as
//! built-in defaults, then a named profile, then the file, then `key=value`
//! overrides. Unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::detector::DetectorConfig;
use crate::error::{Error, Result};
use crate::event_builder::BuilderConfig;
use crate::harness::synth::SuiteParams;
use crate::memory::MemoryConfig;
use crate::pacing::PacingConfig;
use crate::pipeline::EngineConfig;
use crate::predictor::{Activation, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub seed: u64,
    /// Time responder calls in the emission log (makes logs non-reproducible).
    pub record_latency: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorSection {
    /// Model file; the identity baseline is used when unset.
    pub path: Option<PathBuf>,
    /// Hidden width for training; `2 d` when unset.
    pub hidden: Option<usize>,
    pub activation: Activation,
    pub train: TrainConfig,
}

impl Default for PredictorSection {
    fn default() -> Self {
        Self {
            path: None,
            hidden: None,
            activation: Activation::Silu,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessSection {
    pub suite: SuiteParams,
    pub tolerance_frames: u32,
    pub stride: usize,
    pub bench_sample_every: usize,
}

impl Default for HarnessSection {
    fn default() -> Self {
        Self {
            suite: SuiteParams::default(),
            tolerance_frames: 2,
            stride: 1,
            bench_sample_every: 120,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    pub input: Option<PathBuf>,
    pub emissions: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub detector: DetectorConfig,
    pub builder: BuilderConfig,
    pub memory: MemoryConfig,
    pub pacing: PacingConfig,
    pub predictor: PredictorSection,
    pub harness: HarnessSection,
    pub io: IoSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Default,
    /// `tau0 = 0.96`, `eta = 0.03`, thresholding the raw score.
    PaperDefaults,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Profile::Default),
            "paper-defaults" => Ok(Profile::PaperDefaults),
            other => Err(Error::InvalidConfig(format!("unknown profile {other:?}"))),
        }
    }
}

impl Profile {
    fn overlay(self) -> toml::Table {
        let text = match self {
            Profile::Default => "",
            Profile::PaperDefaults => {
                "[detector]\ntau0 = 0.96\neta = 0.03\nthreshold_mode = \"raw_score\"\n"
            }
        };
        text.parse().expect("built-in profile is valid TOML")
    }
}

fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override {spec:?} is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(Error::InvalidConfig(format!("bad override key {key:?}")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((path, value))
}

fn apply_override(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("override path is non-empty");
    let mut cursor = table;
    for p in parents {
        let entry = cursor
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry.as_table_mut().ok_or_else(|| {
            Error::InvalidConfig(format!("override path {} crosses a value", path.join(".")))
        })?;
    }
    cursor.insert(last.clone(), value);
    Ok(())
}

impl RunConfig {
    /// Builds a configuration from a profile, an optional file and overrides
    /// of the form `section.key=value`.
    pub fn load(profile: Profile, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = toml::Table::try_from(RunConfig::default())
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        merge(&mut table, profile.overlay());
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
            let user: toml::Table = text.parse().map_err(|e: toml::de::Error| {
                Error::InvalidConfig(format!("{}: {e}", path.display()))
            })?;
            merge(&mut table, user);
        }
        for spec in overrides {
            let (path, value) = parse_override(spec)?;
            apply_override(&mut table, &path, value)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.engine().validate()?;
        self.predictor.train.validate()?;
        if self.predictor.hidden == Some(0) {
            return Err(Error::InvalidConfig(
                "predictor: hidden must be >= 1".into(),
            ));
        }
        if self.harness.stride == 0 {
            return Err(Error::InvalidConfig("harness: stride must be >= 1".into()));
        }
        let s = &self.harness.suite;
        if !(s.min_duration > 0.0 && s.max_duration >= s.min_duration) {
            return Err(Error::InvalidConfig(
                "harness: need 0 < min_duration <= max_duration".into(),
            ));
        }
        Ok(())
    }

    pub fn engine(&self) -> EngineConfig {
        EngineConfig {
            detector: self.detector.clone(),
            builder: self.builder.clone(),
            memory: self.memory.clone(),
            pacing: self.pacing.clone(),
            record_latency: self.run.record_latency,
        }
    }
}
