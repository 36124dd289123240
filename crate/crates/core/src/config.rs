//! Experiment configuration files and command-line overrides.
//!
//! A config is a TOML document mirroring [`ExperimentConfig`]; every key is
//! optional and unknown keys are rejected. Overrides use dotted paths
//! (`topology.gamma=0.3`) and are applied to the document before it is
//! typed, so they go through the same checks as the file.

use std::path::Path;

use thiserror::Error;

use crate::error::ParamError;
use crate::harness::ExperimentConfig;
use crate::topology::TopologyError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Read { path: String, reason: String },
    #[error("config error: {0}")]
    Parse(String),
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("malformed override `{0}`, expected key=value")]
    Override(String),
    #[error("unknown scenario `{name}`; valid scenarios: {valid}")]
    UnknownScenario { name: String, valid: String },
}

impl ConfigError {
    /// The offending key, when the error is about one value.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { key, .. } => Some(key),
            _ => None,
        }
    }

    fn prefixed(prefix: &str, e: ParamError) -> Self {
        ConfigError::Invalid {
            key: format!("{prefix}{}", e.key),
            reason: e.reason,
        }
    }
}

impl From<ParamError> for ConfigError {
    fn from(e: ParamError) -> Self {
        ConfigError::prefixed("", e)
    }
}

impl ExperimentConfig {
    /// Checks every section; keys in errors are dotted paths.
    pub fn check(&self) -> Result<(), ConfigError> {
        match self.topology.validate() {
            Ok(()) => {}
            Err(TopologyError::InvalidParameter { key, reason }) => {
                return Err(ConfigError::prefixed("topology.", ParamError { key, reason }))
            }
            Err(other) => {
                return Err(ConfigError::Invalid {
                    key: "topology".into(),
                    reason: other.to_string(),
                })
            }
        }
        self.params
            .validate()
            .map_err(|e| ConfigError::prefixed("params.", e))?;
        self.validate().map_err(ConfigError::from)
    }
}

/// Parses `key=value`. The value is read as a TOML value when possible
/// (numbers, booleans, arrays) and as a bare string otherwise.
pub fn parse_override(spec: &str) -> Result<(Vec<String>, toml::Value), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(spec.to_string()))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::Override(spec.to_string()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((path, value))
}

pub fn apply_override(doc: &mut toml::Table, path: &[String], value: toml::Value) -> Result<(), ConfigError> {
    let (last, parents) = path.split_last().expect("override path is never empty");
    let mut table = doc;
    for (i, part) in parents.iter().enumerate() {
        let entry = table
            .entry(part.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| ConfigError::Invalid {
            key: path[..=i].join("."),
            reason: "is not a table".into(),
        })?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

/// Applies `key=value` overrides, then types and checks the document.
pub fn resolve(mut doc: toml::Table, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    for spec in overrides {
        let (path, value) = parse_override(spec)?;
        apply_override(&mut doc, &path, value)?;
    }
    let cfg: ExperimentConfig = toml::Value::Table(doc)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_string()))?;
    cfg.check()?;
    Ok(cfg)
}

pub fn parse_document(text: &str) -> Result<toml::Table, ConfigError> {
    text.parse::<toml::Table>()
        .map_err(|e| ConfigError::Parse(e.to_string().trim_end().to_string()))
}

pub fn load(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    resolve(parse_document(&text)?, overrides)
}

/// The document form of a typed config, for overriding or echoing.
pub fn to_document(cfg: &ExperimentConfig) -> toml::Table {
    match toml::Value::try_from(cfg).expect("config serializes") {
        toml::Value::Table(t) => t,
        _ => unreachable!("config serializes to a table"),
    }
}

pub fn to_toml_string(cfg: &ExperimentConfig) -> String {
    toml::to_string(cfg).expect("config serializes")
}
