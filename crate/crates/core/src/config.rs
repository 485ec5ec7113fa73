//! Flat `key = value` run files.
//!
//! Grammar: one assignment per line, `identifier = value`, where `value` is a
//! decimal literal (optionally with exponent) or, for `kind`, a model-kind
//! identifier. `#` starts a comment; blank lines are ignored. Each key may
//! appear at most once and unknown keys are rejected. Model keys that are
//! absent take their baseline values.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::blowup::BlowupConfig;
use crate::model::{ModelError, ModelKind, ModelParams, ParamName};
use crate::solve::IntegratorConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
    },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Model parameters plus optional numerical overrides.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunConfig {
    pub params: ModelParams,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub max_steps: Option<usize>,
    /// Blow-up threshold.
    pub theta: Option<f64>,
    pub t_max: Option<f64>,
}

const MODEL_KEYS: [&str; 10] = ["R", "K", "M", "p", "C", "D", "E", "A", "tau", "u"];
const OVERRIDE_KEYS: [&str; 5] = ["rtol", "atol", "max_steps", "theta", "t_max"];

impl RunConfig {
    pub fn from_params(params: ModelParams) -> Self {
        RunConfig {
            params,
            ..Default::default()
        }
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("expected `key = value`, found `{body}`"),
                });
            };
            let (key, value) = (k.trim(), v.trim());
            if !is_identifier(key) {
                return Err(ConfigError::Syntax {
                    line,
                    message: format!("`{key}` is not an identifier"),
                });
            }
            if seen.iter().any(|s| s == key) {
                return Err(ConfigError::DuplicateKey {
                    line,
                    key: key.into(),
                });
            }
            seen.push(key.into());
            let invalid = || ConfigError::InvalidValue {
                line,
                key: key.into(),
                value: value.into(),
            };
            if key == "kind" {
                cfg.params.kind = value.parse::<ModelKind>().map_err(|_| invalid())?;
            } else if MODEL_KEYS.contains(&key) {
                let name: ParamName = key.parse().map_err(|_| invalid())?;
                cfg.params
                    .set(name, parse_decimal(value).ok_or_else(invalid)?);
            } else if key == "max_steps" {
                let v = value.parse::<usize>().map_err(|_| invalid())?;
                cfg.max_steps = Some(v);
            } else if OVERRIDE_KEYS.contains(&key) {
                let v = Some(parse_decimal(value).ok_or_else(invalid)?);
                match key {
                    "rtol" => cfg.rtol = v,
                    "atol" => cfg.atol = v,
                    "theta" => cfg.theta = v,
                    _ => cfg.t_max = v,
                }
            } else {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.into(),
                });
            }
        }
        cfg.params.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Canonical text form; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for key in MODEL_KEYS {
            let name: ParamName = key.parse().expect("model key");
            let _ = writeln!(out, "{key} = {:?}", self.params.get(name));
        }
        let _ = writeln!(out, "kind = {}", self.params.kind);
        let opt = [
            ("rtol", self.rtol),
            ("atol", self.atol),
            ("theta", self.theta),
            ("t_max", self.t_max),
        ];
        for (k, v) in opt {
            if let Some(v) = v {
                let _ = writeln!(out, "{k} = {v:?}");
            }
        }
        if let Some(n) = self.max_steps {
            let _ = writeln!(out, "max_steps = {n}");
        }
        out
    }

    pub fn integrator(&self) -> IntegratorConfig {
        let mut c = IntegratorConfig::default();
        if let Some(v) = self.rtol {
            c.rtol = v;
        }
        if let Some(v) = self.atol {
            c.atol = v;
        }
        if let Some(v) = self.max_steps {
            c.max_steps = v;
        }
        c
    }

    pub fn blowup(&self) -> BlowupConfig {
        let mut c = BlowupConfig {
            integrator: self.integrator(),
            ..BlowupConfig::default()
        };
        if let Some(v) = self.theta {
            c.threshold = v;
        }
        if let Some(v) = self.t_max {
            c.t_max = v;
        }
        c
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Decimal literal: optional sign, digits with optional fraction, optional
/// exponent. Rejects `inf`, `nan` and hexadecimal forms.
fn parse_decimal(s: &str) -> Option<f64> {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(i) => (&body[..i], Some(&body[i + 1..])),
        None => (body, None),
    };
    let digits = mantissa.replacen('.', "", 1);
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    if let Some(e) = exponent {
        let e = e.strip_prefix(['+', '-']).unwrap_or(e);
        if e.is_empty() || !e.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
    }
    s.parse().ok()
}
