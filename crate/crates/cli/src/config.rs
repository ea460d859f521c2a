//! `key = value` configuration with `[section]` headers.
//!
//! Top-level keys live in the unnamed section and are addressed by bare
//! name; everything else is `section.key`. Values are kept as text and
//! parsed on demand, so the canonical form hashes exactly what was given.

use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("key `{key}`: cannot parse `{value}` as {expected}")]
    BadValue { key: String, value: String, expected: &'static str },
    #[error("{0}")]
    Invalid(String),
    #[error("unknown experiment `{0}` (see `mms list`)")]
    UnknownExperiment(String),
    #[error("experiment `{0}` is randomized and needs a seed (--seed, `seed = …`, or MMS_SEED)")]
    MissingSeed(String),
}

/// Every key the tool understands.
pub const KNOWN_KEYS: &[&str] = &[
    "experiment",
    "seed",
    "space.kind",
    "space.model",
    "space.grid",
    "space.spacing",
    "space.radius",
    "space.norm",
    "space.path",
    "params.K",
    "params.N",
    "params.p",
    "params.tau",
    "params.steps",
    "params.tol",
    "params.samples",
    "output.dir",
];

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Config::default();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| ConfigError::Syntax { line: i + 1, msg: "unterminated section header".into() })?.trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                    return Err(ConfigError::Syntax { line: i + 1, msg: format!("bad section name `{name}`") });
                }
                section = name.to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, msg: "expected `key = value`".into() })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || v.is_empty() {
                return Err(ConfigError::Syntax { line: i + 1, msg: "empty key or value".into() });
            }
            let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            if cfg.entries.contains_key(&key) {
                return Err(ConfigError::Syntax { line: i + 1, msg: format!("duplicate key `{key}`") });
            }
            cfg.set(&key, v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.into()));
        }
        self.entries.insert(key.into(), value.trim().into());
        Ok(())
    }

    /// Apply `section.key=value` overrides on top of the file.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| ConfigError::Invalid(format!("override `{assignment}` is not `key=value`")))?;
        self.set(k.trim(), v)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str, expected: &'static str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::BadValue { key: key.into(), value: v.into(), expected }),
        }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.get::<f64>(key, "a number")?.unwrap_or(default);
        if !v.is_finite() {
            return Err(ConfigError::BadValue { key: key.into(), value: v.to_string(), expected: "a finite number" });
        }
        Ok(v)
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.get::<usize>(key, "a nonnegative integer")?.unwrap_or(default))
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.entries
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_string().as_bytes()))
    }
}

impl fmt::Display for Config {
    /// Canonical form: sorted `key = value` lines, sections flattened.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// `64x64` or `101` into lattice dimensions.
pub fn parse_dims(text: &str) -> Result<Vec<usize>, ConfigError> {
    let dims: Option<Vec<usize>> = text.split('x').map(|p| p.trim().parse().ok().filter(|d| *d >= 2)).collect();
    match dims {
        Some(d) if (1..=3).contains(&d.len()) => Ok(d),
        _ => Err(ConfigError::BadValue { key: "space.grid".into(), value: text.into(), expected: "dimensions like 64x64 (1-3 axes, each ≥ 2)" }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_flatten_into_dotted_keys() {
        let cfg = Config::parse("experiment = heatflow\nseed = 4 # trailing\n\n[params]\ntau = 1e-3\n[space]\ngrid=8x8\n").unwrap();
        assert_eq!(cfg.raw("experiment"), Some("heatflow"));
        assert_eq!(cfg.raw("params.tau"), Some("1e-3"));
        assert_eq!(cfg.raw("space.grid"), Some("8x8"));
        assert_eq!(cfg.usize_or("seed", 0).unwrap(), 4);
    }

    #[test]
    fn hash_ignores_layout_but_not_values() {
        let a = Config::parse("[params]\nK = 1\nN = 2\n").unwrap();
        let b = Config::parse("# same\n[params]\n  N=2\nK=1\n").unwrap();
        let c = Config::parse("[params]\nK = 1\nN = 3\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(matches!(Config::parse("[params\nK=1"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(Config::parse("K 1"), Err(ConfigError::Syntax { .. })));
        assert!(matches!(Config::parse("[params]\nbogus = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(Config::parse("seed = 1\nseed = 2"), Err(ConfigError::Syntax { line: 2, .. })));
        let cfg = Config::parse("[params]\nK = one").unwrap();
        assert!(matches!(cfg.f64_or("params.K", 0.0), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut cfg = Config::parse("[params]\nN = 2").unwrap();
        cfg.apply_override("params.N=5").unwrap();
        assert_eq!(cfg.f64_or("params.N", 0.0).unwrap(), 5.0);
        assert!(cfg.apply_override("params.N").is_err());
    }

    #[test]
    fn grid_dimensions() {
        assert_eq!(parse_dims("64x32").unwrap(), vec![64, 32]);
        assert_eq!(parse_dims("7").unwrap(), vec![7]);
        assert!(parse_dims("1x4").is_err());
        assert!(parse_dims("2x2x2x2").is_err());
        assert!(parse_dims("ax3").is_err());
    }
}
