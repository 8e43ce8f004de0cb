//! Flat `key=value` configuration shared by every component.
//!
//! Precedence is applied by the caller: start from built-in defaults, apply
//! the map parsed from a config file, then apply command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Ordered key/value pairs. Later `set` calls win.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfigMap {
    entries: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `key=value` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = Self::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            map.set_pair(line).map_err(|e| match e {
                Error::InvalidArgument(msg) => Error::parse(format!("line {}", idx + 1), msg),
                other => other,
            })?;
        }
        Ok(map)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Applies a single `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got `{pair}`")))?;
        let key = k.trim();
        if key.is_empty() {
            return Err(Error::InvalidArgument(format!("empty key in `{pair}`")));
        }
        self.entries.insert(key.to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn merge(&mut self, other: &ConfigMap) {
        for (k, v) in &other.entries {
            self.entries.insert(k.clone(), v.clone());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Keys not claimed by any of the given key sets.
    pub fn unknown_keys<'a>(&'a self, known: &[&[&str]]) -> Vec<&'a str> {
        self.entries
            .keys()
            .map(String::as_str)
            .filter(|k| !known.iter().any(|set| set.contains(k)))
            .collect()
    }

    /// Canonical text form: sorted `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push('=');
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

impl FromIterator<(String, String)> for ConfigMap {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        Self { entries: iter.into_iter().collect() }
    }
}

/// A configuration struct that reads and writes its fields by key.
pub trait KvConfig: Sized {
    const KEYS: &'static [&'static str];

    /// Sets one field. Returns `Ok(false)` if the key is not one of ours.
    fn set_kv(&mut self, key: &str, value: &str) -> Result<bool>;

    fn to_kv(&self) -> Vec<(&'static str, String)>;

    /// Validates cross-field invariants.
    fn validate(&self) -> Result<()>;

    fn apply(&mut self, map: &ConfigMap) -> Result<()> {
        for (k, v) in map.iter() {
            self.set_kv(k, v)?;
        }
        self.validate()
    }

    fn from_map(map: &ConfigMap) -> Result<Self>
    where
        Self: Default,
    {
        let mut cfg = Self::default();
        cfg.apply(map)?;
        Ok(cfg)
    }

    fn to_map(&self) -> ConfigMap {
        self.to_kv().into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }
}

/// Parses a config value, naming the key on failure.
pub fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

/// Formats a float so that it parses back to the identical value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blank_lines() {
        let map = ConfigMap::parse("# hi\n\narena_size = 150\nseed=3\n").unwrap();
        assert_eq!(map.get("arena_size"), Some("150"));
        assert_eq!(map.get("seed"), Some("3"));
    }

    #[test]
    fn missing_equals_reports_line() {
        let err = ConfigMap::parse("a=1\nbogus\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn later_values_override() {
        let mut base = ConfigMap::parse("a=1\nb=2").unwrap();
        let mut over = ConfigMap::new();
        over.set_pair("b=5").unwrap();
        base.merge(&over);
        assert_eq!(base.get("b"), Some("5"));
        assert_eq!(base.to_text(), "a=1\nb=5\n");
    }

    #[test]
    fn float_formatting_round_trips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, 120.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
