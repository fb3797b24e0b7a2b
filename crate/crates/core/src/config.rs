//! `key = value` configuration text shared by the model, training and CLI.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Ordered key/value pairs; blank lines and `#` comments are skipped.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`, got {raw:?}", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::config(format!("line {}: empty key", n + 1)));
            }
            entries.push((k.to_string(), v.trim().to_string()));
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses a single `key=value` override.
    pub fn parse_override(text: &str) -> Result<(String, String)> {
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| Error::config(format!("override {text:?} is not key=value")))?;
        Ok((k.trim().to_string(), v.trim().to_string()))
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push((key.into(), value.into()));
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn render(entries: &[(String, String)]) -> String {
        entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// A configuration that can be updated one key at a time and echoed back.
pub trait Configurable {
    /// Applies one setting; unknown keys are config errors.
    fn set(&mut self, key: &str, value: &str) -> Result<()>;

    /// Every resolved setting, in a stable order.
    fn entries(&self) -> Vec<(String, String)>;

    fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.entries().iter().try_for_each(|(k, v)| self.set(k, v))
    }

    fn render(&self) -> String {
        KeyValues::render(&self.entries())
    }
}

pub fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: Display,
{
    value.parse().map_err(|e| Error::config(format!("{key} = {value:?}: {e}")))
}

pub fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>>
where
    V::Err: Display,
{
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

/// A real number written either as a decimal or as `a/b`.
pub fn parse_ratio(key: &str, value: &str) -> Result<f64> {
    match value.split_once('/') {
        Some((a, b)) => {
            let (a, b): (f64, f64) = (parse_value(key, a.trim())?, parse_value(key, b.trim())?);
            if b == 0.0 {
                return Err(Error::config(format!("{key} = {value:?}: zero denominator")));
            }
            Ok(a / b)
        }
        None => parse_value(key, value),
    }
}

pub fn join<V: Display>(values: &[V]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let kv = KeyValues::parse("# header\nheight = 64\n\nscales = 4, 2, 1/2  # trailing\n").unwrap();
        assert_eq!(kv.entries().len(), 2);
        assert_eq!(kv.entries()[1], ("scales".to_string(), "4, 2, 1/2".to_string()));
        assert!(KeyValues::parse("height 64").is_err());
        assert_eq!(KeyValues::parse_override("lr=1e-3").unwrap(), ("lr".into(), "1e-3".into()));
        assert_eq!(parse_ratio("s", "1/2").unwrap(), 0.5);
        assert_eq!(parse_list::<usize>("s", "1, 3").unwrap(), [1, 3]);
        assert!(parse_value::<usize>("n", "x").is_err());
    }
}
