//! Flat `key = value` config files with `[section]` headers.
//!
//! ```text
//! # comment
//! [decode]
//! k = 9
//! ratios = 0.01, 0.02, 0.04
//!
//! [qos]
//! tau = 33.3, 15, inf
//! ```
//!
//! Keys are addressed as `section.key`; keys before any section have no
//! prefix. Command-line flags override file values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    CliError::Usage(format!("config line {}: unterminated section", i + 1))
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected key = value", i + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Usage(format!("config line {}: empty key", i + 1)));
            }
            let full = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            if values
                .insert(full.clone(), value.trim().to_string())
                .is_some()
            {
                return Err(CliError::Usage(format!(
                    "config line {}: duplicate key {full}",
                    i + 1
                )));
            }
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Keys under `section.`, with the prefix stripped.
    pub fn section<'a>(
        &'a self,
        section: &'a str,
    ) -> impl Iterator<Item = (&'a str, &'a str)> + 'a {
        self.values.iter().filter_map(move |(k, v)| {
            k.strip_prefix(section)
                .and_then(|rest| rest.strip_prefix('.'))
                .map(|rest| (rest, v.as_str()))
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key).map(|v| parse_value(key, v)).transpose()
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, CliError> {
        self.raw(key).map(|v| parse_list(key, v)).transpose()
    }
}

pub fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid value {v:?} for {key}")))
}

/// Comma-separated values; empty items are rejected.
pub fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError> {
    v.split(',').map(|item| parse_value(key, item)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let c = ConfigFile::parse("top = 1\n# note\n[decode]\nk = 9 # inline\nratios = 0.01, 0.02\n[qos]\ntau = 33.3,inf\n").unwrap();
        assert_eq!(c.get::<u32>("top").unwrap(), Some(1));
        assert_eq!(c.get::<usize>("decode.k").unwrap(), Some(9));
        assert_eq!(
            c.get_list::<f64>("decode.ratios").unwrap(),
            Some(vec![0.01, 0.02])
        );
        let taus = c.get_list::<f64>("qos.tau").unwrap().unwrap();
        assert_eq!(taus[1], f64::INFINITY);
        assert_eq!(c.get::<usize>("decode.missing").unwrap(), None);
        assert_eq!(c.section("decode").count(), 2);
    }

    #[test]
    fn rejects_garbage() {
        assert!(ConfigFile::parse("[decode\n").is_err());
        assert!(ConfigFile::parse("novalue\n").is_err());
        assert!(ConfigFile::parse("a = 1\na = 2\n").is_err());
        let c = ConfigFile::parse("k = nine").unwrap();
        assert!(c.get::<usize>("k").is_err());
    }
}
