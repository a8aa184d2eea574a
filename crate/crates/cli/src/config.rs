//! Flat `key=value` configuration with strict key checking.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::Failure;

/// Keys accepted by every lab subcommand.
pub const COMMON_KEYS: &[&str] = &["seed", "replicates", "out"];

/// Parsed key-value pairs; later sources override earlier ones.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Params {
    map: BTreeMap<String, String>,
}

impl Params {
    pub fn from_map(map: BTreeMap<String, String>) -> Self {
        Self { map }
    }

    /// Reads a config file (one `key=value` per line, `#` comments) and
    /// applies the command-line pairs on top.
    pub fn load(file: Option<&Path>, pairs: &[String]) -> Result<Self, Failure> {
        let mut params = Self::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
            for (n, line) in text.lines().enumerate() {
                let line = line.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                params.insert_pair(line).map_err(|e| match e {
                    Failure::Usage(m) => Failure::Usage(format!("{}:{}: {m}", path.display(), n + 1)),
                    other => other,
                })?;
            }
        }
        for p in pairs {
            params.insert_pair(p)?;
        }
        Ok(params)
    }

    fn insert_pair(&mut self, pair: &str) -> Result<(), Failure> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("expected key=value, got `{pair}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Failure::Usage(format!("empty key in `{pair}`")));
        }
        self.map.insert(k.to_string(), v.to_string());
        Ok(())
    }

    /// Fails on the first key outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<(), Failure> {
        for k in self.map.keys() {
            if !allowed.contains(&k.as_str()) {
                let mut known: Vec<&str> = allowed.to_vec();
                known.sort_unstable();
                return Err(Failure::Usage(format!(
                    "unknown key `{k}`; accepted keys: {}",
                    known.join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn map(&self) -> &BTreeMap<String, String> {
        &self.map
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.map.insert(key.to_string(), value.into());
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T, Failure> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Failure::Usage(format!("bad value `{v}` for `{key}`"))),
        }
    }

    /// Real number; also accepts fractions such as `1/10`.
    pub fn real(&self, key: &str, default: f64) -> Result<f64, Failure> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => parse_real(v).ok_or_else(|| Failure::Usage(format!("bad number `{v}` for `{key}`"))),
        }
    }

    pub fn flag(&self, key: &str, default: bool) -> Result<bool, Failure> {
        match self.raw(key) {
            None => Ok(default),
            Some("1" | "true" | "yes" | "on") => Ok(true),
            Some("0" | "false" | "no" | "off") => Ok(false),
            Some(v) => Err(Failure::Usage(format!("bad flag `{v}` for `{key}`"))),
        }
    }

    /// Comma-separated reals.
    pub fn reals(&self, key: &str) -> Result<Option<Vec<f64>>, Failure> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(|s| parse_real(s.trim()).ok_or_else(|| Failure::Usage(format!("bad list `{v}` for `{key}`"))))
                    .collect()
            })
            .transpose()
    }
}

pub fn parse_real(s: &str) -> Option<f64> {
    let v = match s.split_once('/') {
        Some((n, d)) => n.trim().parse::<f64>().ok()? / d.trim().parse::<f64>().ok()?,
        None => s.parse().ok()?,
    };
    v.is_finite().then_some(v)
}
