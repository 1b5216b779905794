//! Flat `key = value` run configuration.
//!
//! Keys match the long flag names (`cases`, `J`, `iterations`, ...) plus the
//! model parameter names (`beta_before`, `theta`, `E0`, ...). Flags given on
//! the command line win over the file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const PARAM_KEYS: [&str; 17] = [
    "beta_before", "mu_before", "Z_before", "D_before", "alpha_before", "Td_before",
    "beta_after", "mu_after", "Z_after", "D_after", "alpha_after", "Td_after",
    "theta", "tau", "sigma_SE", "E0", "A0",
];

const SETTING_KEYS: [&str; 30] = [
    "cases", "geo", "mobility", "population", "out", "seed", "source", "lockdown_time",
    "gravity_factor", "start_date", "days", "reps", "method", "J", "blocks", "iterations",
    "starts", "eval_reps", "eval_J", "cooling", "rw_sd", "param", "grid", "profile",
    "confidence", "span", "model", "benchmark", "top", "probs",
];

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::user(format!("config line {}: expected key = value", i + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !is_known(k) {
                return Err(CliError::user(format!("config line {}: unknown key `{k}`", i + 1)));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(CliError::user(format!("config line {}: duplicate key `{k}`", i + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::user(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Records a value that came from a flag, overriding the file.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn set_opt<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| CliError::user(format!("`{key}` = `{v}`: {e}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> CliResult<PathBuf> {
        self.path(key)
            .ok_or_else(|| CliError::user(format!("missing `{key}` (flag --{key} or config key)")))
    }

    /// Model parameter overrides, in key order.
    pub fn param_overrides(&self) -> CliResult<Vec<(String, f64)>> {
        PARAM_KEYS
            .iter()
            .filter_map(|k| self.raw(k).map(|v| (k, v)))
            .map(|(k, v)| {
                v.parse::<f64>()
                    .map(|x| (k.to_string(), x))
                    .map_err(|e| CliError::user(format!("parameter `{k}` = `{v}`: {e}")))
            })
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

fn is_known(k: &str) -> bool {
    PARAM_KEYS.contains(&k) || SETTING_KEYS.contains(&k)
}

/// Parses `KEY=VALUE`.
pub fn parse_assignment(s: &str) -> Result<(String, String), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected KEY=VALUE, got `{s}`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let mut c = RunConfig::parse("# run\ncases = a.csv\nJ=500 # particles\ntheta = 2.5\n").unwrap();
        assert_eq!(c.raw("cases"), Some("a.csv"));
        assert_eq!(c.get::<usize>("J").unwrap(), Some(500));
        c.set("J", 10);
        assert_eq!(c.get_or::<usize>("J", 1).unwrap(), 10);
        assert_eq!(c.param_overrides().unwrap(), vec![("theta".to_string(), 2.5)]);
    }

    #[test]
    fn rejects_unknown_duplicate_and_malformed() {
        assert!(RunConfig::parse("partcles = 3").is_err());
        assert!(RunConfig::parse("J = 1\nJ = 2").is_err());
        assert!(RunConfig::parse("just words").is_err());
        let c = RunConfig::parse("J = many").unwrap();
        assert!(c.get::<usize>("J").is_err());
    }
}
