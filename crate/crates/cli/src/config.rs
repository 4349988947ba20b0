//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use lacnn::{Error, Result};

/// Settings read from a config file. Command-line flags take precedence over
/// these, and these over built-in defaults.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

pub const KNOWN_KEYS: &[&str] = &[
    "manifest",
    "mode",
    "trait",
    "seed",
    "rotations",
    "epochs",
    "lr",
    "lambda",
    "momentum",
    "batch_size",
    "size",
    "test_fraction",
    "loss",
    "out",
];

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("config line {}: expected key = value", i + 1)))?;
            let k = k.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(Error::InvalidConfig(format!(
                    "config line {}: unknown key '{k}'",
                    i + 1
                )));
            }
            let v = v.trim().trim_matches('"').to_string();
            values.insert(k, v);
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// `flag`, else the config value, else `default`.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        match self.raw(key) {
            Some(s) => s
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("config value for '{key}' is invalid: '{s}'"))),
            None => Ok(default),
        }
    }

    pub fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.raw(key)
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::InvalidConfig(format!("config value for '{key}' is invalid: '{s}'")))
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence() {
        let c = ConfigFile::parse("# run\nepochs = 5\nlr=0.1\n").unwrap();
        assert_eq!(c.pick(Some(9usize), "epochs", 30).unwrap(), 9);
        assert_eq!(c.pick(None, "epochs", 30usize).unwrap(), 5);
        assert_eq!(c.pick(None, "seed", 3u64).unwrap(), 3);
        assert_eq!(c.pick(None, "lr", 0.01f64).unwrap(), 0.1);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ConfigFile::parse("epoch = 5").is_err());
        assert!(ConfigFile::parse("epochs 5").is_err());
        let c = ConfigFile::parse("epochs = five").unwrap();
        assert!(c.pick(None, "epochs", 1usize).is_err());
    }
}
