//! `key = value` configuration files. Flags given on the command line take
//! precedence over file entries.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use super::CliError;

#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

fn normalize(key: &str) -> String {
    key.trim().trim_start_matches("--").replace('_', "-")
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("--config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "config line {}: expected `key = value`",
                    lineno + 1
                ))
            })?;
            let v = v.trim().trim_matches('"').to_string();
            entries.insert(normalize(k), v);
        }
        Ok(ConfigFile {
            entries,
            used: RefCell::new(BTreeSet::new()),
        })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        let k = normalize(key);
        let v = self.entries.get(&k)?;
        self.used.borrow_mut().insert(k);
        Some(v.as_str())
    }

    /// `flag`, else the file entry for `key`, else `None`.
    pub fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        // mark the key as consumed even when the flag overrides it
        let file = self.raw(key);
        if flag.is_some() {
            return Ok(flag);
        }
        match file {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config key {key}: cannot parse {v:?}"))),
        }
    }

    pub fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }

    /// Fails on entries that no command option consumed.
    pub fn check_unused(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        let unknown: Vec<&String> = self.entries.keys().filter(|k| !used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!("unknown config keys: {unknown:?}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let c = ConfigFile::parse("alpha1 = -2\n# comment\nsigma_1 = 0.5\n").unwrap();
        assert_eq!(c.or(None, "alpha1", -1.0).unwrap(), -2.0);
        assert_eq!(c.or(Some(3.0), "alpha1", -1.0).unwrap(), 3.0);
        assert!(c.check_unused().is_err());
        assert_eq!(c.or(None, "sigma-1", 0.0).unwrap(), 0.5);
        assert!(c.check_unused().is_ok());
    }

    #[test]
    fn malformed_lines() {
        assert!(ConfigFile::parse("alpha1 -2").is_err());
        let c = ConfigFile::parse("alpha1 = x").unwrap();
        assert!(c.or(None, "alpha1", 0.0f64).is_err());
    }
}
