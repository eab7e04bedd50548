//! `key = value` configuration files.
//!
//! One setting per line; `#` starts a comment; keys use the same spelling as
//! the corresponding long flag (without the leading dashes). Command-line
//! flags always win over config-file values.

use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

/// Parsed configuration file contents, with every key that was consumed
/// tracked so typos can be reported instead of silently ignored.
pub struct ConfigFile {
    path: String,
    values: BTreeMap<String, String>,
    consumed: std::cell::RefCell<Vec<String>>,
}

impl ConfigFile {
    /// An empty configuration, used when no `--config` was given.
    pub fn empty() -> Self {
        ConfigFile {
            path: String::new(),
            values: BTreeMap::new(),
            consumed: std::cell::RefCell::new(Vec::new()),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Data(format!("cannot read config file {}: {e}", path.display()))
        })?;
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    idx + 1
                ))
            })?;
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigFile {
            path: path.display().to_string(),
            values,
            consumed: std::cell::RefCell::new(Vec::new()),
        })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        let value = self.values.get(key);
        if value.is_some() {
            self.consumed.borrow_mut().push(key.to_string());
        }
        value.map(|s| s.as_str())
    }

    /// `flag` if given, else the config value under `key`, else `default`.
    pub fn resolve<T: std::str::FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
        default: T,
    ) -> Result<T, CliError> {
        match flag {
            Some(v) => {
                self.raw(key); // mark consumed even when overridden
                Ok(v)
            }
            None => match self.raw(key) {
                Some(text) => text.parse().map_err(|_| {
                    CliError::Usage(format!(
                        "{}: invalid value `{text}` for key `{key}`",
                        self.path
                    ))
                }),
                None => Ok(default),
            },
        }
    }

    /// Boolean settings: a `--flag` switch wins; config accepts true/false.
    pub fn resolve_switch(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        if flag {
            self.raw(key);
            return Ok(true);
        }
        match self.raw(key) {
            Some("true") | Some("1") => Ok(true),
            Some("false") | Some("0") | None => Ok(false),
            Some(other) => Err(CliError::Usage(format!(
                "{}: key `{key}` must be true or false, got `{other}`",
                self.path
            ))),
        }
    }

    /// Reject config keys nothing consumed: they are always spelling errors.
    pub fn finish(&self) -> Result<(), CliError> {
        let consumed = self.consumed.borrow();
        let unknown: Vec<&String> = self
            .values
            .keys()
            .filter(|k| !consumed.contains(k))
            .collect();
        if let Some(first) = unknown.first() {
            return Err(CliError::Usage(format!(
                "{}: unknown config key `{first}`",
                self.path
            )));
        }
        Ok(())
    }
}
