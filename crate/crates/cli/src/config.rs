//! `key = value` configuration files.
//!
//! Keys before any section header apply to every subcommand that has a
//! flag of that name. Keys under `[name]` apply only to subcommand `name`
//! and must be flags of it. `#` starts a comment. Keys accept `-` or `_`.
//! A value wrapped in double quotes keeps its inner whitespace.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use crate::UsageError;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    global: BTreeMap<String, String>,
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, UsageError> {
        let mut cfg = ConfigFile::default();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(name.trim().to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("config line {}: expected `key = value`", i + 1)))?;
            let key = normalize(k);
            if key.is_empty() {
                return Err(UsageError(format!("config line {}: empty key", i + 1)));
            }
            let map = match &section {
                Some(s) => cfg.sections.entry(s.clone()).or_default(),
                None => &mut cfg.global,
            };
            let v = v.trim();
            let v = v.strip_prefix('"').and_then(|x| x.strip_suffix('"')).unwrap_or(v);
            map.insert(key, v.to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Values for `command`, checked against its flags (`own`), the flags of
    /// every subcommand (`any`) and the subcommand names.
    pub fn for_command(
        &self,
        command: &str,
        own: &BTreeSet<String>,
        any: &BTreeSet<String>,
        commands: &BTreeSet<String>,
    ) -> Result<Settings, UsageError> {
        let mut values = BTreeMap::new();
        for (k, v) in &self.global {
            if !any.contains(k) {
                return Err(UsageError(format!("config: unknown key `{k}`")));
            }
            if own.contains(k) {
                values.insert(k.clone(), v.clone());
            }
        }
        if let Some(sec) = self.sections.get(command) {
            for (k, v) in sec {
                if !own.contains(k) {
                    return Err(UsageError(format!("config [{command}]: `{k}` is not a flag of {command}")));
                }
                values.insert(k.clone(), v.clone());
            }
        }
        for name in self.sections.keys() {
            if !commands.contains(name) {
                return Err(UsageError(format!("config: unknown section [{name}]")));
            }
        }
        Ok(Settings { values })
    }
}

/// Config-file values for one subcommand. Flags take precedence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// The flag if given, else the config value, else `None`.
    pub fn opt<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, UsageError>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| UsageError(format!("config `{key} = {v}`: {e}"))),
        }
    }

    pub fn or<T: FromStr>(&self, key: &str, flag: Option<T>, default: T) -> Result<T, UsageError>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.opt(key, flag)?.unwrap_or(default))
    }

    pub fn req<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<T, UsageError>
    where
        T::Err: std::fmt::Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| UsageError(format!("missing required option --{key}")))
    }
}
