//! Flag / config-file / default layering.
//!
//! A config file is TOML. Keys may sit at the top level (shared by every
//! command) or under a `[<command>]` table, which wins over the top level.
//! Keys are the long flag names with `-` replaced by `_`.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::CliError;

#[derive(Debug, Default)]
pub struct Layer {
    shared: toml::Table,
    section: toml::Table,
}

impl Layer {
    pub fn load(path: Option<&Path>, command: &str) -> Result<Self, CliError> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("cannot parse config {}: {e}", path.display())))?;
        let section = match table.remove(command) {
            Some(toml::Value::Table(t)) => t,
            Some(_) => return Err(CliError::Config(format!("`{command}` in config must be a table"))),
            None => toml::Table::new(),
        };
        const COMMANDS: [&str; 6] = ["audit", "sensitivity", "bound", "simulate", "sweep", "utility"];
        table.retain(|k, _| !COMMANDS.contains(&k));
        Ok(Self { shared: table, section })
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        let Some(v) = self.section.get(key).or_else(|| self.shared.get(key)) else {
            return Ok(None);
        };
        v.clone()
            .try_into()
            .map(Some)
            .map_err(|e| CliError::Config(format!("config key `{key}`: {e}")))
    }

    /// Flag, else config, else `default`.
    pub fn pick<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.pick_opt(flag, key)?.unwrap_or(default))
    }

    pub fn pick_opt<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    /// Like [`Layer::pick_opt`] for repeatable flags, where an empty list
    /// means "not given".
    pub fn pick_list<T: DeserializeOwned>(&self, flag: Vec<T>, key: &str) -> Result<Option<Vec<T>>, CliError> {
        if flag.is_empty() {
            self.get(key)
        } else {
            Ok(Some(flag))
        }
    }

    pub fn pick_bool(&self, flag: bool, key: &str) -> Result<bool, CliError> {
        Ok(flag || self.get(key)?.unwrap_or(false))
    }
}
