//! Optional flat TOML config files: every key mirrors a long flag of the
//! running subcommand, and explicit flags win over file values.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use toml::Value;

use crate::error::{input, CliError, Result};

#[derive(Debug, Default)]
pub struct FileConfig {
    table: toml::Table,
    seen: BTreeSet<String>,
}

impl FileConfig {
    /// Loads the file when a path is given; an absent path yields an empty
    /// config.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| input(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| input(format!("malformed config {}: {e}", path.display())))?;
        Ok(FileConfig {
            table,
            seen: BTreeSet::new(),
        })
    }

    fn take(&mut self, key: &str) -> Option<&Value> {
        self.seen.insert(key.to_string());
        self.table.get(key)
    }

    fn bad(key: &str, want: &str, got: &Value) -> CliError {
        input(format!("config key {key:?} should be {want}, got {got}"))
    }

    pub fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as u64)),
            Some(v) => Err(Self::bad(key, "a non-negative integer", v)),
        }
    }

    pub fn usize(&mut self, key: &str) -> Result<Option<usize>> {
        Ok(self.u64(key)?.map(|v| v as usize))
    }

    pub fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(*f)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(Self::bad(key, "a number", v)),
        }
    }

    pub fn string(&mut self, key: &str) -> Result<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(Self::bad(key, "a string", v)),
        }
    }

    pub fn path(&mut self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.string(key)?.map(PathBuf::from))
    }

    pub fn flag(&mut self, key: &str) -> Result<bool> {
        match self.take(key) {
            None => Ok(false),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(v) => Err(Self::bad(key, "a boolean", v)),
        }
    }

    pub fn usizes(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::Integer(i) if *i >= 0 => Ok(*i as usize),
                    v => Err(Self::bad(key, "an array of non-negative integers", v)),
                })
                .collect::<Result<Vec<usize>>>()
                .map(Some),
            Some(v) => Err(Self::bad(key, "an array of non-negative integers", v)),
        }
    }

    pub fn strings(&mut self, key: &str) -> Result<Option<Vec<String>>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    v => Err(Self::bad(key, "an array of strings", v)),
                })
                .collect::<Result<Vec<String>>>()
                .map(Some),
            Some(v) => Err(Self::bad(key, "an array of strings", v)),
        }
    }

    /// Rejects keys the subcommand never asked about, so typos fail loudly.
    pub fn finish(self) -> Result<()> {
        let unknown: Vec<&String> = self.table.keys().filter(|k| !self.seen.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(input(format!(
                "unknown config keys for this command: {}",
                unknown
                    .iter()
                    .map(|k| k.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            )))
        }
    }
}
