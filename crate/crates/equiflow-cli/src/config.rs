//! Configuration resolution: a simple `key = value` file, overridden by
//! command-line flags, with every resolved value echoed into the output
//! header so runs are reproducible from their artifacts alone.

use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(format!(
                    "{}:{}: expected `key = value`, got `{line}`",
                    path.display(),
                    lineno + 1
                ));
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, String>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| format!("config key `{key}`: {e}")),
        }
    }
}

/// Resolves flag / config-file / default precedence for one key and records
/// the resolved value for the header.
pub struct Resolver<'a> {
    file: &'a FileConfig,
    pub resolved: BTreeMap<String, String>,
}

impl<'a> Resolver<'a> {
    pub fn new(file: &'a FileConfig) -> Self {
        Resolver {
            file,
            resolved: BTreeMap::new(),
        }
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, String>
    where
        T: std::str::FromStr + std::fmt::Display + Clone,
        T::Err: std::fmt::Display,
    {
        let value = match flag {
            Some(v) => v,
            None => match self.file.get::<T>(key)? {
                Some(v) => v,
                None => default,
            },
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    /// FNV-1a hash of the canonical resolved key-value listing.
    pub fn config_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for (k, v) in &self.resolved {
            for b in k
                .bytes()
                .chain("=".bytes())
                .chain(v.bytes())
                .chain(";".bytes())
            {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        h
    }

    pub fn header_lines(&self, subcommand: &str) -> Vec<String> {
        let mut out = vec![
            format!("# equiflow v{}", env!("CARGO_PKG_VERSION")),
            format!("# subcommand = {subcommand}"),
            format!("# config_hash = {:016x}", self.config_hash()),
        ];
        for (k, v) in &self.resolved {
            out.push(format!("# {k} = {v}"));
        }
        out
    }
}
