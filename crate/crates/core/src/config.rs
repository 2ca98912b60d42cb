//! Flat `key = value` configuration files. `#` starts a comment.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{GplError, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    file: String,
    entries: BTreeMap<String, (String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str, file: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(GplError::parse(file, idx + 1, "expected 'key = value'"));
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(GplError::parse(file, idx + 1, "empty key"));
            }
            if entries
                .insert(key.clone(), (v.trim().to_string(), idx + 1))
                .is_some()
            {
                return Err(GplError::parse(
                    file,
                    idx + 1,
                    format!("duplicate key '{key}'"),
                ));
            }
        }
        Ok(Self {
            file: file.to_string(),
            entries,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| GplError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Insert or replace a value, e.g. from a command-line override.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (value.into(), 0));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Remove and parse `key` if present.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|e| GplError::parse(&self.file, line, format!("{key}: {e}"))),
        }
    }

    pub fn take_into<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn require<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.take(key)?
            .ok_or_else(|| GplError::MissingConfigKey(key.to_string()))
    }

    /// Fails on the first key nobody consumed.
    pub fn finish(self) -> Result<()> {
        match self.entries.into_keys().next() {
            Some(k) => Err(GplError::UnknownConfigKey(k)),
            None => Ok(()),
        }
    }
}
