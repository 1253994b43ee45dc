//! Flat `key = value` configuration files.
//!
//! One assignment per line, `#` starts a comment, keys may repeat (the
//! last occurrence wins for scalar lookups, `get_all` yields every one).
//! Lists are comma separated: `inertia = 5e-3, 5e-3, 9e-3`.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    /// 1-based source line, 0 for programmatic overrides.
    pub line: usize,
}

impl Entry {
    pub fn f64(&self) -> Result<f64> {
        self.value
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::config(self.line, &self.key, format!("expected a number, got `{}`", self.value)))
    }

    pub fn list(&self) -> Result<Vec<f64>> {
        self.value
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| {
                    Error::config(self.line, &self.key, format!("expected a number list, got `{}`", self.value))
                })
            })
            .collect()
    }

    pub fn vec3(&self) -> Result<Vector3<f64>> {
        let v = self.list()?;
        if v.len() != 3 {
            return Err(Error::config(self.line, &self.key, format!("expected 3 values, got {}", v.len())));
        }
        Ok(Vector3::new(v[0], v[1], v[2]))
    }

    pub fn bool(&self) -> Result<bool> {
        match self.value.trim().to_ascii_lowercase().as_str() {
            "on" | "true" | "yes" | "1" => Ok(true),
            "off" | "false" | "no" | "0" => Ok(false),
            other => Err(Error::config(self.line, &self.key, format!("expected on/off, got `{other}`"))),
        }
    }

    pub fn u64(&self) -> Result<u64> {
        self.value
            .trim()
            .parse::<u64>()
            .map_err(|_| Error::config(self.line, &self.key, format!("expected an unsigned integer, got `{}`", self.value)))
    }

    /// Error attributed to this entry.
    pub fn error(&self, msg: impl Into<String>) -> Error {
        Error::config(self.line, &self.key, msg)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvConfig {
    entries: Vec<Entry>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::config(line, content, "expected `key = value`"));
            };
            let key = key.trim();
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(Error::config(line, key, "malformed key"));
            }
            entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.key == key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    /// Replace every occurrence of `key` with a single programmatic value.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.retain(|e| e.key != key);
        self.entries.push(Entry {
            key: key.to_string(),
            value: value.into(),
            line: 0,
        });
    }

    /// Overlay `other` on top of `self`. Keys present in `other` replace all
    /// of their occurrences here, so repeated keys (drag samples) are swapped
    /// as a block rather than appended.
    pub fn overlay(&mut self, other: &KvConfig) {
        self.entries
            .retain(|e| !other.entries.iter().any(|o| o.key == e.key));
        self.entries.extend(other.entries.iter().cloned());
    }

    pub fn remove(&mut self, key: &str) {
        self.entries.retain(|e| e.key != key);
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), Entry::f64)
    }

    pub fn vec3_or(&self, key: &str, default: Vector3<f64>) -> Result<Vector3<f64>> {
        self.get(key).map_or(Ok(default), Entry::vec3)
    }

    pub fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        self.get(key).map_or(Ok(default), Entry::bool)
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64> {
        self.get(key).map_or(Ok(default), Entry::u64)
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).map_or(default, |e| e.value.as_str())
    }

    /// Reject keys that no consumer understands (typos would otherwise be
    /// silently ignored).
    pub fn check_known(&self, known: &[&str]) -> Result<()> {
        match self.entries.iter().find(|e| !known.contains(&e.key.as_str())) {
            Some(e) => Err(Error::config(e.line, &e.key, "unknown key")),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{} = {}", e.key, e.value);
        }
        out
    }
}
