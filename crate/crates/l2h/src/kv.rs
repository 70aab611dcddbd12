//! Flat `key=value` text shared by checkpoints, world files and configs.
//! Blank lines and lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{malformed, FormatError};

#[derive(Debug, Clone, Default)]
pub struct KvFile {
    entries: BTreeMap<String, (usize, String)>,
}

impl KvFile {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| malformed(i + 1, format!("expected key=value, got `{line}`")))?;
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(malformed(i + 1, "empty key"));
            }
            if entries
                .insert(key.clone(), (i + 1, v.trim().to_string()))
                .is_some()
            {
                return Err(malformed(i + 1, format!("duplicate key `{key}`")));
            }
        }
        Ok(KvFile { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Entries in file order.
    pub fn in_order(&self) -> Vec<(&str, &str)> {
        let mut v: Vec<_> = self
            .entries
            .iter()
            .map(|(k, (l, v))| (*l, k.as_str(), v.as_str()))
            .collect();
        v.sort_by_key(|e| e.0);
        v.into_iter().map(|(_, k, v)| (k, v)).collect()
    }

    fn line(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.0)
    }

    pub fn req(&self, key: &str) -> Result<&str, FormatError> {
        self.get(key)
            .ok_or_else(|| FormatError::Missing(key.to_string()))
    }

    pub fn parse_req<T: FromStr>(&self, key: &str) -> Result<T, FormatError> {
        let v = self.req(key)?;
        v.parse()
            .map_err(|_| malformed(self.line(key), format!("bad value for `{key}`: `{v}`")))
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, FormatError> {
        match self.get(key) {
            None => Ok(None),
            Some(_) => self.parse_req(key).map(Some),
        }
    }

    pub fn floats(&self, key: &str) -> Result<Vec<f64>, FormatError> {
        let v = self.req(key)?;
        parse_floats(v).map_err(|msg| malformed(self.line(key), format!("`{key}`: {msg}")))
    }
}

pub fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|f| {
            let f = f.trim();
            match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(format!("not a finite number: `{f}`")),
            }
        })
        .collect()
}

/// 17 significant digits, enough to recover every `f64` bit-exactly.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_floats(vs: &[f64]) -> String {
    vs.iter()
        .map(|v| fmt_float(*v))
        .collect::<Vec<_>>()
        .join(",")
}
