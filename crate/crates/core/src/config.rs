//! Plain-text `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are case-sensitive and may
//! appear at most once. Values are trimmed; everything after the first `=` belongs to
//! the value.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    path: Option<PathBuf>,
    entries: BTreeMap<String, (usize, String)>,
}

impl KeyValues {
    pub fn parse(text: &str, path: Option<&Path>) -> Result<Self> {
        let mut kv = KeyValues {
            path: path.map(Path::to_path_buf),
            entries: BTreeMap::new(),
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(kv.err(format!("line {}: expected key=value", idx + 1)));
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(kv.err(format!("line {}: empty key", idx + 1)));
            }
            if kv.entries.contains_key(key) {
                return Err(kv.err(format!("line {}: duplicate key `{key}`", idx + 1)));
            }
            kv.entries
                .insert(key.to_string(), (idx + 1, value.trim().to_string()));
        }
        Ok(kv)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, Some(path))
    }

    /// Sets or replaces a value; used for command-line overrides.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (0, value.into()));
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    /// Parses `key` if present, leaving `slot` untouched otherwise.
    pub fn get_into<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()> {
        if let Some((line, value)) = self.entries.get(key) {
            *slot = value.parse().map_err(|_| {
                self.err(format!("line {line}: cannot parse `{value}` for `{key}`"))
            })?;
        }
        Ok(())
    }

    /// Rejects keys outside `known`, so typos do not silently fall back to defaults.
    pub fn ensure_known(&self, known: &[&str]) -> Result<()> {
        for (key, (line, _)) in &self.entries {
            if !known.contains(&key.as_str()) {
                return Err(self.err(format!("line {line}: unknown key `{key}`")));
            }
        }
        Ok(())
    }

    pub fn err(&self, msg: impl Into<String>) -> Error {
        Error::Config {
            path: self.path.clone(),
            msg: msg.into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let kv = KeyValues::parse("# c\n\n a = 1 \nb=x=y\n", None).unwrap();
        assert_eq!(kv.raw("a"), Some("1"));
        assert_eq!(kv.raw("b"), Some("x=y"));
        let mut a = 0u32;
        kv.get_into("a", &mut a).unwrap();
        assert_eq!(a, 1);
    }

    #[test]
    fn rejects_duplicates_and_unknown_keys() {
        assert!(KeyValues::parse("a=1\na=2", None).is_err());
        assert!(KeyValues::parse("novalue", None).is_err());
        let kv = KeyValues::parse("zz=1", None).unwrap();
        assert!(kv.ensure_known(&["a"]).is_err());
    }

    #[test]
    fn parse_failure_names_the_line() {
        let kv = KeyValues::parse("\nseed=abc", None).unwrap();
        let mut seed = 0u64;
        let msg = kv.get_into("seed", &mut seed).unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }
}
