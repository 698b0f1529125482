//! Flat `key = value` configuration files. Every key corresponds to a CLI
//! flag; flags given on the command line take precedence.

use std::collections::BTreeMap;
use std::path::Path;

use sepmap::error::{Result, SepmapError};

/// Parsed configuration file: last assignment per key wins.
#[derive(Debug, Clone, Default)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped. Keys must be known flag names (caller-checked via `get`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.split_once('#') {
                Some((head, _)) => head,
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| SepmapError::Parse {
                line: lineno + 1,
                reason: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() || value.is_empty() {
                return Err(SepmapError::Parse {
                    line: lineno + 1,
                    reason: "empty key or value".to_string(),
                });
            }
            values.insert(key.to_string(), value.to_string());
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// CLI value if present, else the file value.
    pub fn merge<'a>(&'a self, key: &str, cli: Option<&'a str>) -> Option<&'a str> {
        cli.or_else(|| self.get(key))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blanks_and_overrides() {
        let cfg = FileConfig::parse(
            "# scan defaults\nfamily = rot:0:200\nmap = transposition # builtin\n\n\
             dec = canonical\ndec = minimal\n",
        )
        .unwrap();
        assert_eq!(cfg.get("family"), Some("rot:0:200"));
        assert_eq!(cfg.get("map"), Some("transposition"));
        assert_eq!(cfg.get("dec"), Some("minimal"), "last assignment wins");
        assert_eq!(cfg.get("missing"), None);
        assert_eq!(cfg.merge("map", Some("bh")), Some("bh"));
        assert_eq!(cfg.merge("map", None), Some("transposition"));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(FileConfig::parse("just words\n").is_err());
        assert!(FileConfig::parse("key =\n").is_err());
        let err = FileConfig::parse("ok = 1\nbroken\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
