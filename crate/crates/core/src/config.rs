//! Plain-text `key = value` configuration files.
//!
//! One entry per line; blank lines and lines starting with `#` are skipped.
//! Trailing `# comments` are stripped from values.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub line: usize,
    pub key: String,
    pub value: String,
}

pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or_default().trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
            line,
            msg: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config {
                line,
                msg: "empty key".into(),
            });
        }
        out.push(Entry {
            line,
            key: key.to_string(),
            value: value.trim().to_string(),
        });
    }
    Ok(out)
}

impl Entry {
    pub fn error(&self, msg: impl Into<String>) -> Error {
        Error::Config {
            line: self.line,
            msg: format!("`{}`: {}", self.key, msg.into()),
        }
    }

    pub fn parse<T: std::str::FromStr>(&self) -> Result<T> {
        self.value
            .parse()
            .map_err(|_| self.error(format!("cannot parse `{}`", self.value)))
    }

    pub fn flag(&self) -> Result<bool> {
        match self.value.to_ascii_lowercase().as_str() {
            "1" | "true" | "on" | "yes" => Ok(true),
            "0" | "false" | "off" | "no" => Ok(false),
            _ => Err(self.error(format!("expected a boolean, got `{}`", self.value))),
        }
    }

    /// Comma- or whitespace-separated list.
    pub fn list<T: std::str::FromStr>(&self) -> Result<Vec<T>> {
        self.value
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| self.error(format!("bad list item `{s}`"))))
            .collect()
    }
}
