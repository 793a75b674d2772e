//! Flat `key = value` configuration file.

use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

pub const KEYS: &[&str] = &[
    "scheme",
    "backend",
    "key",
    "steps",
    "beta_start",
    "beta_end",
    "sub_steps",
    "strict",
];

#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|m| CliError::usage(format!("config {}: {m}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(format!("line {}: unknown key {k:?}", n + 1));
            }
            values.insert(k.to_owned(), v.trim().to_owned());
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| CliError::usage(format!("config: bad value {v:?} for {key}")))
            })
            .transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_spacing() {
        let c = FileConfig::parse("# c\n\nscheme = without-key\nsteps=200\n").unwrap();
        assert_eq!(c.get("scheme"), Some("without-key"));
        assert_eq!(c.parsed::<usize>("steps").unwrap(), Some(200));
        assert_eq!(c.get("backend"), None);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_lines() {
        assert!(FileConfig::parse("colour = red").is_err());
        assert!(FileConfig::parse("scheme").is_err());
    }
}
