//! `key = value` configuration files. Keys share names with the long
//! CLI flags; a flag given on the command line always wins over the
//! file value.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, Result};

#[derive(Debug, Default)]
pub struct FileConfig {
    entries: BTreeMap<String, String>,
    path: String,
}

impl FileConfig {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Parses a config file: one `key = value` per line, `#` comments,
    /// blank lines ignored. Malformed lines are usage errors.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut entries = BTreeMap::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "{}:{}: expected `key = value`, found `{line}`",
                    path.display(),
                    line_no + 1
                ))
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(CliError::Usage(format!(
                    "{}:{}: empty key",
                    path.display(),
                    line_no + 1
                )));
            }
            entries.insert(key, value.trim().to_string());
        }
        Ok(Self { entries, path: path.display().to_string() })
    }

    /// Removes and returns a raw value, so leftover keys can be
    /// reported as unrecognized.
    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    /// Removes and parses a value; a parse failure is a usage error
    /// naming the key.
    pub fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(raw) => raw.parse().map(Some).map_err(|_| {
                CliError::Usage(format!("config key `{key}`: cannot parse `{raw}`"))
            }),
        }
    }

    pub fn take_bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(raw) => match raw.as_str() {
                "true" | "yes" | "1" => Ok(Some(true)),
                "false" | "no" | "0" => Ok(Some(false)),
                _ => Err(CliError::Usage(format!(
                    "config key `{key}`: expected true/false, found `{raw}`"
                ))),
            },
        }
    }

    /// Warns on stderr about keys nothing consumed; typos should not
    /// silently change nothing.
    pub fn warn_unused(&self) {
        for key in self.entries.keys() {
            eprintln!("warning: {}: unrecognized config key `{key}`", self.path);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_config(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_comments_blanks_and_values() {
        let f = write_config("# fit setup\nseed = 7\n\nclasses = 2..4   # scan range\n");
        let mut cfg = FileConfig::load(f.path()).unwrap();
        assert_eq!(cfg.take_parsed::<u64>("seed").unwrap(), Some(7));
        assert_eq!(cfg.take("classes").as_deref(), Some("2..4"));
        assert_eq!(cfg.take("absent"), None);
    }

    #[test]
    fn malformed_lines_and_values_are_usage_errors() {
        let f = write_config("just words\n");
        assert!(matches!(FileConfig::load(f.path()), Err(CliError::Usage(_))));

        let f = write_config("seed = pony\n");
        let mut cfg = FileConfig::load(f.path()).unwrap();
        assert!(matches!(
            cfg.take_parsed::<u64>("seed"),
            Err(CliError::Usage(_))
        ));

        let f = write_config("tables = maybe\n");
        let mut cfg = FileConfig::load(f.path()).unwrap();
        assert!(matches!(cfg.take_bool("tables"), Err(CliError::Usage(_))));
    }

    #[test]
    fn boolean_spellings_are_accepted() {
        let f = write_config("tables = yes\nverbose = 0\n");
        let mut cfg = FileConfig::load(f.path()).unwrap();
        assert_eq!(cfg.take_bool("tables").unwrap(), Some(true));
        assert_eq!(cfg.take_bool("verbose").unwrap(), Some(false));
    }
}
