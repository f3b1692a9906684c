use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{usage, CliResult};

pub const SEED_ENV: &str = "CLUSTSEG_SEED";

/// Values from an optional `key = value` file, consulted for every option
/// that was not given on the command line.
#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn normalise(key: &str) -> String {
    key.trim().replace('_', "-")
}

impl Settings {
    /// Reads `path` if given. Keys may use `-` or `_`; anything outside
    /// `allowed` is rejected.
    pub fn load(path: Option<&Path>, allowed: &[&str]) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
        Self::parse(&text, allowed)
    }

    pub fn parse(text: &str, allowed: &[&str]) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("config line {lineno}: expected key=value, got {line:?}")))?;
            let key = normalise(key);
            if key == "config" || !allowed.contains(&key.as_str()) {
                return Err(usage(format!("config line {lineno}: unknown key {key:?}")));
            }
            if values.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(usage(format!("config line {lineno}: duplicate key {key:?}")));
            }
        }
        Ok(Self { values })
    }

    fn parse_value<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| usage(format!("config key {key:?}: invalid value {v:?}: {e}"))))
            .transpose()
    }

    pub fn opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.parse_value(key),
        }
    }

    pub fn or<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    pub fn required<T: FromStr>(&self, flag: Option<T>, key: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        self.opt(flag, key)?.ok_or_else(|| usage(format!("--{key} is required")))
    }

    pub fn path(&self, flag: Option<PathBuf>, key: &str) -> CliResult<Option<PathBuf>> {
        self.opt(flag, key)
    }

    /// A switch is on when given on the command line or set to `true` in the file.
    pub fn switch(&self, flag: bool, key: &str) -> CliResult<bool> {
        if flag {
            return Ok(true);
        }
        Ok(self.parse_value::<bool>(key)?.unwrap_or(false))
    }

    /// Flag, then config file, then the environment, then zero.
    pub fn seed(&self, flag: Option<u64>) -> CliResult<u64> {
        if let Some(s) = self.opt(flag, "seed")? {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|e| usage(format!("{SEED_ENV}={v:?} is not a valid seed: {e}"))),
            Err(_) => Ok(0),
        }
    }
}

/// Comma-separated list of values.
pub fn parse_list<T: FromStr>(s: &str, what: &str) -> CliResult<Vec<T>>
where
    T::Err: Display,
{
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    if items.is_empty() {
        return Err(usage(format!("{what} list is empty")));
    }
    items
        .into_iter()
        .map(|p| p.parse::<T>().map_err(|e| usage(format!("{what} entry {p:?}: {e}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEYS: &[&str] = &["k", "t-max", "out", "seed", "verbose"];

    #[test]
    fn comments_blank_lines_and_underscores() {
        let s = Settings::parse("# header\n\nk = 3\nt_max=7\n  # indented comment\n", KEYS).unwrap();
        assert_eq!(s.or::<usize>(None, "k", 1).unwrap(), 3);
        assert_eq!(s.or::<usize>(None, "t-max", 1).unwrap(), 7);
        assert_eq!(s.or::<usize>(Some(9), "k", 1).unwrap(), 9);
        assert_eq!(s.or::<usize>(None, "seed", 5).unwrap(), 5);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = Settings::parse("k=2\nbogus_key=1\n", KEYS).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus-key") && msg.contains("line 2"), "{msg}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn malformed_and_duplicate_lines() {
        assert!(Settings::parse("k 3\n", KEYS).is_err());
        assert!(Settings::parse("k=3\nk=4\n", KEYS).is_err());
        let s = Settings::parse("k=abc\n", KEYS).unwrap();
        assert!(s.or::<usize>(None, "k", 1).is_err());
    }

    #[test]
    fn switches() {
        let s = Settings::parse("verbose = true\n", KEYS).unwrap();
        assert!(s.switch(false, "verbose").unwrap());
        assert!(!Settings::default().switch(false, "verbose").unwrap());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list::<usize>("1, 2,3", "t").unwrap(), vec![1, 2, 3]);
        assert!(parse_list::<usize>("", "t").is_err());
        assert!(parse_list::<usize>("1,x", "t").is_err());
    }
}
