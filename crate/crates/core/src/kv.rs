//! Plain-text `key = value` configuration files.
//!
//! One pair per line, `#` starts a comment, blank lines are ignored. Later
//! occurrences of a key override earlier ones.

use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KvError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("key {key:?}: cannot parse {value:?}: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvMap {
    entries: Vec<(String, String)>,
}

impl KvMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses the value of `key`; panics if the key is absent, so callers
    /// should only use it while iterating present keys.
    pub fn parse<T>(&self, key: &str) -> Result<T, KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let value = self.get(key).expect("key present");
        value.parse().map_err(|e: T::Err| KvError::Value {
            key: key.to_string(),
            value: value.to_string(),
            reason: e.to_string(),
        })
    }

    /// Parses `key` when present.
    pub fn parse_opt<T>(&self, key: &str) -> Result<Option<T>, KvError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.get(key) {
            Some(_) => self.parse(key).map(Some),
            None => Ok(None),
        }
    }

    pub fn reject_unknown(&self, known: &[&str]) -> Result<(), KvError> {
        match self.entries.iter().find(|(k, _)| !known.contains(&k.as_str())) {
            Some((k, _)) => Err(KvError::UnknownKey(k.clone())),
            None => Ok(()),
        }
    }
}

impl FromStr for KvMap {
    type Err = KvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut map = KvMap::new();
        for (i, raw) in s.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| KvError::Syntax { line: i + 1, text: raw.to_string() })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(KvError::Syntax { line: i + 1, text: raw.to_string() });
            }
            map.insert(key, value.trim());
        }
        Ok(map)
    }
}

impl std::fmt::Display for KvMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let map: KvMap = "a = 1\n# comment\n\nb=two # trailing\na = 3\n".parse().unwrap();
        assert_eq!(map.get("a"), Some("3"));
        assert_eq!(map.get("b"), Some("two"));
        assert_eq!(map.parse::<u32>("a").unwrap(), 3);
        assert!(map.parse::<u32>("b").is_err());
        assert_eq!(map.parse_opt::<u32>("c").unwrap(), None);
    }

    #[test]
    fn syntax_errors_carry_line() {
        match "a = 1\nnonsense\n".parse::<KvMap>() {
            Err(KvError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(" = 3".parse::<KvMap>().is_err());
    }

    #[test]
    fn unknown_keys() {
        let map: KvMap = "a = 1\nz = 2".parse().unwrap();
        assert!(map.reject_unknown(&["a"]).is_err());
        assert!(map.reject_unknown(&["a", "z"]).is_ok());
    }
}
