//! Flat key/value configuration blocks.
//!
//! One `key = value` pair per line. Blank lines and lines starting with `#` are ignored.
//! Keys are unique; list values are comma separated.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvBlock {
    entries: BTreeMap<String, (usize, String)>,
}

impl KvBlock {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::format(line_no, format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::format(line_no, "empty key"));
            }
            if entries
                .insert(key.to_string(), (line_no, value.trim().to_string()))
                .is_some()
            {
                return Err(Error::format(line_no, format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    /// Rejects keys outside `allowed`, so typos surface instead of being silently ignored.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (key, (line, _)) in &self.entries {
            if !allowed.contains(&key.as_str()) {
                return Err(Error::format(*line, format!("unknown key `{key}`")));
            }
        }
        Ok(())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, value)) => value
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::format(*line, format!("invalid value `{value}` for `{key}`"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, value)) => value
                .split(',')
                .map(|item| {
                    let item = item.trim();
                    item.parse::<T>().map_err(|_| {
                        Error::format(*line, format!("invalid list item `{item}` for `{key}`"))
                    })
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    /// Three comma-separated reals.
    pub fn get_triple(&self, key: &str) -> Result<Option<[f64; 3]>> {
        match self.get_list::<f64>(key)? {
            None => Ok(None),
            Some(v) if v.len() == 3 => Ok(Some([v[0], v[1], v[2]])),
            Some(_) => {
                let line = self.entries[key].0;
                Err(Error::format(line, format!("`{key}` needs exactly 3 values")))
            }
        }
    }

    /// Serializes back to text, keys in sorted order.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, (_, v))| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_lists() {
        let kv = KvBlock::parse("# hi\n\nk = 4\nlist = 1, 2,3\nxyz=1,2,3\n").unwrap();
        assert_eq!(kv.get::<usize>("k").unwrap(), Some(4));
        assert_eq!(kv.get_list::<u32>("list").unwrap(), Some(vec![1, 2, 3]));
        assert_eq!(kv.get_triple("xyz").unwrap(), Some([1.0, 2.0, 3.0]));
        assert_eq!(kv.get::<f64>("missing").unwrap(), None);
    }

    #[test]
    fn errors_name_the_line() {
        let err = KvBlock::parse("a = 1\nnonsense\n").unwrap_err();
        assert!(matches!(err, Error::Format { line: 2, .. }));
        let kv = KvBlock::parse("a = 1\nb = x\n").unwrap();
        assert!(matches!(kv.get::<f64>("b"), Err(Error::Format { line: 2, .. })));
        assert!(matches!(
            KvBlock::parse("a = 1\na = 2").unwrap_err(),
            Error::Format { line: 2, .. }
        ));
        assert!(kv.check_keys(&["a"]).is_err());
    }
}
