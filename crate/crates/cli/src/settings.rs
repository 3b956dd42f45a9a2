//! Run settings: an optional `key = value` file overlaid by command-line flags.
//!
//! Every value a command reads is recorded with its type, so the resolved
//! configuration can be written next to the results.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

use crate::failure::Failure;

pub struct Settings {
    given: BTreeMap<String, String>,
    resolved: RefCell<BTreeMap<String, Value>>,
}

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, Failure> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("config line {}: expected key = value", lineno + 1)))?;
        let key = key.trim().trim_start_matches("--");
        if key.is_empty() {
            return Err(Failure::usage(format!("config line {}: empty key", lineno + 1)));
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Failure::usage(format!("config line {}: duplicate key '{key}'", lineno + 1)));
        }
    }
    Ok(out)
}

impl Settings {
    /// `flags` win over the file; file keys outside `known` are rejected.
    pub fn new(
        file: Option<&Path>,
        flags: BTreeMap<String, String>,
        known: &[String],
    ) -> Result<Self, Failure> {
        let mut given = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        if let Some(bad) = given.keys().find(|k| !known.contains(k)) {
            return Err(Failure::usage(format!("unknown config key '{bad}'")));
        }
        given.extend(flags);
        Ok(Self { given, resolved: RefCell::new(BTreeMap::new()) })
    }

    fn record(&self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.resolved.borrow_mut().insert(key.to_string(), v);
    }

    fn parse<T: FromStr>(&self, key: &str, raw: &str) -> Result<T, Failure>
    where
        T::Err: Display,
    {
        raw.parse().map_err(|e| Failure::usage(format!("--{key} '{raw}': {e}")))
    }

    pub fn text(&self, key: &str, default: &str) -> String {
        let v = self.given.get(key).cloned().unwrap_or_else(|| default.to_string());
        self.record(key, &v);
        v
    }

    pub fn value<T>(&self, key: &str, default: T) -> Result<T, Failure>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        let v = match self.given.get(key) {
            Some(raw) => self.parse(key, raw)?,
            None => default,
        };
        self.record(key, &v);
        Ok(v)
    }

    /// Read without recording: for knobs such as `workers` and `out` that
    /// cannot change any result.
    pub fn unrecorded<T>(&self, key: &str, default: T) -> Result<T, Failure>
    where
        T: FromStr,
        T::Err: Display,
    {
        match self.given.get(key) {
            Some(raw) => self.parse(key, raw),
            None => Ok(default),
        }
    }

    pub fn optional<T>(&self, key: &str) -> Result<Option<T>, Failure>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        let v = match self.given.get(key) {
            Some(raw) => Some(self.parse(key, raw)?),
            None => None,
        };
        self.record(key, &v);
        Ok(v)
    }

    pub fn required<T>(&self, key: &str) -> Result<T, Failure>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        self.optional(key)?.ok_or_else(|| Failure::usage(format!("--{key} is required for this command")))
    }

    pub fn flag(&self, key: &str, default: bool) -> Result<bool, Failure> {
        let v = match self.given.get(key).map(|s| s.to_ascii_lowercase()) {
            None => default,
            Some(s) if matches!(s.as_str(), "true" | "yes" | "on" | "1") => true,
            Some(s) if matches!(s.as_str(), "false" | "no" | "off" | "0") => false,
            Some(s) => return Err(Failure::usage(format!("--{key} '{s}': expected true or false"))),
        };
        self.record(key, v);
        Ok(v)
    }

    /// Comma-separated list.
    pub fn list<T>(&self, key: &str, default: &[T]) -> Result<Vec<T>, Failure>
    where
        T: FromStr + Serialize + Clone,
        T::Err: Display,
    {
        let v = match self.given.get(key) {
            Some(raw) => raw
                .split(',')
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| self.parse(key, s))
                .collect::<Result<Vec<T>, _>>()?,
            None => default.to_vec(),
        };
        if v.is_empty() {
            return Err(Failure::usage(format!("--{key} needs at least one value")));
        }
        self.record(key, &v);
        Ok(v)
    }

    /// Everything read so far.
    pub fn resolved(&self) -> Value {
        Value::Object(self.resolved.borrow().iter().map(|(k, v)| (k.clone(), v.clone())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn known(keys: &[&str]) -> Vec<String> {
        keys.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn flags_override_file() {
        let dir = std::env::temp_dir().join(format!("addsv-settings-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.conf");
        std::fs::write(&path, "# run\nN = 50\nseed=3\nfield = real # trailing\n").unwrap();
        let flags = BTreeMap::from([("N".to_string(), "80".to_string())]);
        let s = Settings::new(Some(&path), flags, &known(&["N", "seed", "field"])).unwrap();
        assert_eq!(s.value::<usize>("N", 1).unwrap(), 80);
        assert_eq!(s.required::<u64>("seed").unwrap(), 3);
        assert_eq!(s.text("field", "complex"), "real");
        assert_eq!(s.value::<f64>("a", 0.5).unwrap(), 0.5);
        let r = s.resolved();
        assert_eq!(r["N"], 80);
        assert_eq!(r["a"], 0.5);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn malformed_inputs_are_usage_errors() {
        assert!(parse_config("N 5").is_err());
        assert!(parse_config("N=5\nN=6").is_err());
        let s = Settings::new(None, BTreeMap::from([("N".into(), "x".into())]), &[]).unwrap();
        assert_eq!(s.value::<usize>("N", 1).unwrap_err().exit_code(), 2);
        assert_eq!(s.required::<u64>("seed").unwrap_err().exit_code(), 2);
        let s = Settings::new(None, BTreeMap::from([("sizes".into(), "1, 2,3".into())]), &[]).unwrap();
        assert_eq!(s.list::<usize>("sizes", &[]).unwrap(), vec![1, 2, 3]);
    }
}
