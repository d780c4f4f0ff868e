use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::failure::Failure;

/// Flag values merged over a flat `key=value` file, recording every resolved value.
pub struct Settings {
    file: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
    resolved: Map<String, Value>,
}

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, Failure> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("config line {}: expected key=value", i + 1)))?;
        let key = k.trim().replace('_', "-");
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Failure::Usage(format!("config line {}: duplicate key {key}", i + 1)));
        }
    }
    Ok(out)
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::Io(format!("cannot read config {}: {e}", p.display())))?;
                parse_config(&text)?
            }
            None => BTreeMap::new(),
        };
        Ok(Self {
            file,
            consumed: BTreeSet::new(),
            resolved: Map::new(),
        })
    }

    /// The flag if given, else the file entry, else `None`.
    pub fn opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, Failure>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        self.consumed.insert(key.to_string());
        let v = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(s) => Some(s.parse().map_err(|e| Failure::Usage(format!("config key {key}: {e}")))?),
                None => None,
            },
        };
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, Failure>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        match self.opt(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.record(key, &default);
                Ok(default)
            }
        }
    }

    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, Failure>
    where
        T: FromStr + Serialize,
        T::Err: Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| Failure::Usage(format!("missing --{key} (flag or config entry)")))
    }

    pub fn flag(&mut self, key: &str, flag: bool) -> Result<bool, Failure> {
        let v = flag || self.opt::<bool>(key, None)?.unwrap_or(false);
        self.record(key, &v);
        Ok(v)
    }

    pub fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.resolved.insert(key.to_string(), v);
    }

    /// Resolved values; fails on config entries no option consumed.
    pub fn finish(self) -> Result<Map<String, Value>, Failure> {
        let unknown: Vec<&String> = self.file.keys().filter(|k| !self.consumed.contains(*k)).collect();
        if !unknown.is_empty() {
            return Err(Failure::Usage(format!("unknown config keys: {unknown:?}")));
        }
        Ok(self.resolved)
    }
}

/// Comma-separated numbers such as `0.5,-1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Coords(pub Vec<f64>);

impl FromStr for Coords {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| format!("'{p}' is not a number")))
            .collect::<Result<Vec<_>, _>>()?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(format!("'{s}' has non-finite entries"));
        }
        Ok(Self(v))
    }
}

impl Coords {
    pub fn pair(&self, what: &str) -> Result<[f64; 2], Failure> {
        match self.0[..] {
            [a, b] => Ok([a, b]),
            _ => Err(Failure::Usage(format!("--{what} needs two comma-separated values"))),
        }
    }
}
