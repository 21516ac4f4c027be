//! `key=value` config files layered under command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use cascadeprune::{Error, Result};

/// Keys a config file may set. Flags use the same names.
pub const KEYS: &[&str] = &[
    "seed",
    "threads",
    "mode",
    "out",
    "positives",
    "negatives",
    "backgrounds",
    "noise",
    "separation",
    "dims",
    "scenes",
    "clutter",
    "test-positives",
    "test-negatives",
    "data",
    "schedule",
    "gamma",
    "target-fp",
    "negatives-per-node",
    "family",
    "budget",
    "sample-fraction",
    "trainer",
    "t1",
    "t",
    "scale-factor",
    "stride",
    "model",
    "detections",
    "truths",
    "roc",
    "report",
];

#[derive(Debug, Default)]
pub struct Resolver {
    file: BTreeMap<String, String>,
    resolved: Vec<(String, String)>,
}

impl Resolver {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Resolver::default());
        };
        let text = fs::read_to_string(path)?;
        let mut file = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| parse_error(i + 1, "expected key=value"))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(parse_error(i + 1, &format!("unknown key {k:?}")));
            }
            file.insert(k.to_string(), v.to_string());
        }
        Ok(Resolver {
            file,
            resolved: Vec::new(),
        })
    }

    /// Flag value if given, else the config file entry.
    pub fn opt<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        debug_assert!(KEYS.contains(&key), "{key}");
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(s) => Some(
                    s.parse()
                        .map_err(|e| Error::ConfigError(format!("config key {key}: {e}")))?,
                ),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.resolved.push((key.to_string(), v.to_string()));
        }
        Ok(value)
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.opt(key, flag)? {
            Some(v) => Ok(v),
            None => {
                self.resolved.push((key.to_string(), default.to_string()));
                Ok(default)
            }
        }
    }

    pub fn require<T>(&mut self, key: &str, flag: Option<T>) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        self.opt(key, flag)?
            .ok_or_else(|| Error::ConfigError(format!("missing required option --{key}")))
    }

    /// Logs every value looked up so far.
    pub fn log(&self, command: &str) {
        let parts: Vec<String> = self.resolved.iter().map(|(k, v)| format!("{k}={v}")).collect();
        log::info!("{command}: {}", parts.join(" "));
    }
}

fn parse_error(line: usize, msg: &str) -> Error {
    Error::Parse {
        line,
        msg: msg.to_string(),
    }
}

/// `T:T1` pairs separated by commas, e.g. `7:100,15:100`.
pub fn parse_schedule(s: &str) -> Result<Vec<cascadeprune::cascade::NodeSpec>> {
    s.split(',')
        .map(|item| {
            let bad = || Error::ConfigError(format!("schedule entry {item:?} is not T:T1"));
            let (t, t1) = item.trim().split_once(':').ok_or_else(bad)?;
            let t: usize = t.trim().parse().map_err(|_| bad())?;
            let t1: usize = t1.trim().parse().map_err(|_| bad())?;
            if t == 0 || t > t1 {
                return Err(Error::ConfigError(format!(
                    "schedule entry {item:?} needs 0 < T <= T1"
                )));
            }
            Ok(cascadeprune::cascade::NodeSpec { t1, t })
        })
        .collect()
}
