//! Layered `key=value` configuration: defaults, then file, then flags.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

/// First line of every CSV this tool writes.
pub const SCHEMA_LINE: &str = "# qffcr-schema=1";
const CONFIG_PREFIX: &str = "# config ";

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub type ConfigResult<T> = Result<T, ConfigError>;

fn normalize_key(key: &str) -> String {
    key.trim().replace('_', "-")
}

/// Reads a flat `key=value` file, or the echoed config of a previous output.
pub fn read_config_file(path: &Path) -> ConfigResult<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> ConfigResult<BTreeMap<String, String>> {
    let echoed = text.lines().next().is_some_and(|l| l.trim_end() == SCHEMA_LINE);
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = if echoed {
            match raw.strip_prefix(CONFIG_PREFIX) {
                Some(rest) => rest,
                None => continue,
            }
        } else {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            line
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("config line {}: expected key=value", i + 1)))?;
        map.insert(normalize_key(k), v.trim().to_string());
    }
    Ok(map)
}

/// Effective configuration of one command, in echo order.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Merges layers for the allowed keys; unknown file keys are rejected.
    pub fn resolve(
        allowed: &[&str],
        defaults: &BTreeMap<String, String>,
        file: &BTreeMap<String, String>,
        flags: &BTreeMap<String, String>,
    ) -> ConfigResult<Self> {
        if let Some(k) = file.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(ConfigError(format!("unknown config key `{k}`")));
        }
        let mut values = BTreeMap::new();
        for &key in allowed {
            let v = flags.get(key).or_else(|| file.get(key)).or_else(|| defaults.get(key));
            if let Some(v) = v {
                values.insert(key.to_string(), v.clone());
            }
        }
        Ok(Self { values })
    }

    pub fn raw(&self, key: &str) -> ConfigResult<&str> {
        self.values
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| ConfigError(format!("missing value for `{key}`")))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> ConfigResult<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(key)?;
        raw.parse()
            .map_err(|e| ConfigError(format!("invalid value `{raw}` for `{key}`: {e}")))
    }

    /// `# config key=value` lines for the output header.
    pub fn echo(&self) -> Vec<String> {
        self.values
            .iter()
            .map(|(k, v)| format!("{CONFIG_PREFIX}{k}={v}"))
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&String, &String)> {
        self.values.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let cfg = RunConfig::resolve(
            &["n", "r", "theta"],
            &map(&[("n", "10"), ("r", "0"), ("theta", "1")]),
            &map(&[("r", "0.5"), ("theta", "2")]),
            &map(&[("theta", "3")]),
        )
        .unwrap();
        assert_eq!(cfg.raw("n").unwrap(), "10");
        assert_eq!(cfg.raw("r").unwrap(), "0.5");
        assert_eq!(cfg.raw("theta").unwrap(), "3");
    }

    #[test]
    fn unknown_file_key_is_rejected() {
        let err = RunConfig::resolve(&["n"], &map(&[]), &map(&[("bogus", "1")]), &map(&[])).unwrap_err();
        assert!(err.0.contains("bogus"));
    }

    #[test]
    fn parses_plain_and_echoed_files() {
        let plain = parse_config("# comment\nn = 4\nfidelity_norm=aggregate\n").unwrap();
        assert_eq!(plain, map(&[("n", "4"), ("fidelity-norm", "aggregate")]));
        let echoed = parse_config(&format!("{SCHEMA_LINE}\n# command=metrics\n# config r=0.25\nr,theta\n0.25,1\n")).unwrap();
        assert_eq!(echoed, map(&[("r", "0.25")]));
        assert!(parse_config("novalue\n").is_err());
    }
}
