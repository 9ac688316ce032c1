//! Line-oriented configuration: `[section]` headers over `key = value`
//! pairs. Keys may repeat (patch lists); unknown keys are rejected when a
//! section is consumed.

use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Default, Clone)]
pub struct Config {
    sections: BTreeMap<String, Vec<(String, String)>>,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let mut sections: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        let mut current = String::new();
        sections.entry(current.clone()).or_default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError(format!("line {}: unterminated section", lineno + 1)))?;
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected key = value", lineno + 1)))?;
            sections
                .get_mut(&current)
                .unwrap()
                .push((key.trim().to_string(), value.trim().to_string()));
        }
        Ok(Config { sections })
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn has_section(&self, name: &str) -> bool {
        self.sections.get(name).map(|s| !s.is_empty()).unwrap_or(false)
    }

    /// Consume a section, rejecting keys outside the allowlist.
    pub fn section<'a>(&'a self, name: &str, allowed: &[&str]) -> Result<Section<'a>, ConfigError> {
        let entries = self.sections.get(name).map(|v| v.as_slice()).unwrap_or(&[]);
        for (k, _) in entries {
            if !allowed.contains(&k.as_str()) {
                return Err(ConfigError(format!("unknown key `{k}` in section [{name}]")));
            }
        }
        Ok(Section { name: name.to_string(), entries })
    }
}

pub struct Section<'a> {
    name: String,
    entries: &'a [(String, String)],
}

impl<'a> Section<'a> {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn get_all(&self, key: &str) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .collect()
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.get(key)
            .ok_or_else(|| ConfigError(format!("missing key `{key}` in section [{}]", self.name)))
    }

    pub fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.require(key)?
            .parse::<T>()
            .map_err(|e| ConfigError(format!("bad value for `{key}` in [{}]: {e}", self.name)))
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse::<T>()
                .map_err(|e| ConfigError(format!("bad value for `{key}` in [{}]: {e}", self.name))),
        }
    }

    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        parse_list(self.require(key)?)
            .map_err(|e| ConfigError(format!("bad list for `{key}` in [{}]: {e}", self.name)))
    }
}

pub fn parse_list<T: std::str::FromStr>(text: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(|tok| tok.trim().parse::<T>().map_err(|e| format!("{tok:?}: {e}")))
        .collect()
}
