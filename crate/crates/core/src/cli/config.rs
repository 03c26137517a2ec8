use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

/// Every accepted key with its default. Order is the order of the resolved dump.
const KEYS: &[(&str, &str)] = &[
    ("run.seed", "1"),
    ("run.format", "csv"),
    ("planner.channels", "32"),
    ("planner.lambda_max_nm", "1550"),
    ("planner.spacing_nm", "0.5"),
    ("planner.q_mrm", "8000"),
    ("planner.mma", "false"),
    ("engine.bits", "4"),
    ("engine.clock_hz", "2e9"),
    ("engine.noise_scale", "1"),
    ("engine.crosstalk", "0"),
    ("mvm.fidelity", "device"),
    ("mvm.trials", "100"),
    ("mvm.exhaustive", "false"),
    ("mvm.operands", ""),
    ("invert.m", "8"),
    ("invert.antennas", "64"),
    ("invert.matrix", ""),
    ("invert.k_max", "6"),
    ("invert.requantize", "true"),
    ("invert.schedule", "parallel"),
    ("invert.fidelity", "float"),
    ("mimo.antennas", "64"),
    ("mimo.users", "8"),
    ("mimo.qam", "16"),
    ("mimo.snr_db", "0,5,10,15,20"),
    ("mimo.ks", "1,2,4,8,12"),
    ("mimo.fidelities", "float"),
    ("mimo.trials", "1250"),
    ("mimo.bits", "4"),
    ("perf.ms", "16,32,64,128,256"),
    ("perf.clock_hz", "2e9"),
    ("perf.digital_overhead_mw", "0.634"),
    ("validate.mvm_trials", "10000"),
    ("validate.channel_draws", "1000"),
    ("validate.mimo_trials", "1250"),
    ("validate.optical_trials", "25"),
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown config key '{key}'{}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    UnknownKey { key: String, line: Option<usize> },
    #[error("line {line}: expected key=value, got '{text}'")]
    Malformed { line: usize, text: String },
    #[error("invalid value '{value}' for '{key}': {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
}

/// Flat `section.key=value` parameters, always fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|&(k, v)| (k, v.to_string())).collect(),
        }
    }
}

fn known(key: &str) -> Option<&'static str> {
    KEYS.iter().map(|&(k, _)| k).find(|&k| k == key)
}

impl ExperimentConfig {
    /// Defaults overridden by `text`. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
                line: n + 1,
                text: line.to_string(),
            })?;
            let key = key.trim();
            let slot = known(key).ok_or_else(|| ConfigError::UnknownKey {
                key: key.to_string(),
                line: Some(n + 1),
            })?;
            cfg.values.insert(slot, value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> crate::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?)?)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), ConfigError> {
        let slot = known(key).ok_or_else(|| ConfigError::UnknownKey {
            key: key.to_string(),
            line: None,
        })?;
        self.values.insert(slot, value.into());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_default()
    }

    pub fn get<T>(&self, key: &str) -> Result<T, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.values.get(key).ok_or_else(|| ConfigError::UnknownKey {
            key: key.to_string(),
            line: None,
        })?;
        raw.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
            key: key.to_string(),
            value: raw.clone(),
            reason: e.to_string(),
        })
    }

    /// Comma-separated list; empty means no items.
    pub fn list<T>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T: FromStr,
        T::Err: Display,
    {
        let raw = self.get::<String>(key)?;
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
                    key: key.to_string(),
                    value: raw.clone(),
                    reason: format!("'{s}': {e}"),
                })
            })
            .collect()
    }

    /// Optional path; an empty value means none.
    pub fn path(&self, key: &str) -> Option<&str> {
        Some(self.raw(key)).filter(|s| !s.is_empty())
    }

    pub fn invalid(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::InvalidValue {
            key: key.to_string(),
            value: self.raw(key).to_string(),
            reason: reason.into(),
        }
    }

    /// One `key = value` line per key in declaration order; parses back to
    /// the same config.
    pub fn resolved(&self) -> String {
        KEYS.iter()
            .map(|&(k, _)| format!("{k} = {}\n", self.values[k]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_and_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.get::<u64>("run.seed").unwrap(), 1);
        assert_eq!(cfg.list::<usize>("perf.ms").unwrap(), vec![16, 32, 64, 128, 256]);
        assert_eq!(ExperimentConfig::parse(&cfg.resolved()).unwrap(), cfg);
    }

    #[test]
    fn overrides_and_comments() {
        let cfg = ExperimentConfig::parse("# sweep\n\nplanner.channels = 16\nmimo.ks=1, 2\n").unwrap();
        assert_eq!(cfg.get::<usize>("planner.channels").unwrap(), 16);
        assert_eq!(cfg.list::<usize>("mimo.ks").unwrap(), vec![1, 2]);
        assert!(cfg.path("invert.matrix").is_none());
    }

    #[test]
    fn unknown_keys_name_the_key() {
        let err = ExperimentConfig::parse("planner.channels=8\nplanner.M=32\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                key: "planner.M".into(),
                line: Some(2)
            }
        );
        assert!(err.to_string().contains("planner.M"));
        assert!(ExperimentConfig::default().set("engine.volume", "11").is_err());
    }

    #[test]
    fn bad_values_name_the_key() {
        let cfg = ExperimentConfig::parse("engine.bits=four").unwrap();
        let err = cfg.get::<u32>("engine.bits").unwrap_err();
        assert!(matches!(&err, ConfigError::InvalidValue { key, .. } if key == "engine.bits"));
        assert!(matches!(
            ExperimentConfig::parse("just words"),
            Err(ConfigError::Malformed { line: 1, .. })
        ));
    }
}
