//! TOML scenario files.
//!
//! ```toml
//! n = 8
//! mode = "deterministic"
//! horizon = 400
//! seed = 1
//!
//! [instance]
//! k = 1
//! ell = 2
//! response = { bot = ["1", "0"], 1 = ["0", "1"] }
//!
//! [topology]
//! strategy = "RandomConnected"
//! edge_prob = 0.2
//!
//! [signal]
//! strategy = "Persistent"
//! signal = 1
//! from_round = 0
//! witness_policy = { policy = "RandomSingle" }
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{SignalAdversary, TopologyAdversary};
use crate::instance::{Distribution, Instance, InstanceError, SignalId};
use crate::protocol::{Protocol, Resample};
use crate::sim::{ModeSpec, Scenario};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("cannot serialize config: {0}")]
    Serialize(String),
}

fn invalid(field: impl Into<String>, message: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub k: u32,
    pub ell: u32,
    /// Keyed by `"bot"` (or `"0"`) and the decimal signal numbers.
    pub response: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub n: usize,
    pub mode: ModeSpec,
    pub horizon: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resample: Option<Resample>,
    pub instance: InstanceConfig,
    pub topology: TopologyAdversary,
    pub signal: SignalAdversary,
}

fn signal_key(s: SignalId) -> String {
    if s.is_bot() {
        "bot".to_string()
    } else {
        s.0.to_string()
    }
}

fn parse_signal_key(key: &str) -> Option<SignalId> {
    if key == "bot" {
        return Some(SignalId::BOT);
    }
    key.parse::<u32>()
        .ok()
        .filter(|_| !key.starts_with('+'))
        .map(SignalId)
}

impl InstanceConfig {
    pub fn from_instance(inst: &Instance) -> Self {
        InstanceConfig {
            k: inst.k(),
            ell: inst.ell(),
            response: inst
                .signals()
                .map(|s| (signal_key(s), inst.response(s).to_strings()))
                .collect(),
        }
    }

    pub fn to_instance(&self) -> Result<Instance, ConfigError> {
        let mut table = Vec::with_capacity(self.response.len());
        for (key, weights) in &self.response {
            let field = format!("instance.response.{key}");
            let signal = parse_signal_key(key)
                .ok_or_else(|| invalid(&field, "expected \"bot\" or a signal number"))?;
            let dist = Distribution::parse(weights).map_err(|m| invalid(&field, m))?;
            table.push((signal, dist));
        }
        Instance::new(self.k, self.ell, table).map_err(|e| match &e {
            InstanceError::MissingSignal(_) => invalid("instance.response", &e),
            InstanceError::DuplicateSignal(s)
            | InstanceError::SignalOutOfRange { signal: s, .. } => {
                invalid(format!("instance.response.{}", signal_key(*s)), &e)
            }
            InstanceError::BadDistribution { signal, reason } => {
                invalid(format!("instance.response.{}", signal_key(*signal)), reason)
            }
            _ => invalid("instance", &e),
        })
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Config::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed", "must fit in a signed 64-bit integer"));
        }
        toml::to_string(self).map_err(|e| ConfigError::Serialize(e.to_string()))
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        Config {
            n: s.n,
            mode: s.mode,
            horizon: s.horizon,
            seed: s.seed,
            resample: (s.resample != Resample::default()).then_some(s.resample),
            instance: InstanceConfig::from_instance(&s.instance),
            topology: s.topology.clone(),
            signal: s.signal.clone(),
        }
    }

    /// Validates every field and builds the scenario.
    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        if self.n < 2 {
            return Err(invalid("n", format!("must be at least 2, got {}", self.n)));
        }
        if self.horizon < 1 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        let instance = self.instance.to_instance()?;
        self.topology
            .validate()
            .map_err(|e| invalid("topology", e))?;
        self.signal
            .validate(self.n, instance.k())
            .map_err(|e| invalid("signal", e))?;
        Protocol::new(self.mode.variant(self.n), instance.clone())
            .map_err(|e| invalid("mode", e))?;
        Ok(Scenario {
            n: self.n,
            mode: self.mode,
            instance,
            topology: self.topology.clone(),
            signal: self.signal.clone(),
            horizon: self.horizon,
            seed: self.seed,
            resample: self.resample.unwrap_or_default(),
        })
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    Config::load(path)?.to_scenario()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
n = 8
mode = "deterministic"
horizon = 100
seed = 1

[instance]
k = 1
ell = 2
response = { bot = ["1", "0"], 1 = ["0", "1"] }

[topology]
strategy = "RandomConnected"
edge_prob = 0.2

[signal]
strategy = "Persistent"
signal = 1
from_round = 0
witness_policy = { policy = "RandomSingle" }
"#;

    #[test]
    fn parses_and_round_trips() {
        let config = Config::parse(BASIC).unwrap();
        let scenario = config.to_scenario().unwrap();
        assert_eq!(scenario.n, 8);
        assert!(scenario.instance.is_homogeneous());
        let printed = config.to_toml().unwrap();
        assert_eq!(Config::parse(&printed).unwrap(), config);
        assert_eq!(Config::from_scenario(&scenario), config);
    }

    #[test]
    fn bad_sum_names_the_field() {
        let text = BASIC.replace(r#"1 = ["0", "1"]"#, r#"1 = ["1", "1"]"#);
        let err = Config::parse(&text).unwrap().to_scenario().unwrap_err();
        assert_eq!(
            err.to_string(),
            "instance.response.1: weights sum to 2, expected 1"
        );
    }

    #[test]
    fn bot_and_zero_together_are_a_duplicate() {
        let text = BASIC.replace("bot = [", r#"0 = ["1", "0"], bot = ["#);
        let err = Config::parse(&text).unwrap().to_scenario().unwrap_err();
        assert!(
            err.to_string().starts_with("instance.response.bot:"),
            "{err}"
        );
    }

    #[test]
    fn unknown_field_is_located() {
        let text = BASIC.replace("seed = 1", "seed = 1\ncolour = 3");
        let err = Config::parse(&text).unwrap_err().to_string();
        assert!(err.contains("colour") && err.contains("line"), "{err}");
    }

    #[test]
    fn deterministic_needs_homogeneous() {
        let text = BASIC.replace(r#"1 = ["0", "1"]"#, r#"1 = ["1/2", "1/2"]"#);
        let err = Config::parse(&text).unwrap().to_scenario().unwrap_err();
        assert!(err.to_string().starts_with("mode:"), "{err}");
        let randomized = text.replace("\"deterministic\"", "\"randomized\"");
        Config::parse(&randomized).unwrap().to_scenario().unwrap();
    }
}
