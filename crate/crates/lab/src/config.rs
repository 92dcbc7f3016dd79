//! Experiment configuration, loadable from TOML and overridable from the CLI.

use std::path::Path;

use pbeegees_core::replica::Protocol;
use pbeegees_core::sim::{FaultPlan, Horizon, LatencyModel, SimConfig};
use pbeegees_core::Committee;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(with = "protocol_name")]
    pub protocol: Protocol,
    /// Committee size; must be `3f + 1`.
    pub n: usize,
    pub stop_prob: f64,
    pub pd: u32,
    pub mean_latency_ms: u64,
    pub spike_prob: f64,
    pub spike_ms: u64,
    pub delta_ms: u64,
    pub gst_ms: u64,
    pub pre_gst_jitter_ms: u64,
    /// Seed of the first repetition; repetition `i` uses `seed + i`.
    pub seed: u64,
    pub views: u64,
    pub reps: usize,
    /// Keep per-message send and delivery events in the traces.
    pub record_messages: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            protocol: Protocol::Pbg,
            n: 7,
            stop_prob: 0.0,
            pd: 3,
            mean_latency_ms: 250,
            spike_prob: 0.10,
            spike_ms: 500,
            delta_ms: 1000,
            gst_ms: 0,
            pre_gst_jitter_ms: 0,
            seed: 1,
            views: 200,
            reps: 1,
            record_messages: false,
        }
    }
}

/// Values given on the command line. `None` keeps the file or default value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub protocol: Option<Protocol>,
    pub n: Option<usize>,
    pub stop_prob: Option<f64>,
    pub pd: Option<u32>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub views: Option<u64>,
    pub gst_ms: Option<u64>,
    pub delta_ms: Option<u64>,
    pub mean_latency_ms: Option<u64>,
    pub spike_prob: Option<f64>,
    pub spike_ms: Option<u64>,
    pub record_messages: Option<bool>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: origin.to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = o.$field { self.$field = v; })*
            };
        }
        take!(
            protocol,
            n,
            stop_prob,
            pd,
            seed,
            reps,
            views,
            gst_ms,
            delta_ms,
            mean_latency_ms,
            spike_prob,
            spike_ms,
            record_messages
        );
    }

    pub fn committee(&self) -> Result<Committee, ConfigError> {
        Committee::from_n(self.n)
            .filter(|c| c.f() >= 1)
            .ok_or_else(|| ConfigError::Invalid(format!("n = {} is not 3f + 1 with f >= 1", self.n)))
    }

    pub fn f(&self) -> usize {
        self.n.saturating_sub(1) / 3
    }

    pub fn latency(&self) -> LatencyModel {
        LatencyModel {
            spike_prob: self.spike_prob,
            spike_ms: self.spike_ms,
            delta: self.delta_ms,
            gst: self.gst_ms,
            pre_gst_jitter: self.pre_gst_jitter_ms,
            ..LatencyModel::default()
        }
        .with_mean(self.mean_latency_ms)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.committee()?;
        if self.reps == 0 {
            return Err(ConfigError::Invalid("reps must be at least 1".into()));
        }
        if self.views == 0 {
            return Err(ConfigError::Invalid("views must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.stop_prob) {
            return Err(ConfigError::Invalid(format!(
                "stop_prob = {} is outside [0, 1]",
                self.stop_prob
            )));
        }
        if self.pd == 0 {
            return Err(ConfigError::Invalid("pd must be at least 1".into()));
        }
        self.sim_config(self.seed)?
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// The simulation config of the repetition that uses `seed`.
    pub fn sim_config(&self, seed: u64) -> Result<SimConfig, ConfigError> {
        let mut cfg = SimConfig::new(self.protocol, self.committee()?, seed);
        cfg.pd = self.pd;
        cfg.latency = self.latency();
        cfg.faults = FaultPlan::with_stop_prob(self.stop_prob);
        cfg.horizon = Horizon::Views(self.views);
        cfg.record_messages = self.record_messages;
        Ok(cfg)
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.reps as u64).map(|i| self.seed.wrapping_add(i))
    }
}

pub fn parse_protocol(text: &str) -> Result<Protocol, String> {
    Protocol::parse(text).ok_or_else(|| {
        format!("unknown protocol '{text}' (expected one of pbg, pbg_cb, fhs, chs, naive)")
    })
}

mod protocol_name {
    use pbeegees_core::replica::Protocol;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &Protocol, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(p.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Protocol, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_protocol(&text).map_err(D::Error::custom)
    }
}
