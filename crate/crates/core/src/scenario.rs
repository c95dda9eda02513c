//! Named experiment descriptions, loaded from TOML or taken from the
//! built-in set that mirrors the paper's settings at desk scale.
//!
//! ```toml
//! name = "fig2a"
//! pulses = 20000
//! seed = 1
//! sweep = [1.0, 2.0, 3.0]
//!
//! [source]
//! n_mean_per_mode = 7.0
//! matched_modes = 91
//! unmatched_modes = 9
//!
//! [channel]
//! tap_ratio = 0.1
//! eta_signal = 0.8
//! eta_idler = 0.8
//! eta_tap = 0.8
//!
//! [[windows]]
//! center_scale = 1.0
//! width_sigma = 0.5
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{validate, ChannelConfig, ConditionWindow, ConfigError, SourceConfig, ValidatedConfig};
use crate::estimators::DEFAULT_RESAMPLES;
use crate::montecarlo::BinomialMethod;

/// Largest `(M + K) * N_m` accepted by the exact enumeration.
pub const ORACLE_GUARD: f64 = 50.0;

pub const BUILTIN_NAMES: [&str; 5] = ["fig2a", "sweep-large-aperture", "sweep-small-aperture", "fano-sweep", "oracle-small"];

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("malformed scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown scenario `{0}` (built-in: {list})", list = BUILTIN_NAMES.join(", "))]
    Unknown(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

fn default_resamples() -> usize {
    DEFAULT_RESAMPLES
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub source: SourceConfig,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub windows: Vec<ConditionWindow>,
    pub pulses: usize,
    pub seed: u64,
    /// Mean photon numbers per mode for `sweep`, strictly increasing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<f64>>,
    /// Optional `[matched, unmatched]` per sweep point, replacing the source modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_modes: Option<Vec<(u32, u32)>>,
    #[serde(default)]
    pub binomial: BinomialMethod,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.check()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Read { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn builtin(name: &str) -> Result<Self, ScenarioError> {
        let s = match name {
            "fig2a" => Scenario {
                sweep: Some((1..=10).map(f64::from).collect()),
                ..base(name, SourceConfig::new(7.0, 91, 9), ChannelConfig::uniform(0.1, 0.8), vec![ConditionWindow::half_sigma()], 20_000)
            },
            "sweep-large-aperture" => Scenario {
                sweep: Some(vec![5.0, 10.0, 20.0, 40.0, 80.0]),
                ..base(
                    name,
                    SourceConfig::new(20.0, 950, 50),
                    aperture_channel(),
                    vec![ConditionWindow::experimental(), ConditionWindow::shifted_experimental()],
                    50_000,
                )
            },
            "sweep-small-aperture" => Scenario {
                sweep: Some(vec![5.0, 10.0, 20.0, 40.0, 80.0]),
                ..base(
                    name,
                    SourceConfig::new(20.0, 140, 10),
                    aperture_channel(),
                    vec![ConditionWindow::experimental(), ConditionWindow::shifted_experimental()],
                    50_000,
                )
            },
            "fano-sweep" => Scenario {
                sweep: Some((1..=8).map(|k| 50.0 * k as f64).collect()),
                ..base(name, SourceConfig::new(50.0, 100, 0), ChannelConfig::uniform(0.1, 0.7), vec![ConditionWindow::experimental()], 50_000)
            },
            "oracle-small" => base(
                name,
                SourceConfig::new(0.8, 2, 1),
                ChannelConfig::uniform(0.2, 0.7),
                vec![ConditionWindow::half_sigma(), ConditionWindow::new(1.0, 1.0), ConditionWindow::new(1.0, 2.0)],
                100_000,
            ),
            other => return Err(ScenarioError::Unknown(other.to_string())),
        };
        Ok(s)
    }

    /// Structural checks plus full validation of every source/channel/window combination.
    pub fn check(&self) -> Result<(), ScenarioError> {
        if self.pulses == 0 {
            return Err(ScenarioError::Invalid("pulses must be >= 1".into()));
        }
        if self.resamples < 2 {
            return Err(ScenarioError::Invalid("resamples must be >= 2".into()));
        }
        if let Some(sweep) = &self.sweep {
            if sweep.is_empty() {
                return Err(ScenarioError::Invalid("sweep must not be empty".into()));
            }
            if sweep.windows(2).any(|p| !(p[0] < p[1])) {
                return Err(ScenarioError::Invalid("sweep values must be strictly increasing".into()));
            }
        }
        if let Some(modes) = &self.sweep_modes {
            let n = self.sweep.as_ref().map_or(0, Vec::len);
            if modes.len() != n {
                return Err(ScenarioError::Invalid(format!("sweep_modes has {} entries for {n} sweep points", modes.len())));
            }
        }
        self.config()?;
        for w in &self.windows {
            validate(self.source, self.channel, *w)?;
        }
        for k in 0..self.sweep.as_ref().map_or(0, Vec::len) {
            self.sweep_config(k)?;
        }
        Ok(())
    }

    /// Validated configuration of the base point.
    pub fn config(&self) -> Result<ValidatedConfig, ConfigError> {
        validate(self.source, self.channel, self.windows.first().copied().unwrap_or_default())
    }

    /// Validated configuration of sweep point `k`.
    pub fn sweep_config(&self, k: usize) -> Result<ValidatedConfig, ConfigError> {
        let mut source = self.source;
        if let Some(sweep) = &self.sweep {
            source.n_mean_per_mode = sweep[k];
        }
        if let Some(modes) = &self.sweep_modes {
            (source.matched_modes, source.unmatched_modes) = modes[k];
        }
        validate(source, self.channel, self.windows.first().copied().unwrap_or_default())
    }

    /// Hex id of the whole scenario, recorded in every output file.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("scenario serializes");
        hex::encode(&Sha256::digest(canonical.as_bytes())[..8])
    }

    /// `(M + K) * N_m` must stay small enough for exact enumeration.
    pub fn check_oracle_guard(&self) -> Result<(), ScenarioError> {
        let load = self.source.total_modes() as f64 * self.source.n_mean_per_mode;
        if load > ORACLE_GUARD {
            return Err(ScenarioError::Invalid(format!("(M+K)*N_m = {load} exceeds the exact-enumeration guard {ORACLE_GUARD}")));
        }
        Ok(())
    }
}

/// Tap of 12% (the tap beamsplitter transmits 0.88) and detection such that
/// the overall through-path efficiency is 0.63 on both beams.
fn aperture_channel() -> ChannelConfig {
    ChannelConfig::uniform(0.12, 0.63 / 0.88)
}

fn base(name: &str, source: SourceConfig, channel: ChannelConfig, windows: Vec<ConditionWindow>, pulses: usize) -> Scenario {
    Scenario {
        name: name.to_string(),
        source,
        channel,
        windows,
        pulses,
        seed: 1,
        sweep: None,
        sweep_modes: None,
        binomial: BinomialMethod::Exact,
        resamples: DEFAULT_RESAMPLES,
    }
}
