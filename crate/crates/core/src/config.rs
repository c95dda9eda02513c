//! Source, channel and conditioning-window configuration.
//!
//! Everything downstream consumes a [`ValidatedConfig`]; construction goes
//! through [`validate`], which reports every violated invariant at once.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Multimode twin-beam source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    /// Mean photon number per mode.
    pub n_mean_per_mode: f64,
    /// Modes detected in both beams.
    pub matched_modes: u32,
    /// Modes per beam with no partner in the other beam.
    pub unmatched_modes: u32,
}

impl SourceConfig {
    pub fn new(n_mean_per_mode: f64, matched_modes: u32, unmatched_modes: u32) -> Self {
        Self { n_mean_per_mode, matched_modes, unmatched_modes }
    }

    pub fn total_modes(&self) -> u32 {
        self.matched_modes + self.unmatched_modes
    }

    /// Thermal ratio `N/(N+1)`.
    pub fn lambda(&self) -> f64 {
        lambda_of(self.n_mean_per_mode)
    }
}

/// `N/(N+1)`, the geometric parameter of a thermal mode with mean `N`.
pub fn lambda_of(n_mean: f64) -> f64 {
    n_mean / (n_mean + 1.0)
}

/// Tapping beamsplitter and detectors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    /// Fraction of each beam reflected onto the tap detector.
    pub tap_ratio: f64,
    pub eta_signal: f64,
    pub eta_idler: f64,
    pub eta_tap: f64,
    /// Additive Gaussian read noise, in detected-count units.
    #[serde(default)]
    pub read_noise_sd: f64,
}

impl ChannelConfig {
    /// Same efficiency on all three detectors, no read noise.
    pub fn uniform(tap_ratio: f64, eta: f64) -> Self {
        Self { tap_ratio, eta_signal: eta, eta_idler: eta, eta_tap: eta, read_noise_sd: 0.0 }
    }

    /// Overall through-path efficiency of the signal beam.
    pub fn signal_efficiency(&self) -> f64 {
        (1.0 - self.tap_ratio) * self.eta_signal
    }

    pub fn idler_efficiency(&self) -> f64 {
        (1.0 - self.tap_ratio) * self.eta_idler
    }
}

/// Tap-count acceptance window, `[c*mean - w*sd/2, c*mean + w*sd/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionWindow {
    pub center_scale: f64,
    /// Full width in units of the tap-count standard deviation.
    pub width_sigma: f64,
}

impl ConditionWindow {
    pub fn new(center_scale: f64, width_sigma: f64) -> Self {
        Self { center_scale, width_sigma }
    }

    /// Window used by the numerical model: centred, half a standard deviation wide.
    pub fn half_sigma() -> Self {
        Self::new(1.0, 0.5)
    }

    /// Experimental window: centred, full width sd/15.
    pub fn experimental() -> Self {
        Self::new(1.0, 1.0 / 15.0)
    }

    /// Shifted experimental window, `0.93*mean +- sd/30`.
    pub fn shifted_experimental() -> Self {
        Self::new(0.93, 1.0 / 15.0)
    }

    /// Closed acceptance interval for the given tap mean and standard deviation.
    pub fn bounds(&self, mean_tap: f64, sd_tap: f64) -> (f64, f64) {
        let center = self.center_scale * mean_tap;
        let half = 0.5 * self.width_sigma * sd_tap;
        (center - half, center + half)
    }

    pub fn accepts(&self, value: f64, mean_tap: f64, sd_tap: f64) -> bool {
        let (lo, hi) = self.bounds(mean_tap, sd_tap);
        lo <= value && value <= hi
    }

    fn violations(&self, out: &mut Vec<Violation>) {
        if !(self.center_scale > 0.0 && self.center_scale.is_finite()) {
            out.push(Violation::new("window.center_scale", "must be finite and > 0"));
        }
        if !(self.width_sigma > 0.0) || self.width_sigma.is_nan() {
            out.push(Violation::new("window.width_sigma", "must be > 0"));
        }
    }
}

impl Default for ConditionWindow {
    fn default() -> Self {
        Self::half_sigma()
    }
}

/// Number of photons removed from each beam by an ideal subtraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubtractionSpec {
    pub photons_subtracted: u32,
}

/// Mean and variance of a photon-number distribution or sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments<T> {
    pub mean: T,
    pub variance: T,
}

impl<T: crate::Real> Moments<T> {
    pub fn new(mean: T, variance: T) -> Self {
        Self { mean, variance }
    }

    /// Mean-to-deviation ratio; `None` when the variance vanishes.
    pub fn mdr(&self) -> Option<T> {
        if self.variance > T::zero() {
            Some(self.mean / self.variance.sqrt())
        } else {
            None
        }
    }

    /// `(<n^2> - <n>) / <n>^2`; `None` for zero mean.
    pub fn g2(&self) -> Option<T> {
        if self.mean > T::zero() {
            Some((self.variance + self.mean * self.mean - self.mean) / (self.mean * self.mean))
        } else {
            None
        }
    }
}

/// A single violated invariant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: &'static str,
}

impl Violation {
    fn new(field: &'static str, message: &'static str) -> Self {
        Self { field, message }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.field, self.message)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration: {}", list(.violations))]
pub struct ConfigError {
    pub violations: Vec<Violation>,
}

fn list(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Configuration that has passed [`validate`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ValidatedConfig {
    source: SourceConfig,
    channel: ChannelConfig,
    window: ConditionWindow,
    lambda: f64,
}

impl ValidatedConfig {
    pub fn source(&self) -> &SourceConfig {
        &self.source
    }

    pub fn channel(&self) -> &ChannelConfig {
        &self.channel
    }

    pub fn window(&self) -> &ConditionWindow {
        &self.window
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Copy with a different mean photon number per mode.
    pub fn with_n_mean(&self, n_mean: f64) -> Result<Self, ConfigError> {
        let mut source = self.source;
        source.n_mean_per_mode = n_mean;
        validate(source, self.channel, self.window)
    }

    /// Copy with different mode counts.
    pub fn with_modes(&self, matched: u32, unmatched: u32) -> Result<Self, ConfigError> {
        let mut source = self.source;
        source.matched_modes = matched;
        source.unmatched_modes = unmatched;
        validate(source, self.channel, self.window)
    }

    pub fn with_channel(&self, channel: ChannelConfig) -> Result<Self, ConfigError> {
        validate(self.source, channel, self.window)
    }

    /// Short hex id of the source and channel parameters.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(&(&self.source, &self.channel))
            .expect("config serializes");
        let hash = Sha256::digest(canonical.as_bytes());
        hex::encode(&hash[..8])
    }
}

fn check_probability(value: f64, field: &'static str, out: &mut Vec<Violation>) {
    if !(0.0..=1.0).contains(&value) {
        out.push(Violation::new(field, "out of [0,1]"));
    }
}

/// Checks every invariant and precomputes the thermal ratio.
pub fn validate(
    source: SourceConfig,
    channel: ChannelConfig,
    window: ConditionWindow,
) -> Result<ValidatedConfig, ConfigError> {
    let mut violations = Vec::new();

    if !(source.n_mean_per_mode >= 0.0 && source.n_mean_per_mode.is_finite()) {
        violations.push(Violation::new("n_mean_per_mode", "must be finite and >= 0"));
    }
    if source.total_modes() == 0 {
        violations.push(Violation::new("modes", "matched_modes + unmatched_modes must be >= 1"));
    }
    check_probability(channel.tap_ratio, "tap_ratio", &mut violations);
    check_probability(channel.eta_signal, "eta_signal", &mut violations);
    check_probability(channel.eta_idler, "eta_idler", &mut violations);
    check_probability(channel.eta_tap, "eta_tap", &mut violations);
    if !(channel.read_noise_sd >= 0.0 && channel.read_noise_sd.is_finite()) {
        violations.push(Violation::new("read_noise_sd", "must be finite and >= 0"));
    }
    window.violations(&mut violations);

    if !violations.is_empty() {
        return Err(ConfigError { violations });
    }
    let lambda = source.lambda();
    debug_assert!((0.0..1.0).contains(&lambda));
    Ok(ValidatedConfig { source, channel, window, lambda })
}

/// Re-validation of an already validated config; always succeeds with an equal value.
pub fn revalidate(cfg: &ValidatedConfig) -> Result<ValidatedConfig, ConfigError> {
    validate(cfg.source, cfg.channel, cfg.window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fig2a_parameters_validate() {
        let cfg = validate(
            SourceConfig::new(7.0, 91, 9),
            ChannelConfig::uniform(0.1, 0.8),
            ConditionWindow::half_sigma(),
        )
        .unwrap();
        assert_eq!(cfg.lambda(), 0.875);
    }

    #[test]
    fn vacuum_is_valid() {
        let cfg = validate(
            SourceConfig::new(0.0, 1, 0),
            ChannelConfig::uniform(0.0, 1.0),
            ConditionWindow::half_sigma(),
        )
        .unwrap();
        assert_eq!(cfg.lambda(), 0.0);
    }

    #[test]
    fn tap_ratio_out_of_range() {
        let err = validate(
            SourceConfig::new(1.0, 1, 0),
            ChannelConfig::uniform(1.2, 0.8),
            ConditionWindow::half_sigma(),
        )
        .unwrap_err();
        assert_eq!(err.violations.len(), 1);
        assert_eq!(err.violations[0].to_string(), "tap_ratio out of [0,1]");
    }

    #[test]
    fn every_violation_is_listed() {
        let err = validate(
            SourceConfig::new(-1.0, 0, 0),
            ChannelConfig { tap_ratio: 0.1, eta_signal: 1.5, eta_idler: -0.1, eta_tap: 0.5, read_noise_sd: 0.0 },
            ConditionWindow::new(0.0, 0.0),
        )
        .unwrap_err();
        let fields: Vec<_> = err.violations.iter().map(|v| v.field).collect();
        assert_eq!(
            fields,
            ["n_mean_per_mode", "modes", "eta_signal", "eta_idler", "window.center_scale", "window.width_sigma"]
        );
    }

    #[test]
    fn window_is_closed() {
        let w = ConditionWindow::new(1.0, 2.0);
        assert!(w.accepts(9.0, 10.0, 1.0));
        assert!(w.accepts(11.0, 10.0, 1.0));
        assert!(!w.accepts(11.0 + 1e-9, 10.0, 1.0));
    }

    #[test]
    fn digest_depends_on_parameters() {
        let a = validate(SourceConfig::new(7.0, 91, 9), ChannelConfig::uniform(0.1, 0.8), ConditionWindow::default()).unwrap();
        let b = a.with_n_mean(7.5).unwrap();
        assert_eq!(a.digest(), a.digest());
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 16);
    }

    proptest! {
        #[test]
        fn validation_is_idempotent(n in 0.0f64..1e4, m in 0u32..200, k in 0u32..50, r in 0.0f64..=1.0, eta in 0.0f64..=1.0) {
            prop_assume!(m + k >= 1);
            let once = validate(SourceConfig::new(n, m, k), ChannelConfig::uniform(r, eta), ConditionWindow::default()).unwrap();
            prop_assert_eq!(revalidate(&once).unwrap(), once);
        }

        #[test]
        fn lambda_increasing_and_below_one(a in 0.0f64..1e6, b in 0.0f64..1e6) {
            // separated enough that the ratios differ in double precision
            prop_assume!(b > a * (1.0 + 1e-9) + 1e-9);
            prop_assert!(lambda_of(a) < lambda_of(b));
            prop_assert!(lambda_of(b) < 1.0);
        }
    }
}
