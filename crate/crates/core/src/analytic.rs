//! Closed-form photon statistics: thermal and multimode distributions, g2,
//! Fano factor, noise reduction factor and mean-to-deviation ratios.

use crate::config::ValidatedConfig;
use crate::scalar::Real;
use crate::specfun::{self, SpecfunError};
use crate::Moments;

/// Above this `n + M`, factorial ratios are evaluated in the log domain.
const LOG_DOMAIN_ABOVE: u64 = 60;

/// Summary of the statistics of a detected pair of beams.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModalStatistics<T> {
    pub g2: T,
    pub fano: T,
    pub nrf: T,
    pub mdr: T,
}

/// Single-mode thermal distribution `N^n / (N+1)^(n+1)`.
pub fn thermal_pmf<T: Real>(n: u64, n_mean: T) -> T {
    if n_mean == T::zero() {
        return if n == 0 { T::one() } else { T::zero() };
    }
    let lambda = n_mean / (n_mean + T::one());
    (T::from_count(n) * lambda.ln() - n_mean.ln_1p()).exp()
}

/// Photon-number distribution of `modes` independent thermal modes (negative binomial).
pub fn multimode_pmf<T: Real>(n: u64, modes: u32, n_mean: T) -> T {
    assert!(modes >= 1, "multimode_pmf needs at least one mode");
    if n_mean == T::zero() {
        return if n == 0 { T::one() } else { T::zero() };
    }
    let m = modes as u64;
    let lambda = n_mean / (n_mean + T::one());
    if n + m > LOG_DOMAIN_ABOVE {
        let k = n.min(m - 1);
        let top = n + m - 1;
        let ln_coeff = (0..k).fold(T::zero(), |acc, j| {
            acc + (T::from_count(top - j) / T::from_count(j + 1)).ln()
        });
        (ln_coeff - T::from_count(m) * n_mean.ln_1p() + T::from_count(n) * lambda.ln()).exp()
    } else {
        let k = n.min(m - 1);
        let top = n + m - 1;
        let coeff = (0..k).fold(T::one(), |acc, j| acc * T::from_count(top - j) / T::from_count(j + 1));
        coeff * (T::one() - lambda).powi(m as i32) * lambda.powi(n as i32)
    }
}

/// Exact moments of the `modes`-mode thermal distribution.
pub fn multimode_moments<T: Real>(modes: u32, n_mean: T) -> Moments<T> {
    let m = T::from_count(modes as u64);
    Moments::new(m * n_mean, m * n_mean * (n_mean + T::one()))
}

/// `g2(0) = 1 + 1/M` of a multimode thermal beam.
pub fn g2_multimode<T: Real>(modes: u32) -> T {
    T::one() + T::from_count(modes as u64).recip()
}

/// g2 of either beam after ideal subtraction of `subtracted` photons.
pub fn g2_subtracted<T: Real>(subtracted: u32, n_mean: T) -> Result<T, SpecfunError> {
    specfun::subtracted_moments(subtracted, n_mean, specfun::default_tolerance())?
        .g2()
        .ok_or(SpecfunError::DegenerateVariance)
}

/// Fano-type factor of the photon-number sum, `2 eta N + 1`.
pub fn fano_expected<T: Real>(n_mean: T, eta: T) -> T {
    T::lit(2.0) * eta * n_mean + T::one()
}

/// Noise reduction factor with `M` matched and `K` unmatched modes per beam.
pub fn nrf_expected<T: Real>(matched: u32, unmatched: u32, eta: T, n_mean: T) -> T {
    let total = T::from_count((matched + unmatched) as u64);
    let m = T::from_count(matched as u64) / total;
    let k = T::from_count(unmatched as u64) / total;
    T::one() - eta * m + eta * n_mean * k
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MdrFormula {
    /// From negative-binomial moments, `sqrt(M lambda)`.
    Exact,
    /// `sqrt(M) N / (1 + N)`.
    Printed,
}

/// Mean-to-deviation ratio of an `M`-mode thermal beam.
pub fn mdr_multimode<T: Real>(modes: u32, n_mean: T, formula: MdrFormula) -> T {
    let m = T::from_count(modes as u64);
    let lambda = n_mean / (n_mean + T::one());
    match formula {
        MdrFormula::Exact => (m * lambda).sqrt(),
        MdrFormula::Printed => m.sqrt() * lambda,
    }
}

/// Exact first and second moments of the detected counts of the unconditioned chain.
///
/// Each beam carries `M` shared and `K` private thermal modes, passes the tap
/// with probability `1 - r` and is detected with its efficiency, so the detected
/// count is a binomial thinning with `p = (1 - r) eta` of a negative binomial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectedExpectations {
    pub signal: Moments<f64>,
    pub idler: Moments<f64>,
    pub covariance: f64,
    pub tap: Moments<f64>,
}

impl DetectedExpectations {
    pub fn of(cfg: &ValidatedConfig) -> Self {
        let src = cfg.source();
        let ch = cfg.channel();
        let n = src.n_mean_per_mode;
        let beam = multimode_moments::<f64>(src.total_modes(), n);
        let shared_var = src.matched_modes as f64 * n * (n + 1.0);
        let thin = |p: f64| Moments::new(p * beam.mean, p * p * beam.variance + p * (1.0 - p) * beam.mean);
        let ps = ch.signal_efficiency();
        let pi = ch.idler_efficiency();
        // tap count: each beam thinned by r * eta_tap, summed
        let a = ch.tap_ratio * ch.eta_tap;
        let tap_mean = 2.0 * a * beam.mean;
        let tap_var = 2.0 * (a * a * beam.variance + a * (1.0 - a) * beam.mean) + 2.0 * a * a * shared_var;
        Self {
            signal: thin(ps),
            idler: thin(pi),
            covariance: ps * pi * shared_var,
            tap: Moments::new(tap_mean, tap_var),
        }
    }

    pub fn nrf(&self) -> f64 {
        (self.signal.variance + self.idler.variance - 2.0 * self.covariance) / (self.signal.mean + self.idler.mean)
    }

    pub fn fano(&self) -> f64 {
        (self.signal.variance + self.idler.variance + 2.0 * self.covariance) / (self.signal.mean + self.idler.mean)
    }
}
