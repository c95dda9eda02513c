//! Sample statistics of detected counts with bootstrap standard errors.
//!
//! Variances are unbiased (`n - 1`) throughout. Undefined ratios (zero
//! variance, zero mean) are reported as `None` rather than as infinities.

mod fit;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::montecarlo::{Columns, Ensemble};
use crate::scalar::Real;
use crate::Moments;

pub use fit::{gain_fit, linear_fit, FitError, FitResult, GainFit};

/// Default number of bootstrap resamples.
pub const DEFAULT_RESAMPLES: usize = 200;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EstimateError {
    #[error("need at least 2 samples, have {0}")]
    TooFewSamples(usize),
}

/// Mean, unbiased variance and mean-to-deviation ratio of a sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary<T> {
    pub moments: Moments<T>,
    /// `None` when the sample variance is zero.
    pub mdr: Option<T>,
}

pub fn summarize<T: Real>(samples: &[T]) -> Result<Summary<T>, EstimateError> {
    if samples.len() < 2 {
        return Err(EstimateError::TooFewSamples(samples.len()));
    }
    let n = T::from_count(samples.len() as u64);
    let mean = samples.iter().fold(T::zero(), |a, &x| a + x) / n;
    let ss = samples.iter().fold(T::zero(), |a, &x| a + (x - mean) * (x - mean));
    let moments = Moments::new(mean, ss / (n - T::one()));
    Ok(Summary { moments, mdr: moments.mdr() })
}

/// `(<n^2> - <n>) / <n>^2` from sample averages; `None` for zero mean.
pub fn g2_sample<T: Real>(samples: &[T]) -> Option<T> {
    if samples.is_empty() {
        return None;
    }
    let n = T::from_count(samples.len() as u64);
    let mean = samples.iter().fold(T::zero(), |a, &x| a + x) / n;
    let sq = samples.iter().fold(T::zero(), |a, &x| a + x * x) / n;
    (mean > T::zero()).then(|| (sq - mean) / (mean * mean))
}

/// Seeded nonparametric bootstrap.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bootstrap {
    pub resamples: usize,
    pub seed: u64,
}

impl Bootstrap {
    pub fn new(resamples: usize, seed: u64) -> Self {
        Self { resamples, seed }
    }

    /// Standard deviation over resamples of each component of `stat`.
    ///
    /// Resample `b` draws its indices from ChaCha stream `b`, so the result
    /// does not depend on how resamples are scheduled. Components that are
    /// undefined (`NaN`) in a resample are skipped for that resample.
    pub fn stderr<const K: usize, F>(&self, n: usize, stat: F) -> [f64; K]
    where
        F: Fn(&[usize]) -> [f64; K] + Sync,
    {
        if n == 0 || self.resamples < 2 {
            return [f64::NAN; K];
        }
        let values: Vec<[f64; K]> = (0..self.resamples)
            .into_par_iter()
            .map(|b| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(b as u64);
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                stat(&idx)
            })
            .collect();
        std::array::from_fn(|k| {
            let xs: Vec<f64> = values.iter().map(|v| v[k]).filter(|x| x.is_finite()).collect();
            if xs.len() < 2 {
                return f64::NAN;
            }
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
        })
    }
}

impl Default for Bootstrap {
    fn default() -> Self {
        Self::new(DEFAULT_RESAMPLES, 0x5eed)
    }
}

/// Point estimate with bootstrap standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    /// `None` when undefined on the full sample.
    pub value: Option<f64>,
    pub stderr: f64,
}

impl Estimate {
    fn from_raw(value: f64, stderr: f64) -> Self {
        Self { value: value.is_finite().then_some(value), stderr }
    }
}

/// Statistics reported for an ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stat {
    MeanSignal,
    MeanIdler,
    VarSignal,
    VarIdler,
    MdrSignal,
    MdrIdler,
    Nrf,
    Fano,
    G2Signal,
    G2Idler,
}

impl Stat {
    pub const ALL: [Stat; 10] = [
        Stat::MeanSignal,
        Stat::MeanIdler,
        Stat::VarSignal,
        Stat::VarIdler,
        Stat::MdrSignal,
        Stat::MdrIdler,
        Stat::Nrf,
        Stat::Fano,
        Stat::G2Signal,
        Stat::G2Idler,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stat::MeanSignal => "mean_s",
            Stat::MeanIdler => "mean_i",
            Stat::VarSignal => "var_s",
            Stat::VarIdler => "var_i",
            Stat::MdrSignal => "mdr_s",
            Stat::MdrIdler => "mdr_i",
            Stat::Nrf => "nrf",
            Stat::Fano => "fano",
            Stat::G2Signal => "g2_s",
            Stat::G2Idler => "g2_i",
        }
    }
}

/// Shifted single-pass sums over a subset of pulses.
struct Sums {
    n: f64,
    s: f64,
    i: f64,
    ss: f64,
    ii: f64,
    si: f64,
}

impl Sums {
    fn over(cols: &Columns, shift: (f64, f64), idx: impl Iterator<Item = usize>) -> Self {
        let mut acc = Sums { n: 0.0, s: 0.0, i: 0.0, ss: 0.0, ii: 0.0, si: 0.0 };
        for k in idx {
            let s = cols.d_s[k] - shift.0;
            let i = cols.d_i[k] - shift.1;
            acc.n += 1.0;
            acc.s += s;
            acc.i += i;
            acc.ss += s * s;
            acc.ii += i * i;
            acc.si += s * i;
        }
        acc
    }

    fn stats(&self, shift: (f64, f64)) -> [f64; 10] {
        let n = self.n;
        let ms = self.s / n;
        let mi = self.i / n;
        let var_s = (self.ss - n * ms * ms) / (n - 1.0);
        let var_i = (self.ii - n * mi * mi) / (n - 1.0);
        let cov = (self.si - n * ms * mi) / (n - 1.0);
        let mean_s = ms + shift.0;
        let mean_i = mi + shift.1;
        let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { f64::NAN };
        let total = mean_s + mean_i;
        // <x^2>/<x> - 1 over <x>, with <x^2> from the population second moment
        let g2 = |mean: f64, var: f64| ratio(var * (n - 1.0) / n + mean * mean - mean, mean * mean);
        [
            mean_s,
            mean_i,
            var_s,
            var_i,
            ratio(mean_s, var_s.max(0.0).sqrt()),
            ratio(mean_i, var_i.max(0.0).sqrt()),
            ratio(var_s + var_i - 2.0 * cov, total),
            ratio(var_s + var_i + 2.0 * cov, total),
            g2(mean_s, var_s),
            g2(mean_i, var_i),
        ]
    }
}

fn full_sample(cols: &Columns) -> ([f64; 10], (f64, f64)) {
    let n = cols.len().max(1) as f64;
    let shift = (cols.d_s.iter().sum::<f64>() / n, cols.d_i.iter().sum::<f64>() / n);
    (Sums::over(cols, shift, 0..cols.len()).stats(shift), shift)
}

/// Every [`Stat`] with bootstrap errors.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStatistics {
    pub pulses: usize,
    pub values: Vec<(Stat, Estimate)>,
}

impl EnsembleStatistics {
    pub fn get(&self, stat: Stat) -> Estimate {
        self.values.iter().find(|(s, _)| *s == stat).map(|(_, e)| *e).expect("all stats present")
    }

    /// Value or NaN.
    pub fn value(&self, stat: Stat) -> f64 {
        self.get(stat).value.unwrap_or(f64::NAN)
    }

    pub fn stderr(&self, stat: Stat) -> f64 {
        self.get(stat).stderr
    }
}

/// All statistics of an ensemble; fewer than two pulses gives undefined values.
pub fn ensemble_statistics(e: &Ensemble, boot: &Bootstrap) -> EnsembleStatistics {
    let cols = e.columns();
    let n = cols.len();
    if n < 2 {
        return EnsembleStatistics {
            pulses: n,
            values: Stat::ALL.iter().map(|&s| (s, Estimate { value: None, stderr: f64::NAN })).collect(),
        };
    }
    let (point, shift) = full_sample(&cols);
    let errs = boot.stderr(n, |idx| Sums::over(&cols, shift, idx.iter().copied()).stats(shift));
    EnsembleStatistics {
        pulses: n,
        values: Stat::ALL.iter().enumerate().map(|(k, &s)| (s, Estimate::from_raw(point[k], errs[k]))).collect(),
    }
}

fn single(e: &Ensemble, boot: &Bootstrap, stat: Stat) -> Estimate {
    let cols = e.columns();
    if cols.len() < 2 {
        return Estimate { value: None, stderr: f64::NAN };
    }
    let k = Stat::ALL.iter().position(|&s| s == stat).expect("known stat");
    let (point, shift) = full_sample(&cols);
    let [err] = boot.stderr(cols.len(), |idx| [Sums::over(&cols, shift, idx.iter().copied()).stats(shift)[k]]);
    Estimate::from_raw(point[k], err)
}

/// Noise reduction factor `Var(d_i - d_s) / <d_i + d_s>`.
pub fn nrf(e: &Ensemble, boot: &Bootstrap) -> Estimate {
    single(e, boot, Stat::Nrf)
}

/// Fano-type factor `Var(d_i + d_s) / <d_i + d_s>`.
pub fn fano(e: &Ensemble, boot: &Bootstrap) -> Estimate {
    single(e, boot, Stat::Fano)
}
