//! Exact enumeration of the detection chain on a truncated photon-number
//! support, used as ground truth for the Monte Carlo and the series.
//!
//! Nothing here calls into `specfun`, `analytic` or `montecarlo`: the
//! distributions are built from their own recurrences and convolutions.

use std::io::{self, Write};

use crate::config::{ConditionWindow, ValidatedConfig};
use crate::report::format_value;
use crate::scalar::Real;
use crate::Moments;

/// Default cumulative-tail budget.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;
/// Default largest photon number per beam the enumeration accepts.
pub const DEFAULT_MAX_PHOTONS: usize = 160;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum OracleError {
    #[error("support of {needed} photons per beam exceeds the budget of {budget}")]
    TruncationBudget { needed: usize, budget: usize },
    #[error("window [{lo}, {hi}] holds no probability mass")]
    ZeroMassWindow { lo: f64, hi: f64 },
    #[error("tail beyond n = {n_max} is {tail:e}, above 1e-14")]
    InsufficientSupport { n_max: usize, tail: f64 },
    #[error("mean photon number must be > 0 for {0} subtracted photons")]
    InvalidMean(u32),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleOptions {
    pub tail_tol: f64,
    pub max_photons: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { tail_tol: DEFAULT_TAIL_TOL, max_photons: DEFAULT_MAX_PHOTONS }
    }
}

/// Truncated negative binomial `NB(modes, lambda)` by its term recurrence.
/// Returns the table and the mass beyond it.
fn negative_binomial<T: Real>(modes: u32, lambda: T, tail_tol: T, budget: usize) -> Result<(Vec<T>, T), OracleError> {
    if modes == 0 || lambda == T::zero() {
        return Ok((vec![T::one()], T::zero()));
    }
    let m = T::from_count(modes as u64);
    let mut p = vec![(T::one() - lambda).powi(modes as i32)];
    let mut k = 0usize;
    loop {
        let kk = T::from_count(k as u64);
        let next = p[k] * lambda * (kk + m) / (kk + T::one());
        let r_next = lambda * (kk + T::one() + m) / (kk + T::lit(2.0));
        // ratios decrease in k once below one: geometric bound on the rest
        if r_next < T::one() && next / (T::one() - r_next) < tail_tol {
            let captured = p.iter().fold(T::zero(), |a, &x| a + x);
            return Ok((p, (T::one() - captured).max(T::zero())));
        }
        p.push(next);
        k += 1;
        if k > budget {
            return Err(OracleError::TruncationBudget { needed: k, budget });
        }
    }
}

/// Joint distribution of total photon numbers `(n_s, n_i)` at the source.
#[derive(Clone, Debug, PartialEq)]
pub struct SourcePmf<T> {
    /// Row-major over `n_s` then `n_i`.
    table: Vec<T>,
    size: usize,
    pub truncation_tail: T,
}

impl<T: Real> SourcePmf<T> {
    pub fn get(&self, n_s: usize, n_i: usize) -> T {
        if n_s < self.size && n_i < self.size {
            self.table[n_s * self.size + n_i]
        } else {
            T::zero()
        }
    }

    /// Largest photon number per beam in the table, plus one.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn total(&self) -> T {
        self.table.iter().fold(T::zero(), |a, &x| a + x)
    }

    pub fn marginal_signal(&self) -> Vec<T> {
        (0..self.size).map(|s| (0..self.size).fold(T::zero(), |a, i| a + self.get(s, i))).collect()
    }
}

/// Matched modes give the same negative-binomial count to both beams; each
/// beam adds its own independent unmatched count.
pub fn exact_source_pmf<T: Real>(
    matched: u32,
    unmatched: u32,
    n_mean: T,
    opts: &OracleOptions,
) -> Result<SourcePmf<T>, OracleError> {
    let lambda = n_mean / (n_mean + T::one());
    let part = T::lit(opts.tail_tol) / T::lit(3.0);
    let (shared, tail_m) = negative_binomial(matched, lambda, part, opts.max_photons)?;
    let (own, tail_u) = negative_binomial(unmatched, lambda, part, opts.max_photons)?;
    let size = shared.len() + own.len() - 1;
    if size > opts.max_photons + 1 {
        return Err(OracleError::TruncationBudget { needed: size - 1, budget: opts.max_photons });
    }
    let mut table = vec![T::zero(); size * size];
    for (m, &pm) in shared.iter().enumerate() {
        for (us, &ps) in own.iter().enumerate() {
            let row = (m + us) * size;
            for (ui, &pi) in own.iter().enumerate() {
                table[row + m + ui] += pm * ps * pi;
            }
        }
    }
    let keep = (T::one() - tail_m) * (T::one() - tail_u) * (T::one() - tail_u);
    Ok(SourcePmf { table, size, truncation_tail: T::one() - keep })
}

/// `Bin(k; n, p)` for all `k`, by the multiplicative recurrence.
fn binomial_row<T: Real>(n: usize, p: T) -> Vec<T> {
    if p == T::zero() || n == 0 {
        let mut row = vec![T::zero(); n + 1];
        row[0] = T::one();
        return row;
    }
    if p == T::one() {
        let mut row = vec![T::zero(); n + 1];
        row[n] = T::one();
        return row;
    }
    // build from the mode outward to avoid underflow of (1-p)^n
    let q = T::one() - p;
    let mut row = vec![T::zero(); n + 1];
    let mode = ((T::from_count(n as u64 + 1) * p).floor().as_f64() as usize).min(n);
    row[mode] = T::one();
    for k in mode..n {
        row[k + 1] = row[k] * p / q * T::from_count((n - k) as u64) / T::from_count(k as u64 + 1);
    }
    for k in (1..=mode).rev() {
        row[k - 1] = row[k] * q / p * T::from_count(k as u64) / T::from_count((n - k + 1) as u64);
    }
    let z = row.iter().fold(T::zero(), |a, &x| a + x);
    row.iter_mut().for_each(|x| *x /= z);
    row
}

/// `P(d, c | n)` for one beam: tap split with `r`, then through-path detection
/// with `eta` and tap detection with `eta_tap`. Indexed `[d * (n+1) + c]`.
fn beam_kernel<T: Real>(n: usize, tap: T, eta: T, eta_tap: T) -> Vec<T> {
    let w = n + 1;
    let mut out = vec![T::zero(); w * w];
    let split = binomial_row(n, tap);
    for (t, &pt) in split.iter().enumerate() {
        if pt == T::zero() {
            continue;
        }
        let through = binomial_row(n - t, eta);
        let tapped = binomial_row(t, eta_tap);
        for (d, &pd) in through.iter().enumerate() {
            let pdt = pt * pd;
            for (c, &pc) in tapped.iter().enumerate() {
                out[d * w + c] += pdt * pc;
            }
        }
    }
    out
}

/// Exact joint distribution of detected `(d_s, d_i, n_c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointPmf<T> {
    table: Vec<T>,
    /// Extents along `d_s`, `d_i`, `n_c`.
    dims: [usize; 3],
    pub truncation_tail: T,
}

impl<T: Real> JointPmf<T> {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn get(&self, d_s: usize, d_i: usize, n_c: usize) -> T {
        let [a, b, c] = self.dims;
        if d_s < a && d_i < b && n_c < c {
            self.table[(d_s * b + d_i) * c + n_c]
        } else {
            T::zero()
        }
    }

    /// Nonzero cells as `((d_s, d_i, n_c), p)`.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize, usize), T)> + '_ {
        let [_, b, c] = self.dims;
        self.table
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > T::zero())
            .map(move |(k, &p)| ((k / (b * c), (k / c) % b, k % c), p))
    }

    pub fn total(&self) -> T {
        self.table.iter().fold(T::zero(), |a, &x| a + x)
    }

    /// Writes `d_s,d_i,n_c,p` for every nonzero cell.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["d_s", "d_i", "n_c", "p"])?;
        for ((s, i, c), p) in self.iter() {
            w.write_record([s.to_string(), i.to_string(), c.to_string(), format_value(p.as_f64())])?;
        }
        w.flush()
    }
}

/// Propagates the source distribution through tapping, tap detection and
/// beam detection with exact binomial convolutions.
pub fn exact_pipeline<T: Real>(cfg: &ValidatedConfig, opts: &OracleOptions) -> Result<JointPmf<T>, OracleError> {
    let src = cfg.source();
    let ch = cfg.channel();
    let source = exact_source_pmf::<T>(src.matched_modes, src.unmatched_modes, T::lit(src.n_mean_per_mode), opts)?;
    let size = source.size();
    let (r, eta_s, eta_i, eta_c) = (T::lit(ch.tap_ratio), T::lit(ch.eta_signal), T::lit(ch.eta_idler), T::lit(ch.eta_tap));
    let ker_s: Vec<Vec<T>> = (0..size).map(|n| beam_kernel(n, r, eta_s, eta_c)).collect();
    let ker_i: Vec<Vec<T>> = (0..size).map(|n| beam_kernel(n, r, eta_i, eta_c)).collect();

    let dims = [size, size, 2 * size - 1];
    let mut table = vec![T::zero(); dims[0] * dims[1] * dims[2]];
    // signal side summed out first for each idler photon number
    let mut partial = vec![T::zero(); size * size];
    for (n_i, ki) in ker_i.iter().enumerate() {
        partial.iter_mut().for_each(|x| *x = T::zero());
        for (n_s, ks) in ker_s.iter().enumerate() {
            let p = source.get(n_s, n_i);
            if p == T::zero() {
                continue;
            }
            let w = n_s + 1;
            for d in 0..w {
                for c in 0..w {
                    partial[d * size + c] += p * ks[d * w + c];
                }
            }
        }
        let wi = n_i + 1;
        for d_s in 0..size {
            for c_s in 0..size {
                let a = partial[d_s * size + c_s];
                if a == T::zero() {
                    continue;
                }
                for d_i in 0..wi {
                    let base = (d_s * dims[1] + d_i) * dims[2] + c_s;
                    for c_i in 0..wi {
                        let k = ki[d_i * wi + c_i];
                        if k != T::zero() {
                            table[base + c_i] += a * k;
                        }
                    }
                }
            }
        }
    }
    Ok(JointPmf { table, dims, truncation_tail: source.truncation_tail })
}

/// Exact statistics of the detected counts, optionally conditioned on a window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactStatistics<T> {
    /// Probability of the window (1 for the unconditioned case, up to truncation).
    pub mass: T,
    pub tap_mean: T,
    pub tap_sd: T,
    pub signal: Moments<T>,
    pub idler: Moments<T>,
    pub covariance: T,
    pub nrf: T,
    pub fano: T,
    pub mdr_signal: T,
    pub mdr_idler: T,
}

fn tap_moments<T: Real>(pmf: &JointPmf<T>) -> (T, T) {
    let z = pmf.total();
    let mean = pmf.iter().fold(T::zero(), |a, ((_, _, c), p)| a + T::from_count(c as u64) * p) / z;
    let var = pmf.iter().fold(T::zero(), |a, ((_, _, c), p)| {
        let d = T::from_count(c as u64) - mean;
        a + d * d * p
    }) / z;
    (mean, var.sqrt())
}

fn statistics_where<T: Real>(pmf: &JointPmf<T>, keep: impl Fn(usize) -> bool) -> Option<(T, Moments<T>, Moments<T>, T)> {
    let cells: Vec<_> = pmf.iter().filter(|((_, _, c), _)| keep(*c)).collect();
    let mass = cells.iter().fold(T::zero(), |a, (_, p)| a + *p);
    if mass == T::zero() {
        return None;
    }
    let (ms, mi) = cells.iter().fold((T::zero(), T::zero()), |(a, b), ((s, i, _), p)| {
        (a + T::from_count(*s as u64) * *p, b + T::from_count(*i as u64) * *p)
    });
    let (ms, mi) = (ms / mass, mi / mass);
    let (vs, vi, cov) = cells.iter().fold((T::zero(), T::zero(), T::zero()), |(a, b, c), ((s, i, _), p)| {
        let ds = T::from_count(*s as u64) - ms;
        let di = T::from_count(*i as u64) - mi;
        (a + ds * ds * *p, b + di * di * *p, c + ds * di * *p)
    });
    Some((mass, Moments::new(ms, vs / mass), Moments::new(mi, vi / mass), cov / mass))
}

fn assemble<T: Real>(mass: T, tap: (T, T), s: Moments<T>, i: Moments<T>, cov: T) -> ExactStatistics<T> {
    let two = T::lit(2.0);
    let total = s.mean + i.mean;
    let ratio = |a: T, b: T| if b > T::zero() { a / b } else { T::nan() };
    ExactStatistics {
        mass,
        tap_mean: tap.0,
        tap_sd: tap.1,
        signal: s,
        idler: i,
        covariance: cov,
        nrf: ratio(s.variance + i.variance - two * cov, total),
        fano: ratio(s.variance + i.variance + two * cov, total),
        mdr_signal: ratio(s.mean, s.variance.sqrt()),
        mdr_idler: ratio(i.mean, i.variance.sqrt()),
    }
}

/// Unconditioned exact statistics, normalized over the truncated support.
pub fn exact_statistics<T: Real>(pmf: &JointPmf<T>) -> ExactStatistics<T> {
    let tap = tap_moments(pmf);
    let (mass, s, i, cov) = statistics_where(pmf, |_| true).expect("nonempty table");
    assemble(mass, tap, s, i, cov)
}

/// Exact statistics of the pulses whose tap count lies in the window, with
/// the window placed using the exact tap mean and standard deviation.
pub fn exact_conditional_stats<T: Real>(pmf: &JointPmf<T>, w: &ConditionWindow) -> Result<ExactStatistics<T>, OracleError> {
    let tap = tap_moments(pmf);
    let (lo, hi) = w.bounds(tap.0.as_f64(), tap.1.as_f64());
    let z = pmf.total();
    let (mass, s, i, cov) = statistics_where(pmf, |c| {
        let c = c as f64;
        lo <= c && c <= hi
    })
    .ok_or(OracleError::ZeroMassWindow { lo, hi })?;
    Ok(assemble(mass / z, tap, s, i, cov))
}

/// Normalized weights `C(n+N, N)^2 lambda^n`, `n = 0..=n_max`, by direct
/// summation in the log domain.
pub fn exact_subtracted_pmf<T: Real>(subtracted: u32, n_mean: T, n_max: usize) -> Result<Vec<T>, OracleError> {
    if n_mean == T::zero() {
        if subtracted > 0 {
            return Err(OracleError::InvalidMean(subtracted));
        }
        let mut p = vec![T::zero(); n_max + 1];
        p[0] = T::one();
        return Ok(p);
    }
    let lambda = n_mean / (n_mean + T::one());
    let ln_lambda = lambda.ln();
    let ln_weight = |n: usize| {
        let mut acc = T::zero();
        for k in 1..=subtracted as usize {
            acc += T::from_count((n + k) as u64).ln() - T::from_count(k as u64).ln();
        }
        T::lit(2.0) * acc + T::from_count(n as u64) * ln_lambda
    };
    let logs: Vec<T> = (0..=n_max).map(ln_weight).collect();
    let peak = logs.iter().copied().fold(T::neg_infinity(), T::max);
    let w: Vec<T> = logs.iter().map(|&l| (l - peak).exp()).collect();
    let z = w.iter().fold(T::zero(), |a, &x| a + x);

    // tail after n_max, bounded once the term ratio is below one
    let nn = T::from_count(n_max as u64);
    let big_n = T::from_count(subtracted as u64);
    let ratio = |x: T| {
        let f = (x + T::one() + big_n) / (x + T::one());
        lambda * f * f
    };
    let q = ratio(nn + T::one());
    let tail = if q < T::one() {
        w[n_max] * ratio(nn) / (T::one() - q) / z
    } else {
        T::infinity()
    };
    if !(tail < T::lit(1e-14)) {
        return Err(OracleError::InsufficientSupport { n_max, tail: tail.as_f64() });
    }
    Ok(w.into_iter().map(|x| x / z).collect())
}

/// Moments of the subtracted distribution by two-pass summation.
pub fn exact_subtracted_reference<T: Real>(subtracted: u32, n_mean: T, n_max: usize) -> Result<Moments<T>, OracleError> {
    let p = exact_subtracted_pmf(subtracted, n_mean, n_max)?;
    let mean = p.iter().enumerate().fold(T::zero(), |a, (n, &x)| a + T::from_count(n as u64) * x);
    let var = p.iter().enumerate().fold(T::zero(), |a, (n, &x)| {
        let d = T::from_count(n as u64) - mean;
        a + d * d * x
    });
    Ok(Moments::new(mean, var))
}

/// Smallest power-of-two-ish support that passes the 1e-14 tail check.
pub fn reference_support(subtracted: u32, n_mean: f64) -> usize {
    let mut n_max = 64usize;
    while exact_subtracted_pmf::<f64>(subtracted, n_mean, n_max).is_err() && n_max < 1 << 24 {
        n_max = n_max * 3 / 2;
    }
    n_max
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{validate, ChannelConfig, SourceConfig};
    use approx::assert_relative_eq;

    fn cfg(n: f64, m: u32, k: u32, r: f64, eta: f64) -> ValidatedConfig {
        validate(SourceConfig::new(n, m, k), ChannelConfig::uniform(r, eta), ConditionWindow::default()).unwrap()
    }

    #[test]
    fn single_mode_source_is_diagonal_thermal() {
        let pmf = exact_source_pmf::<f64>(1, 0, 1.5, &OracleOptions::default()).unwrap();
        for n in 0..pmf.size() {
            let thermal = 1.5f64.powi(n as i32) / 2.5f64.powi(n as i32 + 1);
            assert_relative_eq!(pmf.get(n, n), thermal, max_relative = 1e-12);
            if n > 0 {
                assert_eq!(pmf.get(n, n - 1), 0.0);
            }
        }
    }

    #[test]
    fn two_mode_vacuum_probability() {
        let pmf = exact_source_pmf::<f64>(2, 0, 1.0, &OracleOptions::default()).unwrap();
        assert_relative_eq!(pmf.get(0, 0), 0.25, max_relative = 1e-15);
    }

    #[test]
    fn source_marginal_is_three_mode_distribution() {
        let pmf = exact_source_pmf::<f64>(2, 1, 0.8, &OracleOptions::default()).unwrap();
        let marginal = pmf.marginal_signal();
        for (n, &p) in marginal.iter().enumerate().take(30) {
            let expected = crate::analytic::multimode_pmf(n as u64, 3, 0.8f64);
            assert!((p - expected).abs() < 1e-13, "n={n}");
        }
        assert!((pmf.total() + pmf.truncation_tail - 1.0).abs() < 1e-12);
        assert!(pmf.truncation_tail < 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let opts = OracleOptions { max_photons: 20, ..Default::default() };
        assert!(matches!(exact_source_pmf::<f64>(3, 0, 5.0, &opts), Err(OracleError::TruncationBudget { .. })));
    }

    #[test]
    fn binomial_rows_normalized() {
        for &(n, p) in &[(0usize, 0.3f64), (1, 0.3), (50, 0.01), (120, 0.7), (10, 1.0), (10, 0.0)] {
            let row = binomial_row(n, p);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let mean: f64 = row.iter().enumerate().map(|(k, x)| k as f64 * x).sum();
            assert!((mean - n as f64 * p).abs() < 1e-11);
        }
    }

    #[test]
    fn lossless_untapped_pipeline_is_diagonal() {
        let pmf = exact_pipeline::<f64>(&cfg(0.8, 2, 0, 0.0, 1.0), &OracleOptions::default()).unwrap();
        let off: f64 = pmf.iter().filter(|((s, i, _), _)| s != i).map(|(_, p)| p).sum();
        assert_eq!(off, 0.0);
        let stats = exact_statistics(&pmf);
        assert!(stats.nrf.abs() < 1e-12);
    }

    #[test]
    fn table_mean_matches_bookkeeping() {
        let pmf = exact_pipeline::<f64>(&cfg(0.8, 2, 1, 0.2, 0.7), &OracleOptions::default()).unwrap();
        let mean_s: f64 = pmf.iter().map(|((s, _, _), p)| s as f64 * p).sum();
        assert!((mean_s - 1.344).abs() < 1e-11, "{mean_s}");
        assert!((pmf.total() - (1.0 - pmf.truncation_tail)).abs() < 1e-12);
        assert!(pmf.iter().all(|(_, p)| p >= 0.0));
    }

    #[test]
    fn tapping_then_loss_is_one_thinning() {
        // through-path marginal equals the source marginal thinned once by (1-r) eta
        for &(n, m, k, r, eta) in &[(0.8, 2u32, 1u32, 0.2, 0.7), (0.5, 1, 2, 0.35, 0.9), (1.2, 3, 0, 0.1, 0.5)] {
            let c = cfg(n, m, k, r, eta);
            let pmf = exact_pipeline::<f64>(&c, &OracleOptions::default()).unwrap();
            let src = exact_source_pmf::<f64>(m, k, n, &OracleOptions::default()).unwrap().marginal_signal();
            let p = (1.0 - r) * eta;
            for d in 0..20usize {
                let direct: f64 = (0..pmf.dims()[1])
                    .flat_map(|i| (0..pmf.dims()[2]).map(move |nc| (i, nc)))
                    .map(|(i, nc)| pmf.get(d, i, nc))
                    .sum();
                let once: f64 = src.iter().enumerate().skip(d).map(|(nn, &ps)| ps * binomial_row(nn, p)[d]).sum();
                assert!((direct - once).abs() < 1e-12, "d={d}: {direct} vs {once}");
            }
        }
    }

    #[test]
    fn full_window_is_unconditioned() {
        let pmf = exact_pipeline::<f64>(&cfg(0.8, 2, 1, 0.2, 0.7), &OracleOptions::default()).unwrap();
        let all = exact_statistics(&pmf);
        let wide = exact_conditional_stats(&pmf, &ConditionWindow::new(1.0, 1e6)).unwrap();
        assert_relative_eq!(wide.signal.variance, all.signal.variance, max_relative = 1e-12);
        assert_relative_eq!(wide.nrf, all.nrf, max_relative = 1e-12);
        assert_relative_eq!(wide.mass, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn unconditioned_statistics_match_closed_form() {
        let c = cfg(0.8, 2, 1, 0.2, 0.7);
        let opts = OracleOptions { tail_tol: 1e-16, ..Default::default() };
        let pmf = exact_pipeline::<f64>(&c, &opts).unwrap();
        let s = exact_statistics(&pmf);
        let e = crate::analytic::DetectedExpectations::of(&c);
        assert_relative_eq!(s.signal.variance, e.signal.variance, max_relative = 1e-10);
        assert_relative_eq!(s.covariance, e.covariance, max_relative = 1e-10);
        assert_relative_eq!(s.nrf, e.nrf(), max_relative = 1e-10);
        assert_relative_eq!(s.fano, e.fano(), max_relative = 1e-10);
        assert_relative_eq!(s.tap_sd * s.tap_sd, e.tap.variance, max_relative = 1e-10);
    }

    #[test]
    fn narrow_window_cuts_signal_variance() {
        let pmf = exact_pipeline::<f64>(&cfg(0.8, 2, 1, 0.3, 0.7), &OracleOptions::default()).unwrap();
        let all = exact_statistics(&pmf);
        // tap mean 1.008, so the window holds the integer 1
        let w = ConditionWindow::new(1.0, 0.5);
        let cond = exact_conditional_stats(&pmf, &w).unwrap();
        assert!(cond.signal.variance < all.signal.variance);
    }

    #[test]
    fn empty_window_is_an_error() {
        let pmf = exact_pipeline::<f64>(&cfg(0.8, 2, 1, 0.2, 0.7), &OracleOptions::default()).unwrap();
        // tap mean 0.672, sd 0.927: [0.44, 0.90] holds no integer
        let err = exact_conditional_stats(&pmf, &ConditionWindow::half_sigma()).unwrap_err();
        assert!(matches!(err, OracleError::ZeroMassWindow { .. }));
    }

    #[test]
    fn subtracted_reference_thermal_and_peak() {
        let m = exact_subtracted_reference(0, 3.0f64, reference_support(0, 3.0)).unwrap();
        assert_relative_eq!(m.mean, 3.0, max_relative = 1e-12);
        assert_relative_eq!(m.variance, 12.0, max_relative = 1e-12);

        let argmax = |p: Vec<f64>| p.iter().enumerate().fold((0, 0.0), |b, (k, &x)| if x > b.1 { (k, x) } else { b }).0;
        assert_eq!(argmax(exact_subtracted_pmf(0, 2.0f64, 200).unwrap()), 0);
        assert!(argmax(exact_subtracted_pmf(10, 2.0f64, reference_support(10, 2.0)).unwrap()) > 0);
    }

    #[test]
    fn subtracted_reference_needs_support() {
        assert!(matches!(
            exact_subtracted_reference(5, 2.0f64, 10),
            Err(OracleError::InsufficientSupport { .. })
        ));
    }

    #[test]
    fn subtracted_reference_agrees_with_series() {
        let m = exact_subtracted_reference(5, 2.0f64, reference_support(5, 2.0)).unwrap();
        let s = crate::specfun::subtracted_moments(5, 2.0f64, 1e-15).unwrap();
        assert_relative_eq!(m.mean, s.mean, max_relative = 1e-10);
        assert_relative_eq!(m.variance, s.variance, max_relative = 1e-10);
    }

    #[test]
    fn csv_export() {
        let pmf = exact_pipeline::<f64>(&cfg(0.3, 1, 0, 0.0, 1.0), &OracleOptions::default()).unwrap();
        let mut buf = Vec::new();
        pmf.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("d_s,d_i,n_c,p"));
        assert!(lines.next().unwrap().starts_with("0,0,0,7.69230769231e-1"));
    }
}
