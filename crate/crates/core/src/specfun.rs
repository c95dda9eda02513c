//! Diagonal Gauss hypergeometric series and the photon-number statistics of
//! a twin-beam state after ideal N-photon subtraction.
//!
//! The subtracted state has photon-number weights `C(n+N, N)^2 * lambda^n`,
//! normalized by `2F1(1+N, 1+N; 1; lambda)`. The series is summed term by term
//! with the exact ratio
//!
//! ```text
//! t[n+1] / t[n] = lambda * ((n + 1 + N) / (n + 1))^2
//! ```
//!
//! which decreases monotonically in `n`. Once it drops below one the remaining
//! tail is bounded by a geometric series, which gives a rigorous stopping rule.
//! Running sums are rescaled whenever they grow large, so the moments stay finite
//! even when the series value itself overflows (e.g. `N = 100`, `lambda -> 1`).

use crate::scalar::{CompensatedSum, Real};
use crate::Moments;

/// Hard cap on the number of series terms.
pub const MAX_TERMS: u64 = 100_000_000;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SpecfunError {
    #[error("lambda {0} outside [0, 1)")]
    LambdaOutOfRange(f64),
    #[error("mean photon number {0} must be finite and >= 0")]
    InvalidMean(f64),
    #[error("cannot subtract {0} photons from vacuum")]
    SubtractionFromVacuum(u32),
    #[error("series not converged after {terms} terms (partial {partial:e}, tail bound {tail_bound:e})")]
    NotConverged { partial: f64, tail_bound: f64, terms: u64 },
    #[error("variance vanishes; ratio undefined")]
    DegenerateVariance,
}

/// Value of a truncated series together with its error budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesResult<T> {
    /// Series value; `inf` when it exceeds the scalar range (see `ln_value`).
    pub value: T,
    /// Natural log of the value, always finite.
    pub ln_value: T,
    pub terms_used: u64,
    /// Upper bound on the absolute truncation error.
    pub tail_bound: T,
    /// `tail_bound / value`.
    pub relative_tail: T,
}

/// Default relative tolerance: a few ulps of the scalar type.
pub fn default_tolerance<T: Real>() -> T {
    T::epsilon() * T::lit(4.0)
}

struct Accumulated<T> {
    s0: CompensatedSum<T>,
    // weighted running mean / centred sum of squares (West 1979)
    weight: T,
    mean: T,
    m2: T,
    ln_scale: T,
    terms: u64,
    rel_tail: T,
}

fn check_lambda<T: Real>(lambda: T) -> Result<(), SpecfunError> {
    if lambda >= T::zero() && lambda < T::one() {
        Ok(())
    } else {
        Err(SpecfunError::LambdaOutOfRange(lambda.as_f64()))
    }
}

fn sum_diagonal<T: Real>(
    subtracted: u32,
    lambda: T,
    rel_tol: T,
    with_moments: bool,
    cap: u64,
) -> Result<Accumulated<T>, SpecfunError> {
    check_lambda(lambda)?;
    let big_n = T::from_count(subtracted as u64);
    let one = T::one();
    let ratio = |n: T| {
        let f = (n + one + big_n) / (n + one);
        lambda * f * f
    };
    let rescale_at = T::lit(T::RESCALE_AT);
    let rescale_by = rescale_at.recip();
    let ln_rescale = rescale_at.ln();

    let mut acc = Accumulated {
        s0: CompensatedSum::new(),
        weight: T::zero(),
        mean: T::zero(),
        m2: T::zero(),
        ln_scale: T::zero(),
        terms: 0,
        rel_tail: T::infinity(),
    };
    let mut s1 = CompensatedSum::new();
    let mut term = one;
    let mut n: u64 = 0;
    loop {
        let x = T::from_count(n);
        acc.s0.add(term);
        if with_moments {
            s1.add(x * term);
            let w_new = acc.weight + term;
            if w_new > T::zero() {
                let delta = x - acc.mean;
                let r = delta * term / w_new;
                acc.mean += r;
                acc.m2 += acc.weight * delta * r;
            }
            acc.weight = w_new;
        }
        acc.terms = n + 1;

        let q_n = ratio(x);
        let next = term * q_n;
        let x1 = x + one;
        let q_next = ratio(x1);

        // Tails start at index n+1; every later ratio is <= q_next.
        let mut done = false;
        if q_next < one {
            let tail0 = next / (one - q_next);
            let s0 = acc.s0.value();
            let rel0 = if s0 > T::zero() { tail0 / s0 } else { T::infinity() };
            acc.rel_tail = rel0;
            done = tail0 <= rel_tol * s0;
            if with_moments && done {
                let grow = (x1 + one) / x1;
                let rho1 = q_next * grow;
                let rho2 = rho1 * grow;
                if rho2 < one {
                    let tail1 = x1 * next / (one - rho1);
                    let tail2 = x1 * x1 * next / (one - rho2);
                    // (k - mean)^2 <= k^2 for k >= mean/2, which holds in the tail
                    done = tail1 <= rel_tol * s1.value()
                        && tail2 <= rel_tol * acc.m2
                        && x1 >= acc.mean * T::lit(0.5);
                } else {
                    done = false;
                }
            }
        }
        if done || next == T::zero() {
            if next == T::zero() {
                acc.rel_tail = T::zero();
            }
            return Ok(acc);
        }
        if n + 1 >= cap {
            let s0 = acc.s0.value();
            let partial = (s0.ln() + acc.ln_scale).exp();
            return Err(SpecfunError::NotConverged {
                partial: partial.as_f64(),
                tail_bound: (partial * acc.rel_tail).as_f64(),
                terms: acc.terms,
            });
        }

        term = next;
        let biggest = acc.s0.value().max(s1.value() * x1);
        if biggest > rescale_at {
            acc.s0.scale(rescale_by);
            s1.scale(rescale_by);
            acc.weight *= rescale_by;
            acc.m2 *= rescale_by;
            term *= rescale_by;
            acc.ln_scale += ln_rescale;
        }
        n += 1;
    }
}

/// `2F1(1+N, 1+N; 1; lambda) = sum_n C(n+N, N)^2 lambda^n`.
pub fn hyp2f1_diag<T: Real>(subtracted: u32, lambda: T, rel_tol: T) -> Result<SeriesResult<T>, SpecfunError> {
    hyp2f1_diag_capped(subtracted, lambda, rel_tol, MAX_TERMS)
}

/// [`hyp2f1_diag`] with an explicit iteration cap.
pub fn hyp2f1_diag_capped<T: Real>(
    subtracted: u32,
    lambda: T,
    rel_tol: T,
    cap: u64,
) -> Result<SeriesResult<T>, SpecfunError> {
    let acc = sum_diagonal(subtracted, lambda, rel_tol, false, cap)?;
    let ln_value = acc.s0.value().ln() + acc.ln_scale;
    let value = ln_value.exp();
    Ok(SeriesResult {
        value,
        ln_value,
        terms_used: acc.terms,
        tail_bound: value * acc.rel_tail,
        relative_tail: acc.rel_tail,
    })
}

fn lambda_checked<T: Real>(subtracted: u32, n_mean: T) -> Result<T, SpecfunError> {
    if !(n_mean >= T::zero() && n_mean.is_finite()) {
        return Err(SpecfunError::InvalidMean(n_mean.as_f64()));
    }
    if n_mean == T::zero() && subtracted > 0 {
        return Err(SpecfunError::SubtractionFromVacuum(subtracted));
    }
    Ok(n_mean / (n_mean + T::one()))
}

/// `ln C(n+N, N)` as a sum of `ln(1 + n/k)`.
fn ln_binomial_shifted<T: Real>(n: u64, subtracted: u32) -> T {
    let x = T::from_count(n);
    (1..=subtracted as u64).fold(T::zero(), |acc, k| acc + (x / T::from_count(k)).ln_1p())
}

/// Probability of `n` photons in each beam after ideal subtraction of `N` photons.
pub fn subtracted_pmf<T: Real>(subtracted: u32, n_mean: T, n: u64) -> Result<T, SpecfunError> {
    let lambda = lambda_checked(subtracted, n_mean)?;
    if lambda == T::zero() {
        return Ok(if n == 0 { T::one() } else { T::zero() });
    }
    let norm = hyp2f1_diag(subtracted, lambda, default_tolerance())?;
    let ln_p = T::lit(2.0) * ln_binomial_shifted::<T>(n, subtracted)
        + T::from_count(n) * lambda.ln()
        - norm.ln_value;
    Ok(ln_p.exp())
}

/// Mean and variance of the per-beam photon number after ideal subtraction.
pub fn subtracted_moments<T: Real>(subtracted: u32, n_mean: T, rel_tol: T) -> Result<Moments<T>, SpecfunError> {
    let lambda = lambda_checked(subtracted, n_mean)?;
    if lambda == T::zero() {
        return Ok(Moments::new(T::zero(), T::zero()));
    }
    let acc = sum_diagonal(subtracted, lambda, rel_tol, true, MAX_TERMS)?;
    Ok(Moments::new(acc.mean, acc.m2 / acc.weight))
}

/// Mean-to-deviation ratio of either beam after ideal subtraction.
pub fn subtracted_mdr<T: Real>(subtracted: u32, n_mean: T) -> Result<T, SpecfunError> {
    subtracted_moments(subtracted, n_mean, default_tolerance())?
        .mdr()
        .ok_or(SpecfunError::DegenerateVariance)
}

/// Which large-`N` approximation was applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AsymptoticRegime {
    /// `sqrt(2 lambda N - 1)`, used for `lambda < 0.1`.
    Dim,
    /// `sqrt(2 lambda N + 1)`.
    Bright,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsymptoticMdr<T> {
    pub value: T,
    pub regime: AsymptoticRegime,
    /// Radicand was negative and clamped to zero; the approximation does not apply.
    pub invalid_regime: bool,
}

/// Threshold on `lambda` below which the dim-beam approximation is used.
pub const DIM_LAMBDA_THRESHOLD: f64 = 0.1;

/// Large-`N` approximation of the subtracted-state MDR, in terms of `lambda`.
pub fn mdr_asymptotic_lambda<T: Real>(subtracted: u32, lambda: T) -> AsymptoticMdr<T> {
    let two_lambda_n = T::lit(2.0) * lambda * T::from_count(subtracted as u64);
    let (radicand, regime) = if lambda < T::lit(DIM_LAMBDA_THRESHOLD) {
        (two_lambda_n - T::one(), AsymptoticRegime::Dim)
    } else {
        (two_lambda_n + T::one(), AsymptoticRegime::Bright)
    };
    if radicand < T::zero() {
        AsymptoticMdr { value: T::zero(), regime, invalid_regime: true }
    } else {
        AsymptoticMdr { value: radicand.sqrt(), regime, invalid_regime: false }
    }
}

/// Large-`N` approximation of the subtracted-state MDR.
pub fn mdr_asymptotic<T: Real>(subtracted: u32, n_mean: T) -> AsymptoticMdr<T> {
    mdr_asymptotic_lambda(subtracted, n_mean / (n_mean + T::one()))
}
