//! Geometric and binomial variates for thermal modes and photon thinning.

use rand::Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

/// Largest `n` drawn trial by trial.
pub const BIT_BY_BIT_MAX: u64 = 64;
/// Largest `n * min(p, 1-p)` drawn by sequential inversion.
pub const INVERSION_MAX_MEAN: f64 = 30.0;

/// Thermal photon number: `P(n) = (1 - lambda) lambda^n`, by inversion.
pub fn sample_geometric<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    debug_assert!((0.0..1.0).contains(&lambda));
    if lambda <= 0.0 {
        return 0;
    }
    // U in (0, 1]
    let u: f64 = 1.0 - rng.random::<f64>();
    let n = (u.ln() / lambda.ln()).floor();
    if n >= u64::MAX as f64 {
        u64::MAX
    } else {
        n as u64
    }
}

/// How binomial variates are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinomialMethod {
    /// Trial-by-trial, inversion, or BTPE rejection depending on `n` and `p`.
    #[default]
    Exact,
    /// Rounded normal approximation, clamped to `[0, n]`, once the exact
    /// small-`n` paths no longer apply.
    GaussianFast,
}

/// Binomial variate `Bin(n, p)`.
pub fn sample_binomial<R: Rng + ?Sized>(n: u64, p: f64, method: BinomialMethod, rng: &mut R) -> u64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    if n <= BIT_BY_BIT_MAX {
        return (0..n).filter(|_| rng.random::<f64>() < p).count() as u64;
    }
    let q = p.min(1.0 - p);
    let flip = p > 0.5;
    let k = if n as f64 * q <= INVERSION_MAX_MEAN {
        invert(n, q, rng)
    } else {
        match method {
            BinomialMethod::Exact => Binomial::new(n, q).expect("valid binomial").sample(rng),
            BinomialMethod::GaussianFast => {
                let mean = n as f64 * q;
                let sd = (mean * (1.0 - q)).sqrt();
                let z: f64 = rng.sample(StandardNormal);
                (mean + sd * z).round().clamp(0.0, n as f64) as u64
            }
        }
    };
    if flip {
        n - k
    } else {
        k
    }
}

/// Sequential search through the cdf; `p <= 1/2` and `n p` small.
fn invert<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    let ratio = p / (1.0 - p);
    let mut pmf = (1.0 - p).powf(n as f64);
    let mut u: f64 = rng.random();
    let mut k = 0u64;
    loop {
        if u < pmf {
            return k;
        }
        u -= pmf;
        if k == n {
            // u left over from rounding
            return n;
        }
        pmf *= ratio * (n - k) as f64 / (k + 1) as f64;
        k += 1;
        if pmf <= 0.0 {
            // underflowed far in the tail; restart keeps the draw exact
            pmf = (1.0 - p).powf(n as f64);
            u = rng.random();
            k = 0;
        }
    }
}
