//! Ordinary least squares lines and the parametric-gain fit
//! `S = A sinh^2(sqrt(B P))`.

use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least 3 points, have {0}")]
    TooFewPoints(usize),
    #[error("x and y have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("all x values are equal")]
    RankDeficient,
    #[error("powers must be finite and > 0")]
    NonPositivePower,
    #[error("residual minimum not bracketed: best B = {rate:e} at the edge of [{lo:e}, {hi:e}], rms {rms:e}")]
    NotBracketed { rate: f64, lo: f64, hi: f64, rms: f64 },
    #[error("best amplitude {0:e} is not positive")]
    NonPositiveAmplitude(f64),
}

/// Straight-line fit with standard errors from the residual variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitResult<T> {
    pub slope: T,
    pub intercept: T,
    pub slope_stderr: T,
    pub intercept_stderr: T,
    /// `sqrt(SSR / n)`.
    pub residual_rms: T,
}

pub fn linear_fit<T: Real>(xs: &[T], ys: &[T]) -> Result<FitResult<T>, FitError> {
    if xs.len() != ys.len() {
        return Err(FitError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(FitError::TooFewPoints(xs.len()));
    }
    let n = T::from_count(xs.len() as u64);
    let mx = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
    let my = ys.iter().fold(T::zero(), |a, &y| a + y) / n;
    let sxx = xs.iter().fold(T::zero(), |a, &x| a + (x - mx) * (x - mx));
    if sxx == T::zero() {
        return Err(FitError::RankDeficient);
    }
    let sxy = xs.iter().zip(ys).fold(T::zero(), |a, (&x, &y)| a + (x - mx) * (y - my));
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr = xs
        .iter()
        .zip(ys)
        .fold(T::zero(), |a, (&x, &y)| {
            let r = y - intercept - slope * x;
            a + r * r
        });
    let s2 = ssr / (n - T::lit(2.0));
    Ok(FitResult {
        slope,
        intercept,
        slope_stderr: (s2 / sxx).sqrt(),
        intercept_stderr: (s2 * (n.recip() + mx * mx / sxx)).sqrt(),
        residual_rms: (ssr / n).sqrt(),
    })
}

/// Result of the gain fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainFit<T> {
    pub amplitude_a: T,
    pub rate_b: T,
    pub residual_rms: T,
    pub iterations: usize,
}

impl<T: Real> GainFit<T> {
    /// Parametric gain `sqrt(B P)`.
    pub fn gain(&self, power: T) -> T {
        (self.rate_b * power).sqrt()
    }

    pub fn predict(&self, power: T) -> T {
        let s = self.gain(power).sinh();
        self.amplitude_a * s * s
    }

    /// Gain at the smallest and largest of `powers`.
    pub fn gain_range(&self, powers: &[T]) -> (T, T) {
        let lo = powers.iter().copied().fold(T::infinity(), T::min);
        let hi = powers.iter().copied().fold(T::neg_infinity(), T::max);
        (self.gain(lo), self.gain(hi))
    }
}

struct Profile<'a, T> {
    powers: &'a [T],
    signals: &'a [T],
}

impl<T: Real> Profile<'_, T> {
    fn basis(&self, rate: T) -> Vec<T> {
        self.powers
            .iter()
            .map(|&p| {
                let s = (rate * p).sqrt().sinh();
                s * s
            })
            .collect()
    }

    /// Best amplitude for fixed `rate` and the resulting sum of squared residuals.
    fn at(&self, rate: T) -> (T, T) {
        let f = self.basis(rate);
        let num = f.iter().zip(self.signals).fold(T::zero(), |a, (&f, &s)| a + f * s);
        let den = f.iter().fold(T::zero(), |a, &f| a + f * f);
        let amp = num / den;
        let ssr = f.iter().zip(self.signals).fold(T::zero(), |a, (&f, &s)| {
            let r = s - amp * f;
            a + r * r
        });
        (amp, ssr)
    }
}

const GRID_POINTS: usize = 400;
const BRENT_MAX_ITER: usize = 200;

/// Least-squares fit of `S = A sinh^2(sqrt(B P))`.
///
/// `A` is profiled out in closed form for each `B`; `B` is located by a
/// log-spaced scan followed by Brent's method in `ln B`. The scan covers gains
/// `sqrt(B P)` from 1e-3 up to where `sinh^2` nears the top of the scalar range.
pub fn gain_fit<T: Real>(powers: &[T], signals: &[T]) -> Result<GainFit<T>, FitError> {
    if powers.len() != signals.len() {
        return Err(FitError::LengthMismatch(powers.len(), signals.len()));
    }
    if powers.len() < 3 {
        return Err(FitError::TooFewPoints(powers.len()));
    }
    if powers.iter().any(|&p| !(p > T::zero() && p.is_finite())) {
        return Err(FitError::NonPositivePower);
    }
    let p_min = powers.iter().copied().fold(T::infinity(), T::min);
    let p_max = powers.iter().copied().fold(T::neg_infinity(), T::max);
    let g_max = T::lit(0.45) * T::max_value().ln();
    let ln_lo = (T::lit(1e-6) / p_min).ln();
    let ln_hi = (g_max * g_max / p_max).ln();

    let profile = Profile { powers, signals };
    let objective = |ln_rate: T| profile.at(ln_rate.exp()).1;

    let step = (ln_hi - ln_lo) / T::from_count((GRID_POINTS - 1) as u64);
    let grid: Vec<T> = (0..GRID_POINTS).map(|k| ln_lo + step * T::from_count(k as u64)).collect();
    let values: Vec<T> = grid.iter().map(|&u| objective(u)).collect();
    let best = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite"))
        .map(|(k, _)| k)
        .unwrap_or(0);
    if best == 0 || best == GRID_POINTS - 1 {
        let n = T::from_count(powers.len() as u64);
        return Err(FitError::NotBracketed {
            rate: grid[best].exp().as_f64(),
            lo: ln_lo.exp().as_f64(),
            hi: ln_hi.exp().as_f64(),
            rms: (values[best] / n).sqrt().as_f64(),
        });
    }

    let (ln_rate, iterations) = brent(&objective, grid[best - 1], grid[best], grid[best + 1]);
    let rate = ln_rate.exp();
    let (amp, ssr) = profile.at(rate);
    if !(amp > T::zero()) {
        return Err(FitError::NonPositiveAmplitude(amp.as_f64()));
    }
    Ok(GainFit {
        amplitude_a: amp,
        rate_b: rate,
        residual_rms: (ssr / T::from_count(powers.len() as u64)).sqrt(),
        iterations,
    })
}

/// Brent's minimizer on a bracket `a < b < c` with `f(b) <= f(a), f(c)`.
fn brent<T: Real>(f: &impl Fn(T) -> T, a: T, b: T, c: T) -> (T, usize) {
    let golden = T::lit(0.381_966_011_250_105_1);
    let tol = T::epsilon().sqrt();
    let tiny = T::lit(1e-21);
    let two = T::lit(2.0);
    let half = T::lit(0.5);

    let (mut lo, mut hi) = (a, c);
    let (mut x, mut w, mut v) = (b, b, b);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d = T::zero();
    let mut e = T::zero();

    for iter in 0..BRENT_MAX_ITER {
        let mid = half * (lo + hi);
        let tol1 = tol * x.abs() + tiny;
        let tol2 = two * tol1;
        if (x - mid).abs() <= tol2 - half * (hi - lo) {
            return (x, iter);
        }
        let mut golden_step = true;
        if e.abs() > tol1 {
            // parabola through x, w, v
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = two * (q - r);
            if q > T::zero() {
                p = -p;
            }
            q = q.abs();
            let e_prev = e;
            if p.abs() < (half * q * e_prev).abs() && p > q * (lo - x) && p < q * (hi - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - lo < tol2 || hi - u < tol2 {
                    d = if mid >= x { tol1 } else { -tol1 };
                }
                golden_step = false;
            }
        }
        if golden_step {
            e = if x >= mid { lo - x } else { hi - x };
            d = golden * e;
        }
        let u = if d.abs() >= tol1 { x + d } else if d > T::zero() { x + tol1 } else { x - tol1 };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                lo = x;
            } else {
                hi = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                lo = u;
            } else {
                hi = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, BRENT_MAX_ITER)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_line() {
        let xs = [0.0f64, 1.0, 2.0, 3.0];
        let ys = [0.0f64, 2.0, 4.0, 6.0];
        let fit = linear_fit(&xs, &ys).unwrap();
        assert_relative_eq!(fit.slope, 2.0, max_relative = 1e-14);
        assert!(fit.intercept.abs() < 1e-14);
        assert!(fit.slope_stderr < 1e-14);
        let flat = linear_fit(&xs, &[3.0; 4]).unwrap();
        assert_eq!(flat.slope, 0.0);
        assert_eq!(flat.intercept, 3.0);
    }

    #[test]
    fn line_errors() {
        assert_eq!(linear_fit(&[1.0f64, 2.0], &[1.0, 2.0]), Err(FitError::TooFewPoints(2)));
        assert_eq!(linear_fit(&[1.0f64; 3], &[1.0, 2.0, 3.0]), Err(FitError::RankDeficient));
        assert_eq!(linear_fit(&[1.0f64, 2.0, 3.0], &[1.0, 2.0]), Err(FitError::LengthMismatch(3, 2)));
    }

    #[test]
    fn stderr_matches_textbook_example() {
        // y = 1 + 2x with residuals (+1, -1, -1, +1): SSR = 4, Sxx = 5
        let xs = [0.0f64, 1.0, 2.0, 3.0];
        let ys = [2.0f64, 2.0, 4.0, 8.0];
        let fit = linear_fit(&xs, &ys).unwrap();
        assert_relative_eq!(fit.slope, 2.0, max_relative = 1e-14);
        assert_relative_eq!(fit.intercept, 1.0, max_relative = 1e-14);
        assert_relative_eq!(fit.slope_stderr, (2.0f64 / 5.0).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(fit.intercept_stderr, (2.0f64 * (0.25 + 2.25 / 5.0)).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(fit.residual_rms, 1.0, max_relative = 1e-14);
    }

    fn synthetic(a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let powers: Vec<f64> = (12..=28).map(f64::from).collect();
        let signals = powers.iter().map(|&p| a * (b * p).sqrt().sinh().powi(2)).collect();
        (powers, signals)
    }

    #[test]
    fn forward_model_value() {
        let fit = GainFit { amplitude_a: 2.0f64, rate_b: 1.0, residual_rms: 0.0, iterations: 0 };
        assert_relative_eq!(fit.predict(16.0), 2.0 * 4.0f64.sinh().powi(2), max_relative = 1e-15);
        assert!((fit.predict(16.0) - 1489.48).abs() < 0.01);
    }

    #[test]
    fn noiseless_recovery() {
        let (p, s) = synthetic(2.0, 1.0);
        let fit = gain_fit(&p, &s).unwrap();
        assert_relative_eq!(fit.rate_b, 1.0, max_relative = 1e-6);
        assert_relative_eq!(fit.amplitude_a, 2.0, max_relative = 1e-6);
        let (p, s) = synthetic(0.3, 0.9);
        let fit = gain_fit(&p, &s).unwrap();
        assert_relative_eq!(fit.rate_b, 0.9, max_relative = 1e-6);
        assert_relative_eq!(fit.amplitude_a, 0.3, max_relative = 1e-6);
    }

    #[test]
    fn profiled_amplitude_is_optimal() {
        let (p, mut s) = synthetic(2.0, 1.0);
        for (k, v) in s.iter_mut().enumerate() {
            *v *= 1.0 + 0.003 * ((k as f64) * 1.7).sin();
        }
        let fit = gain_fit(&p, &s).unwrap();
        let rms = |a: f64| {
            let g = GainFit { amplitude_a: a, ..fit };
            (p.iter().zip(&s).map(|(&x, &y)| (y - g.predict(x)).powi(2)).sum::<f64>() / p.len() as f64).sqrt()
        };
        assert_relative_eq!(rms(fit.amplitude_a), fit.residual_rms, max_relative = 1e-9);
        assert!(rms(fit.amplitude_a * 1.01) > fit.residual_rms);
        assert!(rms(fit.amplitude_a * 0.99) > fit.residual_rms);
    }

    #[test]
    fn gain_range_of_operating_span() {
        let fit = GainFit { amplitude_a: 1.0f64, rate_b: 1.0, residual_rms: 0.0, iterations: 0 };
        let (lo, hi) = fit.gain_range(&[12.96, 20.0, 28.09]);
        assert_relative_eq!(lo, 3.6, max_relative = 1e-12);
        assert_relative_eq!(hi, 5.3, max_relative = 1e-12);
    }

    #[test]
    fn single_precision_fit() {
        let powers: Vec<f32> = (12..=28).map(|p| p as f32).collect();
        let signals: Vec<f32> = powers.iter().map(|&p| 2.0 * (p.sqrt()).sinh().powi(2)).collect();
        let fit = gain_fit(&powers, &signals).unwrap();
        assert!((fit.rate_b - 1.0).abs() < 1e-3);
    }

    #[test]
    fn fit_input_errors() {
        assert_eq!(gain_fit(&[1.0f64, 2.0], &[1.0, 2.0]), Err(FitError::TooFewPoints(2)));
        assert_eq!(gain_fit(&[1.0f64, 0.0, 2.0], &[1.0, 2.0, 3.0]), Err(FitError::NonPositivePower));
    }

    #[test]
    fn flat_data_is_not_bracketed() {
        // constant signal is best described by B -> 0
        let err = gain_fit(&[1.0f64, 2.0, 3.0, 4.0], &[5.0, 5.0, 5.0, 5.0]).unwrap_err();
        assert!(matches!(err, FitError::NotBracketed { .. }), "{err:?}");
    }
}
