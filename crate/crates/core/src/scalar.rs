//! Scalar abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps, NumCast};

/// Real scalar the series, closed forms and exact tables are evaluated in.
pub trait Real:
    Float + FromPrimitive + NumCast + NumAssignOps + Debug + Display + Default + Send + Sync + 'static
{
    /// Threshold above which running sums are rescaled to avoid overflow.
    const RESCALE_AT: f64;

    fn lit(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("literal representable in scalar type")
    }

    fn from_count(n: u64) -> Self {
        <Self as NumCast>::from(n).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    const RESCALE_AT: f64 = 1e30;
}

impl Real for f64 {
    const RESCALE_AT: f64 = 1e200;
}

/// Kahan-Babuska (Neumaier) compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    carry: T,
}

impl<T: Real> CompensatedSum<T> {
    pub fn new() -> Self {
        Self { sum: T::zero(), carry: T::zero() }
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.carry
    }

    pub fn scale(&mut self, factor: T) {
        self.sum *= factor;
        self.carry *= factor;
    }
}
