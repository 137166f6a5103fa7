//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar accepted by the library (`f32` or `f64`).
///
/// Tolerances quoted throughout the crate (1e-10, 1e-12) are calibrated for `f64`;
/// routines that compare against them scale by [`Real::tolerance_floor`] so `f32`
/// callers get a precision-appropriate bound instead of a guaranteed failure.
pub trait Real: Float + FloatConst + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Converts an `f64` literal. Panics only for values not representable at all.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Converts a count.
    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `max(tol, 1e4 * epsilon)`: lifts an `f64`-calibrated tolerance for low precision types.
    #[inline]
    fn tolerance_floor(tol: f64) -> Self {
        let eps = Self::epsilon() * Self::of(1e4);
        let t = Self::of(tol);
        if t > eps {
            t
        } else {
            eps
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `log(Σ exp(x_i))` without overflow. Returns `-inf` on empty input.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let s: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Normalizes log-weights into probabilities via log-sum-exp.
pub fn softmax<T: Real>(log_weights: &[T]) -> Vec<T> {
    let lse = log_sum_exp(log_weights);
    log_weights.iter().map(|&x| (x - lse).exp()).collect()
}

/// Neumaier-compensated sum in fixed iteration order.
pub fn stable_sum<T: Real>(xs: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut c = T::zero();
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}
