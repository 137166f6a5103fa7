//! Inverse-temperature schedules `s ↦ β(s)` on `[0, 1]`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleKind {
    LinearUp,
    LinearDown,
    Custom,
}

type ScalarFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// `β(s)` with its derivative. Linear schedules are stored by endpoints; custom ones by
/// evaluator pairs.
#[derive(Clone)]
pub struct Schedule<T> {
    kind: ScheduleKind,
    start: T,
    end: T,
    custom: Option<(ScalarFn<T>, ScalarFn<T>)>,
}

impl<T: Real> fmt::Debug for Schedule<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Schedule").field("kind", &self.kind).field("start", &self.start).field("end", &self.end).finish()
    }
}

impl<T: Real> Schedule<T> {
    /// `β(s) = start + (end - start) s`.
    pub fn linear(start: T, end: T) -> Result<Self> {
        if !(start >= T::zero() && end >= T::zero()) || !start.is_finite() || !end.is_finite() {
            return Err(Error::InvalidInput(format!("schedule endpoints ({start}, {end}) must be finite and >= 0")));
        }
        let kind = if end >= start { ScheduleKind::LinearUp } else { ScheduleKind::LinearDown };
        Ok(Self { kind, start, end, custom: None })
    }

    /// `β(s) = β s`.
    pub fn heating(beta: T) -> Result<Self> {
        Self::linear(T::zero(), beta)
    }

    /// Constant `β`.
    pub fn constant(beta: T) -> Result<Self> {
        Self::linear(beta, beta)
    }

    /// Custom schedule; `beta` must be nonnegative on `[0, 1]` and `beta_prime` its derivative.
    pub fn custom(beta: impl Fn(T) -> T + Send + Sync + 'static, beta_prime: impl Fn(T) -> T + Send + Sync + 'static) -> Result<Self> {
        let start = beta(T::zero());
        let end = beta(T::one());
        let s = Self { kind: ScheduleKind::Custom, start, end, custom: Some((Arc::new(beta), Arc::new(beta_prime))) };
        for i in 0..=64 {
            let v = s.beta(T::of_usize(i) / T::of(64.0));
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::InvalidInput(format!("custom schedule takes value {v}")));
            }
        }
        Ok(s)
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn start(&self) -> T {
        self.start
    }

    pub fn end(&self) -> T {
        self.end
    }

    pub fn beta(&self, s: T) -> T {
        match &self.custom {
            Some((b, _)) => b(s),
            None => self.start + (self.end - self.start) * s,
        }
    }

    pub fn beta_prime(&self, s: T) -> T {
        match &self.custom {
            Some((_, d)) => d(s),
            None => self.end - self.start,
        }
    }

    /// `max |β'|` on `probes` equally spaced points (exact for linear schedules).
    pub fn max_abs_beta_prime(&self, probes: usize) -> T {
        if self.custom.is_none() {
            return (self.end - self.start).abs();
        }
        let k = probes.max(2);
        (0..k).map(|i| self.beta_prime(T::of_usize(i) / T::of_usize(k - 1)).abs()).fold(T::zero(), T::max)
    }

    /// Largest gap between `β'` and a central difference of `β` over interior probe points.
    pub fn derivative_gap(&self, probes: usize, h: T) -> T {
        let k = probes.max(3);
        (1..k - 1)
            .map(|i| {
                let s = T::of_usize(i) / T::of_usize(k - 1);
                let fd = (self.beta(s + h) - self.beta(s - h)) / (h + h);
                (fd - self.beta_prime(s)).abs()
            })
            .fold(T::zero(), T::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_kinds_and_values() {
        let up = Schedule::heating(2.0f64).unwrap();
        assert_eq!(up.kind(), ScheduleKind::LinearUp);
        assert_eq!(up.beta(0.25), 0.5);
        assert_eq!(up.beta_prime(0.9), 2.0);
        let down = Schedule::linear(5.0f64, 1.5).unwrap();
        assert_eq!(down.kind(), ScheduleKind::LinearDown);
        assert_eq!(down.beta(1.0), 1.5);
        assert!(Schedule::linear(-1.0f64, 1.0).is_err());
    }

    #[test]
    fn custom_derivative_is_consistent() {
        let s = Schedule::custom(|s: f64| 1.0 + s * s, |s: f64| 2.0 * s).unwrap();
        assert!(s.derivative_gap(11, 1e-5) < 1e-8);
        assert!((s.max_abs_beta_prime(101) - 2.0).abs() < 1e-12);
    }
}
