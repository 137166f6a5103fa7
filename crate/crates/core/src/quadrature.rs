//! Uniform grids and composite Simpson quadrature with a halving error estimate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::Real;

/// Default node count for curve quadratures.
pub const DEFAULT_NODES: usize = 201;

/// `nodes` equally spaced points on `[start, end]`; `nodes` is odd and at least 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformGrid<T> {
    pub start: T,
    pub end: T,
    pub nodes: usize,
}

impl<T: Real> UniformGrid<T> {
    pub fn new(start: T, end: T, nodes: usize) -> Result<Self> {
        if nodes < 3 || nodes.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!("Simpson grid needs an odd node count >= 3, got {nodes}")));
        }
        if !(end >= start) || !start.is_finite() || !end.is_finite() {
            return Err(Error::InvalidInput(format!("grid interval [{start}, {end}] is invalid")));
        }
        Ok(Self { start, end, nodes })
    }

    pub fn unit(nodes: usize) -> Result<Self> {
        Self::new(T::zero(), T::one(), nodes)
    }

    pub fn step(&self) -> T {
        (self.end - self.start) / T::of_usize(self.nodes - 1)
    }

    pub fn point(&self, i: usize) -> T {
        if i + 1 == self.nodes {
            self.end
        } else {
            self.start + self.step() * T::of_usize(i)
        }
    }

    pub fn points(&self) -> Vec<T> {
        (0..self.nodes).map(|i| self.point(i)).collect()
    }
}

/// Composite Simpson value of equally spaced samples with spacing `h`.
pub fn simpson<T: Real>(samples: &[T], h: T) -> T {
    let n = samples.len();
    assert!(n >= 3 && n % 2 == 1, "Simpson needs an odd sample count >= 3");
    let mut odd = T::zero();
    let mut even = T::zero();
    for (i, &v) in samples.iter().enumerate().take(n - 1).skip(1) {
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / T::of(3.0) * (samples[0] + samples[n - 1] + T::of(4.0) * odd + T::of(2.0) * even)
}

/// Simpson value plus a refinement error estimate from the half-resolution rule.
///
/// With `(nodes - 1) % 4 == 0` the estimate is the Richardson difference `|S_h - S_2h| / 15`;
/// otherwise it falls back to the difference against the trapezoid rule.
pub fn simpson_with_error<T: Real>(samples: &[T], h: T) -> (T, T) {
    let fine = simpson(samples, h);
    let n = samples.len();
    let err = if (n - 1).is_multiple_of(4) && n >= 5 {
        let coarse: Vec<T> = samples.iter().step_by(2).copied().collect();
        (fine - simpson(&coarse, h + h)).abs() / T::of(15.0)
    } else {
        let trap = h * (samples.iter().copied().sum::<T>() - (samples[0] + samples[n - 1]) / T::of(2.0));
        (fine - trap).abs()
    };
    (fine, err)
}
