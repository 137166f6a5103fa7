//! Relative entropy between continuous-time path measures and the reference chain that
//! realizes a prescribed flux at minimal path cost.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Capacity, Flux, ProbVector};
use crate::markov::RateKernel;
use crate::num::{stable_sum, Real};
use crate::quadrature::{simpson_with_error, UniformGrid};

/// Largest rate accepted by [`path_kl`] unless overridden.
pub const DEFAULT_RATE_CAP: f64 = 1e6;

/// `Ψ(r) = r log r - r + 1`, with `Ψ(0) = 1`.
pub fn psi<T: Real>(r: T) -> Result<T> {
    if !(r >= T::zero()) {
        return Err(Error::NegativeRate { value: r.as_f64() });
    }
    if r == T::zero() {
        return Ok(T::one());
    }
    Ok(r * r.ln() - r + T::one())
}

/// Minimal per-unit-capacity path cost of carrying the flux ratio `ρ = J/c` across an edge:
/// `ρ asinh(ρ/2) - 2√(1 + ρ²/4) + 2`. Even in `ρ` and bounded by `ρ²/4`.
pub fn edge_kl_cost<T: Real>(rho: T) -> T {
    let half = rho / T::of(2.0);
    let u = half * half;
    rho * half.asinh() - T::of(2.0) * u / ((T::one() + u).sqrt() + T::one())
}

/// Rate multipliers `(√(1+ρ²/4) + ρ/2, √(1+ρ²/4) - ρ/2)`; their product is one.
///
/// The smaller factor is formed as the reciprocal of the larger to avoid cancellation.
pub fn reference_multipliers<T: Real>(rho: T) -> (T, T) {
    let half = rho / T::of(2.0);
    let big = (T::one() + half * half).sqrt() + half.abs();
    let small = T::one() / big;
    if rho >= T::zero() {
        (big, small)
    } else {
        (small, big)
    }
}

/// Reference kernel `q*` whose forward Kolmogorov equation carries `flux` on top of `p`.
///
/// With `ρ = J(x, y) / c(x, y)`, `q*(x, y) = p(x, y) m₊(ρ)` and `q*(y, x) = p(y, x) m₋(ρ)`,
/// so `q*(x,y)/p(x,y) - q*(y,x)/p(y,x) = ρ`. Edges where `p` vanishes keep zero rates.
pub fn reference_kernel<T: Real>(p: &RateKernel<T>, capacity: &Capacity<T>, flux: &Flux<T>) -> Result<RateKernel<T>> {
    let g = p.graph();
    if capacity.graph().num_edges() != g.num_edges() || flux.graph().num_edges() != g.num_edges() {
        return Err(Error::DimensionMismatch { expected: g.num_edges(), found: flux.graph().num_edges() });
    }
    let mut forward = p.forward().to_vec();
    let mut backward = p.backward().to_vec();
    for (e, (&c, &j)) in capacity.weights().iter().zip(flux.values()).enumerate() {
        if j == T::zero() {
            continue;
        }
        if c == T::zero() {
            let (x, y) = g.edges()[e];
            return Err(Error::ZeroCapacityEdge { x, y });
        }
        let (up, down) = reference_multipliers(j / c);
        forward[e] *= up;
        backward[e] *= down;
    }
    RateKernel::new(g.clone(), forward, backward)
}

/// `Σ_x μ(x) Σ_{y≠x} q Ψ(p/q) = Σ_x μ(x) Σ_y [p log(p/q) - (p - q)]`.
pub fn rate_kl_density<T: Real>(mu: &[T], p: &RateKernel<T>, q: &RateKernel<T>) -> Result<T> {
    let g = p.graph();
    if q.graph().num_edges() != g.num_edges() || mu.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: g.len(), found: mu.len() });
    }
    let term = |a: T, b: T, x: usize, y: usize| -> Result<T> {
        if b == T::zero() {
            return if a == T::zero() { Ok(T::zero()) } else { Err(Error::SupportMismatch { x, y }) };
        }
        Ok(b * psi(a / b)?)
    };
    let mut terms = Vec::with_capacity(2 * g.num_edges());
    for (e, &(a, b)) in g.edges().iter().enumerate() {
        terms.push(mu[a] * term(p.forward()[e], q.forward()[e], a, b)?);
        terms.push(mu[b] * term(p.backward()[e], q.backward()[e], b, a)?);
    }
    Ok(stable_sum(terms))
}

#[derive(Debug, Clone, Serialize)]
pub struct PathKlReport<T> {
    /// `init_kl + ∫ density`.
    pub value: T,
    pub init_kl: T,
    pub integral: T,
    /// Simpson refinement estimate for the integral.
    pub error_estimate: T,
    pub grid: UniformGrid<T>,
}

/// `KL(P^p ‖ P^q)` of path measures on `[grid.start, grid.end]` sharing the initial
/// discrepancy `init_kl`. `mu_at` gives the time marginals of the `p`-chain.
pub fn path_kl<T: Real>(
    p_at: impl Fn(T) -> Result<RateKernel<T>> + Sync,
    q_at: impl Fn(T) -> Result<RateKernel<T>> + Sync,
    mu_at: impl Fn(T) -> Result<ProbVector<T>> + Sync,
    init_kl: T,
    grid: UniformGrid<T>,
) -> Result<PathKlReport<T>> {
    path_kl_with_cap(p_at, q_at, mu_at, init_kl, grid, T::of(DEFAULT_RATE_CAP))
}

pub fn path_kl_with_cap<T: Real>(
    p_at: impl Fn(T) -> Result<RateKernel<T>> + Sync,
    q_at: impl Fn(T) -> Result<RateKernel<T>> + Sync,
    mu_at: impl Fn(T) -> Result<ProbVector<T>> + Sync,
    init_kl: T,
    grid: UniformGrid<T>,
    rate_cap: T,
) -> Result<PathKlReport<T>> {
    if !(init_kl >= T::zero()) {
        return Err(Error::InvalidInput(format!("initial KL {init_kl} is negative")));
    }
    let samples = (0..grid.nodes)
        .into_par_iter()
        .map(|i| {
            let t = grid.point(i);
            let p = p_at(t)?;
            let q = q_at(t)?;
            for k in [&p, &q] {
                let r = k.max_rate();
                if r > rate_cap {
                    return Err(Error::RateCapExceeded { rate: r.as_f64(), cap: rate_cap.as_f64() });
                }
            }
            rate_kl_density(&mu_at(t)?, &p, &q)
        })
        .collect::<Result<Vec<T>>>()?;
    let (integral, error_estimate) = simpson_with_error(&samples, grid.step());
    Ok(PathKlReport { value: init_kl + integral, init_kl, integral, error_estimate, grid })
}

/// Discrete-time chain-rule KL with one-step matrices `I + Δt p_k` on a uniform time
/// lattice; converges to the path KL at first order in `Δt`.
pub fn discrete_path_kl<T: Real>(
    p_at: impl Fn(T) -> Result<RateKernel<T>>,
    q_at: impl Fn(T) -> Result<RateKernel<T>>,
    mu0: &ProbVector<T>,
    t_end: T,
    steps: usize,
) -> Result<T> {
    let dt = t_end / T::of_usize(steps.max(1));
    let mut mu = mu0.as_slice().to_vec();
    let mut total = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = dt * T::of_usize(k);
        let p = p_at(t)?;
        let q = q_at(t)?;
        let pd = p.to_dense();
        let qd = q.to_dense();
        let n = mu.len();
        let mut step_kl = T::zero();
        for x in 0..n {
            let mut row = T::zero();
            for y in 0..n {
                let delta = if x == y { T::one() } else { T::zero() };
                let a = delta + dt * pd[(x, y)];
                let b = delta + dt * qd[(x, y)];
                if a < T::zero() || b < T::zero() {
                    return Err(Error::InvalidInput(format!("time step {dt} too large for rates")));
                }
                if a == T::zero() {
                    continue;
                }
                if b == T::zero() {
                    return Err(Error::SupportMismatch { x, y });
                }
                row += a * (a / b).ln();
            }
            step_kl += mu[x] * row;
        }
        total.push(step_kl);
        let flow = p.left_apply(&mu);
        for (m, f) in mu.iter_mut().zip(flow) {
            *m += dt * f;
        }
    }
    Ok(stable_sum(total))
}
