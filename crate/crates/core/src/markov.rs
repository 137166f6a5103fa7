//! Continuous-time Markov chains on a [`StateGraph`]: rate kernels, reversibility,
//! Dirichlet forms, exact Fokker–Planck evolution, divergences, and the Poincaré,
//! modified log-Sobolev and canonical-path constants.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Capacity, ProbVector, StateGraph};
use crate::linalg::{expm, symmetric_eigenvalues, DenseMatrix};
use crate::num::{stable_sum, Real};

/// Relative detailed-balance tolerance.
pub const DETAILED_BALANCE_RTOL: f64 = 1e-10;
/// Absolute floor for the detailed-balance comparison.
pub const DETAILED_BALANCE_ATOL: f64 = 1e-14;
/// Row-sum tolerance for stochastic matrices.
pub const STOCHASTIC_TOLERANCE: f64 = 1e-10;

/// Transition-rate kernel supported on the edges of a graph.
///
/// Off-diagonal rates are stored per canonical edge in both directions; the diagonal is
/// always `-exit(x)`, so row sums vanish by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RateKernel<T> {
    graph: Arc<StateGraph>,
    forward: Vec<T>,
    backward: Vec<T>,
}

impl<T: Real> RateKernel<T> {
    /// `forward[e] = p(lo, hi)`, `backward[e] = p(hi, lo)` for canonical edge `e = (lo, hi)`.
    pub fn new(graph: Arc<StateGraph>, forward: Vec<T>, backward: Vec<T>) -> Result<Self> {
        let m = graph.num_edges();
        if forward.len() != m || backward.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: forward.len().min(backward.len()) });
        }
        for (e, (&f, &b)) in forward.iter().zip(&backward).enumerate() {
            if !(f >= T::zero() && b >= T::zero()) || !f.is_finite() || !b.is_finite() {
                return Err(Error::InvalidInput(format!("rates on edge {e} are ({f}, {b})")));
            }
        }
        Ok(Self { graph, forward, backward })
    }

    pub fn from_fn(graph: Arc<StateGraph>, rate: impl Fn(usize, usize) -> T) -> Result<Self> {
        let forward = graph.edges().iter().map(|&(a, b)| rate(a, b)).collect();
        let backward = graph.edges().iter().map(|&(a, b)| rate(b, a)).collect();
        Self::new(graph, forward, backward)
    }

    /// Reads a dense generator. Off-support entries must vanish and rows must sum to zero
    /// within `1e-12` relative to the largest exit rate.
    pub fn from_dense(graph: Arc<StateGraph>, m: &DenseMatrix<T>) -> Result<Self> {
        let n = graph.len();
        if m.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: m.dim() });
        }
        for x in 0..n {
            for y in 0..n {
                if x != y && m[(x, y)] != T::zero() && graph.edge_index(x, y).is_none() {
                    return Err(Error::InvalidInput(format!("rate ({x}, {y}) lies off the graph")));
                }
            }
            let sum = stable_sum(m.row(x).iter().copied());
            let scale = m[(x, x)].abs().max(T::one());
            if sum.abs() > T::tolerance_floor(1e-12) * scale {
                return Err(Error::InvalidInput(format!("generator row {x} sums to {sum}")));
            }
        }
        Self::from_fn(graph, |x, y| m[(x, y)])
    }

    /// `p = P - I` for a stochastic matrix `P` supported on the graph plus diagonal.
    pub fn from_transition(graph: Arc<StateGraph>, p: &DenseMatrix<T>) -> Result<Self> {
        let n = graph.len();
        if p.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: p.dim() });
        }
        for x in 0..n {
            let sum = stable_sum(p.row(x).iter().copied());
            if (sum - T::one()).abs() > T::tolerance_floor(STOCHASTIC_TOLERANCE) || p.row(x).iter().any(|&v| v < T::zero()) {
                return Err(Error::NonStochasticRow { row: x, sum: sum.as_f64() });
            }
            for y in 0..n {
                if x != y && p[(x, y)] != T::zero() && graph.edge_index(x, y).is_none() {
                    return Err(Error::InvalidInput(format!("transition ({x}, {y}) lies off the graph")));
                }
            }
        }
        Self::from_fn(graph, |x, y| p[(x, y)])
    }

    /// Birth–death style kernel `p(x, y) = c(x, y) / π(x)`, reversible by construction.
    pub fn from_capacity(capacity: &Capacity<T>, pi: &ProbVector<T>) -> Result<Self> {
        let g = capacity.graph().clone();
        if pi.len() != g.len() {
            return Err(Error::DimensionMismatch { expected: g.len(), found: pi.len() });
        }
        let forward = g.edges().iter().zip(capacity.weights()).map(|(&(a, _), &c)| c / pi[a]).collect();
        let backward = g.edges().iter().zip(capacity.weights()).map(|(&(_, b), &c)| c / pi[b]).collect();
        Self::new(g, forward, backward)
    }

    pub fn graph(&self) -> &Arc<StateGraph> {
        &self.graph
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn forward(&self) -> &[T] {
        &self.forward
    }

    pub fn backward(&self) -> &[T] {
        &self.backward
    }

    /// `p(x, y)`; the diagonal is `-exit(x)`.
    pub fn rate(&self, x: usize, y: usize) -> T {
        if x == y {
            return -self.exit_rate(x);
        }
        match self.graph.edge_index(x, y) {
            Some(e) if x < y => self.forward[e],
            Some(e) => self.backward[e],
            None => T::zero(),
        }
    }

    /// Rate along edge `e` leaving `from`.
    #[inline]
    pub fn rate_on_edge(&self, e: usize, from: usize) -> T {
        if self.graph.edges()[e].0 == from {
            self.forward[e]
        } else {
            self.backward[e]
        }
    }

    pub fn exit_rate(&self, x: usize) -> T {
        stable_sum(self.graph.neighbors(x).iter().map(|&(_, e)| self.rate_on_edge(e, x)))
    }

    pub fn exit_rates(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        for (e, &(a, b)) in self.graph.edges().iter().enumerate() {
            out[a] += self.forward[e];
            out[b] += self.backward[e];
        }
        out
    }

    pub fn max_exit_rate(&self) -> T {
        self.exit_rates().into_iter().fold(T::zero(), T::max)
    }

    /// Largest off-diagonal rate.
    pub fn max_rate(&self) -> T {
        self.forward.iter().chain(&self.backward).copied().fold(T::zero(), T::max)
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut m = DenseMatrix::zeros(self.len());
        for (e, &(a, b)) in self.graph.edges().iter().enumerate() {
            m[(a, b)] = self.forward[e];
            m[(b, a)] = self.backward[e];
        }
        for (x, ex) in self.exit_rates().into_iter().enumerate() {
            m[(x, x)] = -ex;
        }
        m
    }

    /// Row vector times kernel, `(v p)(y) = Σ_x v(x) p(x, y)`.
    pub fn left_apply(&self, v: &[T]) -> Vec<T> {
        let exits = self.exit_rates();
        let mut out: Vec<T> = v.iter().zip(&exits).map(|(&a, &e)| -a * e).collect();
        for (e, &(a, b)) in self.graph.edges().iter().enumerate() {
            out[b] += v[a] * self.forward[e];
            out[a] += v[b] * self.backward[e];
        }
        out
    }

    /// Generator on functions, `(L f)(x) = Σ_y p(x, y) (f(y) - f(x))`.
    pub fn generator_apply(&self, f: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.len()];
        for (e, &(a, b)) in self.graph.edges().iter().enumerate() {
            let d = f[b] - f[a];
            out[a] += self.forward[e] * d;
            out[b] -= self.backward[e] * d;
        }
        out
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            graph: self.graph.clone(),
            forward: self.forward.iter().map(|&r| r * s).collect(),
            backward: self.backward.iter().map(|&r| r * s).collect(),
        }
    }
}

/// Capacity `c(x, y) = π(x) p(x, y)`, checked for detailed balance on every edge.
pub fn capacity_from_kernel<T: Real>(kernel: &RateKernel<T>, pi: &ProbVector<T>) -> Result<Capacity<T>> {
    let g = kernel.graph();
    if pi.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: g.len(), found: pi.len() });
    }
    let rtol = T::tolerance_floor(DETAILED_BALANCE_RTOL);
    let atol = T::of(DETAILED_BALANCE_ATOL);
    let mut worst: Option<(usize, T)> = None;
    let mut weights = Vec::with_capacity(g.num_edges());
    for (e, &(a, b)) in g.edges().iter().enumerate() {
        let u = pi[a] * kernel.forward[e];
        let v = pi[b] * kernel.backward[e];
        let big = u.max(v);
        let diff = (u - v).abs();
        if diff > (rtol * big).max(atol) {
            let rel = diff / big;
            if worst.is_none_or(|(_, w)| rel > w) {
                worst = Some((e, rel));
            }
        }
        weights.push(u);
    }
    if let Some((e, rel)) = worst {
        let (x, y) = g.edges()[e];
        return Err(Error::NotReversible { x, y, violation: rel.as_f64() });
    }
    Capacity::new(g.clone(), weights)
}

/// Kernel, stationary law and capacity of a reversible chain.
#[derive(Debug, Clone)]
pub struct ReversiblePair<T> {
    kernel: RateKernel<T>,
    stationary: ProbVector<T>,
    capacity: Capacity<T>,
}

impl<T: Real> ReversiblePair<T> {
    pub fn new(kernel: RateKernel<T>, stationary: ProbVector<T>) -> Result<Self> {
        let capacity = capacity_from_kernel(&kernel, &stationary)?;
        Ok(Self { kernel, stationary, capacity })
    }

    /// Pair whose kernel is `c / π`.
    pub fn from_capacity(capacity: Capacity<T>, stationary: ProbVector<T>) -> Result<Self> {
        let kernel = RateKernel::from_capacity(&capacity, &stationary)?;
        Ok(Self { kernel, stationary, capacity })
    }

    pub fn kernel(&self) -> &RateKernel<T> {
        &self.kernel
    }

    pub fn stationary(&self) -> &ProbVector<T> {
        &self.stationary
    }

    pub fn capacity(&self) -> &Capacity<T> {
        &self.capacity
    }
}

/// `E(f, g) = ½ Σ_{x,y} (f(y) - f(x)) (g(y) - g(x)) c(x, y)`.
pub fn dirichlet_form<T: Real>(capacity: &Capacity<T>, f: &[T], g: &[T]) -> T {
    let graph = capacity.graph();
    stable_sum(graph.edges().iter().zip(capacity.weights()).map(|(&(a, b), &c)| (f[b] - f[a]) * (g[b] - g[a]) * c))
}

/// Method used for the per-piece exponential action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExpmMethod {
    /// Dense scaling-and-squaring with a degree-13 Padé approximant.
    Pade13,
    /// Poisson randomization of `I + p/λ` (sparse, nonnegative terms, tail below 1e-17).
    Uniformization,
}

/// Final marginal of a Fokker–Planck evolution.
#[derive(Debug, Clone, Serialize)]
pub struct Evolution<T> {
    pub marginal: ProbVector<T>,
    /// `|Σ μ_T - 1|` before the final renormalization.
    pub mass_drift: T,
    pub max_squarings: u32,
}

/// `∂_t μ = μ p_t` over a piecewise-constant schedule of `(duration, kernel)` pieces,
/// using Padé-13 exponentials.
pub fn evolve_fokker_planck<T: Real>(mu0: &ProbVector<T>, pieces: &[(T, RateKernel<T>)]) -> Result<Evolution<T>> {
    evolve_with(mu0, pieces, ExpmMethod::Pade13)
}

pub fn evolve_with<T: Real>(mu0: &ProbVector<T>, pieces: &[(T, RateKernel<T>)], method: ExpmMethod) -> Result<Evolution<T>> {
    let mut v = mu0.as_slice().to_vec();
    let mut max_squarings = 0;
    for (dt, kernel) in pieces {
        if kernel.len() != v.len() {
            return Err(Error::DimensionMismatch { expected: v.len(), found: kernel.len() });
        }
        if !(*dt >= T::zero()) {
            return Err(Error::InvalidInput(format!("negative piece duration {dt}")));
        }
        if *dt == T::zero() {
            continue;
        }
        v = match method {
            ExpmMethod::Pade13 => {
                let e = expm(&kernel.to_dense().scale(*dt))?;
                max_squarings = max_squarings.max(e.squarings);
                e.value.left_mul(&v)
            }
            ExpmMethod::Uniformization => propagate_uniformized(&v, kernel, *dt),
        };
    }
    finish_evolution(v, max_squarings)
}

fn finish_evolution<T: Real>(v: Vec<T>, max_squarings: u32) -> Result<Evolution<T>> {
    let sum = stable_sum(v.iter().copied());
    let mass_drift = (sum - T::one()).abs();
    let marginal = ProbVector::normalize(v)?;
    Ok(Evolution { marginal, mass_drift, max_squarings })
}

const UNIFORMIZATION_CHUNK: f64 = 30.0;
const UNIFORMIZATION_TAIL: f64 = 1e-17;

/// `v · exp(dt p)` by uniformization: `Σ_k Pois(λ dt; k) v (I + p/λ)^k` with `λ` the
/// largest exit rate. All terms are nonnegative for nonnegative `v`.
pub fn propagate_uniformized<T: Real>(v: &[T], kernel: &RateKernel<T>, dt: T) -> Vec<T> {
    let exits = kernel.exit_rates();
    let lambda = exits.iter().copied().fold(T::zero(), T::max);
    if lambda == T::zero() || dt == T::zero() {
        return v.to_vec();
    }
    let total = lambda * dt;
    let chunks = (total / T::of(UNIFORMIZATION_CHUNK)).ceil().max(T::one()).to_usize().unwrap_or(1);
    let big = total / T::of_usize(chunks);
    let inv = T::one() / lambda;
    let stay: Vec<T> = exits.iter().map(|&e| T::one() - e * inv).collect();
    let g = kernel.graph();
    let mut cur = v.to_vec();
    let mut next = vec![T::zero(); v.len()];
    for _ in 0..chunks {
        let mut term = cur.clone();
        let mut weight = (-big).exp();
        let mut out: Vec<T> = term.iter().map(|&t| t * weight).collect();
        let mut j = 0usize;
        loop {
            j += 1;
            for ((n, &t), &s) in next.iter_mut().zip(&term).zip(&stay) {
                *n = t * s;
            }
            for (e, &(a, b)) in g.edges().iter().enumerate() {
                next[b] += term[a] * kernel.forward[e] * inv;
                next[a] += term[b] * kernel.backward[e] * inv;
            }
            std::mem::swap(&mut term, &mut next);
            weight = weight * big / T::of_usize(j);
            for (o, &t) in out.iter_mut().zip(&term) {
                *o += weight * t;
            }
            let jp1 = T::of_usize(j + 1);
            if jp1 > big + T::one() && weight * big / (jp1 - big) < T::of(UNIFORMIZATION_TAIL) {
                break;
            }
            if j > 100_000 {
                break;
            }
        }
        cur = out;
    }
    cur
}

/// Classical RK4 for `∂_t μ = μ p_t` with a smoothly time-varying kernel.
pub fn integrate_time_varying<T: Real>(
    mu0: &[T],
    kernel_at: impl Fn(T) -> Result<RateKernel<T>>,
    t0: T,
    t1: T,
    steps: usize,
) -> Result<Vec<T>> {
    if steps == 0 {
        return Err(Error::InvalidInput("at least one RK4 step required".into()));
    }
    let h = (t1 - t0) / T::of_usize(steps);
    let half = h / T::of(2.0);
    let mut mu = mu0.to_vec();
    let mut k_start = kernel_at(t0)?;
    for i in 0..steps {
        let t = t0 + h * T::of_usize(i);
        let k_mid = kernel_at(t + half)?;
        let k_end = kernel_at(if i + 1 == steps { t1 } else { t + h })?;
        let axpy = |a: &[T], s: T, b: &[T]| a.iter().zip(b).map(|(&x, &y)| x + s * y).collect::<Vec<T>>();
        let d1 = k_start.left_apply(&mu);
        let d2 = k_mid.left_apply(&axpy(&mu, half, &d1));
        let d3 = k_mid.left_apply(&axpy(&mu, half, &d2));
        let d4 = k_end.left_apply(&axpy(&mu, h, &d3));
        let sixth = h / T::of(6.0);
        for (j, m) in mu.iter_mut().enumerate() {
            *m += sixth * (d1[j] + T::of(2.0) * (d2[j] + d3[j]) + d4[j]);
        }
        k_start = k_end;
    }
    Ok(mu)
}

fn check_pair<T: Real>(mu: &[T], nu: &[T]) -> Result<()> {
    if mu.len() != nu.len() {
        return Err(Error::DimensionMismatch { expected: mu.len(), found: nu.len() });
    }
    if let Some(i) = mu.iter().chain(nu).position(|&v| !(v >= T::zero())) {
        return Err(Error::InvalidInput(format!("negative or NaN mass at position {i}")));
    }
    Ok(())
}

/// `KL(μ‖ν) = Σ μ log(μ/ν)`, summed as nonnegative terms `μ log(μ/ν) - μ + ν`.
///
/// Boundary measures (zeros in `μ`) are accepted; a zero of `ν` under positive `μ` is an error.
pub fn kl<T: Real>(mu: &[T], nu: &[T]) -> Result<T> {
    check_pair(mu, nu)?;
    let mut terms = Vec::with_capacity(mu.len());
    for (i, (&m, &n)) in mu.iter().zip(nu).enumerate() {
        if m == T::zero() {
            terms.push(n);
        } else if n == T::zero() {
            return Err(Error::AbsoluteContinuity { state: i });
        } else {
            terms.push(m * (m / n).ln() - m + n);
        }
    }
    Ok(stable_sum(terms))
}

/// `χ²(μ‖ν) = Σ (μ - ν)² / ν`.
pub fn chi2<T: Real>(mu: &[T], nu: &[T]) -> Result<T> {
    check_pair(mu, nu)?;
    let mut terms = Vec::with_capacity(mu.len());
    for (i, (&m, &n)) in mu.iter().zip(nu).enumerate() {
        if n == T::zero() {
            if m != T::zero() {
                return Err(Error::AbsoluteContinuity { state: i });
            }
            continue;
        }
        terms.push((m - n) * (m - n) / n);
    }
    Ok(stable_sum(terms))
}

/// `Var_π[f]`.
pub fn variance_functional<T: Real>(pi: &[T], f: &[T]) -> T {
    let mean = stable_sum(pi.iter().zip(f).map(|(&p, &v)| p * v));
    stable_sum(pi.iter().zip(f).map(|(&p, &v)| p * (v - mean) * (v - mean)))
}

/// `Ent_π[f] = E[f log f] - E[f] log E[f]` for `f ≥ 0`, summed as nonnegative terms.
pub fn entropy_functional<T: Real>(pi: &[T], f: &[T]) -> T {
    let mean = stable_sum(pi.iter().zip(f).map(|(&p, &v)| p * v));
    if mean == T::zero() {
        return T::zero();
    }
    stable_sum(pi.iter().zip(f).map(|(&p, &v)| if v == T::zero() { p * mean } else { p * (v * (v / mean).ln() - v + mean) }))
}

/// Exact Poincaré constant `1 / gap` of the reversible pair.
///
/// The gap is the smallest nonzero eigenvalue of `Π^{-1/2} L_c Π^{-1/2}`; the null
/// direction `√π` is shifted out explicitly before the symmetric eigen-solve.
pub fn poincare_constant<T: Real>(pair: &ReversiblePair<T>) -> Result<T> {
    let cap = pair.capacity();
    let pi = pair.stationary();
    let g = cap.graph();
    let n = g.len();
    if !cap.is_connected() {
        return Err(Error::DisconnectedCapacity);
    }
    if n == 1 {
        return Ok(T::zero());
    }
    let root: Vec<T> = pi.iter().map(|p| p.sqrt()).collect();
    let mut s = DenseMatrix::zeros(n);
    for (&(a, b), &c) in g.edges().iter().zip(cap.weights()) {
        s[(a, a)] += c / pi[a];
        s[(b, b)] += c / pi[b];
        let off = c / (root[a] * root[b]);
        s[(a, b)] -= off;
        s[(b, a)] -= off;
    }
    let trace: T = (0..n).map(|i| s[(i, i)]).sum();
    let shift = trace + T::one();
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] += shift * root[i] * root[j];
        }
    }
    let gap = symmetric_eigenvalues(&s)[0];
    if !(gap > T::zero()) {
        return Err(Error::DisconnectedCapacity);
    }
    Ok(T::one() / gap)
}

/// How [`mlsi_constant`] explores positive functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum MlsiMode {
    /// Dense simplex grid (`|Ω| ≤ 4`) with `resolution` points per dimension, plus a
    /// comparison at half resolution and a local polish.
    Grid { resolution: usize },
    /// Multiplicative-perturbation hill climbing from random starts; a lower bound.
    Ascent { restarts: usize, iterations: usize, seed: u64 },
}

impl Default for MlsiMode {
    fn default() -> Self {
        MlsiMode::Grid { resolution: 400 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MlsiEstimate<T> {
    /// Supremum estimate of `Ent_π[f] / E(log f, f)`.
    pub value: T,
    /// `|sup(resolution) - sup(resolution / 2)|` in grid mode, zero for ascent.
    pub refinement_error: T,
    /// True for grid mode on spaces with at most four states.
    pub certified: bool,
    /// Best positive function found, normalized to sum one.
    pub maximizer: Vec<T>,
}

/// Functions closer than this (relative sup-distance from their mean) to a constant are
/// skipped: both sides of the ratio vanish quadratically there and rounding dominates. The
/// limit along the diagonal is `C_PI / 2`, which grid mode adds analytically.
pub const MLSI_DIAGONAL_EXCLUSION: f64 = 1e-3;

fn mlsi_ratio<T: Real>(pi: &[T], cap: &Capacity<T>, f: &[T]) -> Option<T> {
    let mean = stable_sum(pi.iter().zip(f).map(|(&p, &v)| p * v));
    let spread = f.iter().fold(T::zero(), |m, &v| m.max((v - mean).abs()));
    if !(spread > T::of(MLSI_DIAGONAL_EXCLUSION) * mean) {
        return None;
    }
    let g = cap.graph();
    let mut den = T::zero();
    for (&(a, b), &c) in g.edges().iter().zip(cap.weights()) {
        den += c * (f[b].ln() - f[a].ln()) * (f[b] - f[a]);
    }
    if !(den > T::zero()) {
        return None;
    }
    let ent = entropy_functional(pi, f);
    let r = ent / den;
    r.is_finite().then_some(r)
}

fn grid_search<T: Real>(pi: &[T], cap: &Capacity<T>, resolution: usize) -> (T, Vec<T>) {
    let k = pi.len();
    let mut best = T::zero();
    let mut arg = vec![T::one() / T::of_usize(k); k];
    let r = T::of_usize(resolution);
    let mut idx = vec![1usize; k];
    let mut f = vec![T::zero(); k];
    // Enumerate compositions of `resolution` into `k` positive parts.
    #[allow(clippy::too_many_arguments)]
    fn rec<T: Real>(
        pos: usize,
        remaining: usize,
        idx: &mut Vec<usize>,
        f: &mut Vec<T>,
        r: T,
        pi: &[T],
        cap: &Capacity<T>,
        best: &mut T,
        arg: &mut Vec<T>,
    ) {
        let k = idx.len();
        if pos + 1 == k {
            idx[pos] = remaining;
            for (fi, &i) in f.iter_mut().zip(idx.iter()) {
                *fi = T::of_usize(i) / r;
            }
            if let Some(v) = mlsi_ratio(pi, cap, f) {
                if v > *best {
                    *best = v;
                    arg.clone_from(f);
                }
            }
            return;
        }
        let slots_after = k - pos - 1;
        for i in 1..=remaining - slots_after {
            idx[pos] = i;
            rec(pos + 1, remaining - i, idx, f, r, pi, cap, best, arg);
        }
    }
    if k == 1 {
        return (T::zero(), arg);
    }
    rec(0, resolution, &mut idx, &mut f, r, pi, cap, &mut best, &mut arg);
    (best, arg)
}

fn polish<T: Real>(pi: &[T], cap: &Capacity<T>, start: Vec<T>, best: T, initial_step: T) -> (T, Vec<T>) {
    let k = start.len();
    let mut f = start;
    let mut best = best;
    let mut step = initial_step;
    let floor = T::of(1e-9);
    while step > floor {
        let mut improved = false;
        for i in 0..k {
            for dir in [T::one(), -T::one()] {
                let mut cand = f.clone();
                cand[i] *= (dir * step).exp();
                if let Some(v) = mlsi_ratio(pi, cap, &cand) {
                    if v > best {
                        best = v;
                        f = cand;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            step /= T::of(2.0);
        }
    }
    let s: T = f.iter().copied().sum();
    (best, f.into_iter().map(|v| v / s).collect())
}

/// Estimates `C_MLSI = sup_f Ent_π[f] / E(log f, f)` over positive non-constant `f`.
///
/// Grid mode returns at least `C_PI / 2`, the exact limit of the ratio at constant `f`.
pub fn mlsi_constant<T: Real>(pair: &ReversiblePair<T>, mode: MlsiMode) -> Result<MlsiEstimate<T>> {
    let pi = pair.stationary().as_slice();
    let cap = pair.capacity();
    let k = pi.len();
    match mode {
        MlsiMode::Grid { resolution } => {
            if k > 4 {
                return Err(Error::TooLargeForGrid { states: k });
            }
            if resolution < 2 * k {
                return Err(Error::InvalidInput(format!("grid resolution {resolution} too small")));
            }
            let (fine, arg) = grid_search(pi, cap, resolution);
            let (coarse, _) = grid_search(pi, cap, resolution / 2);
            let (polished, arg) = polish(pi, cap, arg, fine, T::one() / T::of_usize(resolution));
            let diagonal_limit = poincare_constant(pair)? / T::of(2.0);
            Ok(MlsiEstimate {
                value: polished.max(diagonal_limit),
                refinement_error: (fine - coarse).abs(),
                certified: true,
                maximizer: arg,
            })
        }
        MlsiMode::Ascent { restarts, iterations, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut best = T::zero();
            let mut arg = vec![T::one() / T::of_usize(k); k];
            for _ in 0..restarts.max(1) {
                let mut f: Vec<T> = (0..k).map(|_| T::of(rng.gen_range(-2.0..2.0f64)).exp()).collect();
                let mut cur = mlsi_ratio(pi, cap, &f).unwrap_or(T::zero());
                let mut sigma = 0.5f64;
                for _ in 0..iterations {
                    let cand: Vec<T> = f.iter().map(|&v| v * T::of(sigma * rng.gen_range(-1.0..1.0f64)).exp()).collect();
                    match mlsi_ratio(pi, cap, &cand) {
                        Some(v) if v > cur => {
                            cur = v;
                            f = cand;
                        }
                        _ => sigma = (sigma * 0.97).max(1e-6),
                    }
                }
                if cur > best {
                    best = cur;
                    let s: T = f.iter().copied().sum();
                    arg = f.iter().map(|&v| v / s).collect();
                }
            }
            Ok(MlsiEstimate { value: best, refinement_error: T::zero(), certified: false, maximizer: arg })
        }
    }
}

/// Canonical paths keyed by unordered pair `(min, max)`; each path is a vertex sequence
/// joining the two endpoints in either direction.
pub type CanonicalPaths = BTreeMap<(usize, usize), Vec<usize>>;

/// Unique monotone paths on the path graph `0 - 1 - … - (n-1)`.
pub fn line_paths(n: usize) -> CanonicalPaths {
    let mut out = BTreeMap::new();
    for x in 0..n {
        for y in x + 1..n {
            out.insert((x, y), (x..=y).collect());
        }
    }
    out
}

/// Breadth-first shortest paths (ties to the smallest neighbor index).
pub fn bfs_paths(graph: &StateGraph) -> CanonicalPaths {
    let n = graph.len();
    let mut out = BTreeMap::new();
    for x in 0..n {
        let mut parent = vec![usize::MAX; n];
        parent[x] = x;
        let mut queue = std::collections::VecDeque::from([x]);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in graph.neighbors(u) {
                if parent[v] == usize::MAX {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        for y in x + 1..n {
            if parent[y] == usize::MAX {
                continue;
            }
            let mut path = vec![y];
            let mut cur = y;
            while cur != x {
                cur = parent[cur];
                path.push(cur);
            }
            path.reverse();
            out.insert((x, y), path);
        }
    }
    out
}

/// `max_e (1/c(e)) Σ_{γ_xy ∋ e} |γ_xy| π(x) π(y)` over unordered pairs; an upper bound on `C_PI`.
pub fn canonical_paths_congestion<T: Real>(pair: &ReversiblePair<T>, paths: &CanonicalPaths) -> Result<T> {
    let cap = pair.capacity();
    let pi = pair.stationary();
    let g = cap.graph();
    let n = g.len();
    let mut load = vec![T::zero(); g.num_edges()];
    for x in 0..n {
        for y in x + 1..n {
            let path = paths.get(&(x, y)).ok_or(Error::MissingPath { x, y })?;
            let ends = (path.first().copied(), path.last().copied());
            if ends != (Some(x), Some(y)) && ends != (Some(y), Some(x)) {
                return Err(Error::BrokenPath { x, y, step: 0 });
            }
            let mut seen = std::collections::HashSet::with_capacity(path.len());
            if !path.iter().all(|v| seen.insert(*v)) {
                return Err(Error::InvalidInput(format!("path for ({x}, {y}) is not simple")));
            }
            let len = T::of_usize(path.len() - 1);
            let w = len * pi[x] * pi[y];
            for (step, win) in path.windows(2).enumerate() {
                let e = g.edge_index(win[0], win[1]).ok_or(Error::BrokenPath { x, y, step })?;
                load[e] += w;
            }
        }
    }
    let mut worst = T::zero();
    for (e, (&l, &c)) in load.iter().zip(cap.weights()).enumerate() {
        if l == T::zero() {
            continue;
        }
        if c == T::zero() {
            let (x, y) = g.edges()[e];
            return Err(Error::ZeroCapacityEdge { x, y });
        }
        worst = worst.max(l / c);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(pab: f64, pba: f64) -> RateKernel<f64> {
        let g = Arc::new(StateGraph::path(2));
        RateKernel::new(g, vec![pab], vec![pba]).unwrap()
    }

    #[test]
    fn capacity_two_state() {
        let k = two_state(0.6, 0.4);
        let pi = ProbVector::new(vec![0.4, 0.6]).unwrap();
        let c = capacity_from_kernel(&k, &pi).unwrap();
        assert!((c.get(0, 1) - 0.24).abs() < 1e-15);
    }

    #[test]
    fn detects_irreversibility() {
        let g = Arc::new(StateGraph::cycle(3));
        let k = RateKernel::<f64>::from_fn(g, |x, y| if (x + 1) % 3 == y { 1.0 } else { 0.5 }).unwrap();
        assert!(matches!(capacity_from_kernel(&k, &ProbVector::uniform(3)), Err(Error::NotReversible { .. })));
    }

    #[test]
    fn dirichlet_two_state_indicator() {
        let g = Arc::new(StateGraph::path(2));
        let c = Capacity::<f64>::new(g, vec![0.24]).unwrap();
        assert!((dirichlet_form(&c, &[0.0, 1.0], &[0.0, 1.0]) - 0.24).abs() < 1e-15);
        assert_eq!(dirichlet_form(&c, &[3.0, 3.0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn divergence_examples() {
        assert_eq!(kl::<f64>(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((kl::<f64>(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((chi2::<f64>(&[0.3, 0.7], &[0.5, 0.5]).unwrap() - 0.16).abs() < 1e-15);
        assert!(matches!(kl::<f64>(&[0.5, 0.5], &[1.0, 0.0]), Err(Error::AbsoluteContinuity { state: 1 })));
    }

    #[test]
    fn two_state_relaxation_closed_form() {
        let (a, b) = (0.7, 0.2);
        let k = two_state(a, b);
        let mu0 = ProbVector::new(vec![0.9, 0.1]).unwrap();
        let t = 1.3;
        let stat = b / (a + b);
        let expected = stat + (0.9 - stat) * (-(a + b) * t).exp();
        for method in [ExpmMethod::Pade13, ExpmMethod::Uniformization] {
            let ev = evolve_with(&mu0, &[(t, k.clone())], method).unwrap();
            assert!((ev.marginal[0] - expected).abs() < 1e-13, "{method:?}");
        }
    }

    #[test]
    fn zero_duration_is_identity() {
        let mu0 = ProbVector::new(vec![0.25, 0.75]).unwrap();
        let ev = evolve_fokker_planck(&mu0, &[(0.0, two_state(1.0, 1.0))]).unwrap();
        assert_eq!(ev.marginal, mu0);
    }

    #[test]
    fn poincare_two_state_and_complete_graph() {
        let pair = ReversiblePair::new(two_state(0.6, 0.4), ProbVector::new(vec![0.4, 0.6]).unwrap()).unwrap();
        assert!((poincare_constant(&pair).unwrap() - 1.0).abs() < 1e-13);
        for n in 3..7 {
            let g = Arc::new(StateGraph::complete(n));
            let r = 1.0 / (n as f64 - 1.0);
            let k = RateKernel::<f64>::from_fn(g, |_, _| r).unwrap();
            let pair = ReversiblePair::new(k, ProbVector::uniform(n)).unwrap();
            let expected = (n as f64 - 1.0) / n as f64;
            assert!((poincare_constant(&pair).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn congestion_examples() {
        let pair = ReversiblePair::new(two_state(0.5, 0.5), ProbVector::uniform(2)).unwrap();
        let c = canonical_paths_congestion(&pair, &line_paths(2)).unwrap();
        assert!((c - 0.25 / 0.25).abs() < 1e-14);

        let g = Arc::new(StateGraph::path(3));
        let k = RateKernel::<f64>::from_fn(g, |_, _| 0.5).unwrap();
        let pair = ReversiblePair::new(k, ProbVector::uniform(3)).unwrap();
        assert!((pair.capacity().get(0, 1) - 1.0 / 6.0).abs() < 1e-15);
        let c = canonical_paths_congestion(&pair, &line_paths(3)).unwrap();
        assert!((c - 2.0).abs() < 1e-13);
        assert!(poincare_constant(&pair).unwrap() <= c);
    }

    #[test]
    fn broken_paths_are_rejected() {
        let g = Arc::new(StateGraph::path(3));
        let k = RateKernel::<f64>::from_fn(g, |_, _| 0.5).unwrap();
        let pair = ReversiblePair::new(k, ProbVector::uniform(3)).unwrap();
        let mut paths = line_paths(3);
        paths.insert((0, 2), vec![0, 2]);
        assert!(matches!(canonical_paths_congestion(&pair, &paths), Err(Error::BrokenPath { .. })));
        paths.remove(&(0, 2));
        assert!(matches!(canonical_paths_congestion(&pair, &paths), Err(Error::MissingPath { .. })));
    }

    #[test]
    fn mlsi_grid_rejects_large_spaces() {
        let g = Arc::new(StateGraph::path(5));
        let k = RateKernel::<f64>::from_fn(g, |_, _| 0.5).unwrap();
        let pair = ReversiblePair::new(k, ProbVector::uniform(5)).unwrap();
        assert!(matches!(mlsi_constant(&pair, MlsiMode::default()), Err(Error::TooLargeForGrid { .. })));
    }
}
