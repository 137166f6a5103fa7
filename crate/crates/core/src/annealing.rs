//! Poissonized layered annealing: a Monte Carlo sampler, an exact-marginal runner, kernel
//! stability probes, and end-to-end error-bound verification.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::{gibbs_curve, GibbsModel};
use crate::graph::{ProbVector, StateGraph};
use crate::linalg::DenseMatrix;
use crate::markov::{kl, propagate_uniformized, RateKernel, STOCHASTIC_TOLERANCE};
use crate::num::Real;
use crate::schedule::Schedule;
use crate::transport::action;
use std::sync::Arc;

/// Largest mean for which Poisson counts are drawn by sequential inversion.
pub const POISSON_INVERSION_LIMIT: f64 = 30.0;

/// Horizon, layer count and sampling controls of one annealing run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnealConfig {
    /// Total time `T ≥ 0`; `T = 0` returns the initial law.
    pub horizon: f64,
    /// Layers `N ≥ 1`; layer `k` runs the kernel at `s_k = k / N` for time `T / N`.
    pub layers: usize,
    pub seed: u64,
    pub replicates: usize,
    /// Optional cap on the Poisson count of each layer.
    pub max_jumps: Option<u64>,
}

impl AnnealConfig {
    pub fn new(horizon: f64, layers: usize) -> Result<Self> {
        let c = Self { horizon, layers, seed: 0, replicates: 1, max_jumps: None };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon >= 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidInput(format!("horizon {} must be finite and >= 0", self.horizon)));
        }
        if self.layers == 0 || self.replicates == 0 {
            return Err(Error::InvalidInput("layers and replicates must be >= 1".into()));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.layers as f64
    }

    /// Union bound `N · P[Pois(Δt) > max_jumps]` on the probability that truncation alters a run.
    pub fn truncation_probability(&self) -> Option<f64> {
        let cap = self.max_jumps?;
        let lambda = self.dt();
        if lambda == 0.0 {
            return Some(0.0);
        }
        let mut term = (-lambda).exp();
        let mut cdf = term;
        for k in 1..=cap {
            term *= lambda / k as f64;
            cdf += term;
        }
        Some((self.layers as f64 * (1.0 - cdf)).clamp(0.0, 1.0))
    }
}

/// Sparse stochastic matrix `P = I + p` of a unit-rate chain.
#[derive(Debug, Clone)]
pub struct TransitionMatrix<T> {
    kernel: RateKernel<T>,
}

impl<T: Real> TransitionMatrix<T> {
    /// Requires every exit rate to be at most one (within `1e-10`).
    pub fn from_kernel(kernel: RateKernel<T>) -> Result<Self> {
        let tol = T::tolerance_floor(STOCHASTIC_TOLERANCE);
        for (x, e) in kernel.exit_rates().into_iter().enumerate() {
            if e > T::one() + tol {
                return Err(Error::NonStochasticRow { row: x, sum: (T::one() + e).as_f64() - 1.0 });
            }
        }
        Ok(Self { kernel })
    }

    pub fn from_dense(graph: Arc<StateGraph>, p: &DenseMatrix<T>) -> Result<Self> {
        Self::from_kernel(RateKernel::from_transition(graph, p)?)
    }

    pub fn kernel(&self) -> &RateKernel<T> {
        &self.kernel
    }

    pub fn into_kernel(self) -> RateKernel<T> {
        self.kernel
    }

    /// One step from `x` driven by a uniform `u ∈ [0, 1)`; staying absorbs the remainder.
    pub fn step(&self, x: usize, u: T) -> usize {
        let mut acc = T::zero();
        for &(y, e) in self.kernel.graph().neighbors(x) {
            acc += self.kernel.rate_on_edge(e, x);
            if u < acc {
                return y;
            }
        }
        x
    }
}

/// Outcome of [`run_sampler`].
#[derive(Debug, Clone, Serialize)]
pub struct SampleResult {
    pub final_states: Vec<usize>,
    pub total_jumps: u64,
    pub layer_jumps: Vec<u64>,
    pub truncation_probability: Option<f64>,
    #[serde(serialize_with = "serialize_secs")]
    pub elapsed: Duration,
}

/// Outcome of [`run_exact`].
#[derive(Debug, Clone, Serialize)]
pub struct ExactResult<T> {
    pub marginal: ProbVector<T>,
    /// `|Σ - 1|` before renormalization.
    pub mass_drift: T,
    /// `max_k max_e |p_{s_k}/p_{s_{k-1}} - 1|` in both orientations of the ratio.
    pub layer_deviation: T,
    #[serde(serialize_with = "serialize_secs")]
    pub elapsed: Duration,
}

fn serialize_secs<S: serde::Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream owned by walker `replicate`: it draws the initial state, then every layer in order.
pub fn stream_rng(seed: u64, replicate: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(replicate)))
}

/// Draws `Pois(lambda)`: inversion up to [`POISSON_INVERSION_LIMIT`], otherwise the
/// rejection sampler of `rand_distr`.
pub fn poisson_count(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda <= POISSON_INVERSION_LIMIT {
        let u: f64 = rng.gen();
        let mut k = 0u64;
        let mut p = (-lambda).exp();
        let mut cdf = p;
        while u >= cdf && k < 10_000 {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            if p == 0.0 {
                break;
            }
        }
        k
    } else {
        Poisson::new(lambda).map(|d| d.sample(rng) as u64).unwrap_or(0)
    }
}

/// Layered Poissonized annealing on `replicates` independent walkers.
///
/// Layer `k = 1..N` draws `M_k ~ Pois(T/N)` per walker and applies `P_{k/N}` that many
/// times. Each walker owns its stream, so output does not depend on thread count.
pub fn run_sampler<T: Real>(
    transition_at: impl Fn(T) -> Result<TransitionMatrix<T>>,
    config: &AnnealConfig,
    initial: impl Fn(&mut ChaCha8Rng) -> usize + Sync,
) -> Result<SampleResult> {
    config.validate()?;
    let start = Instant::now();
    let mut walkers: Vec<(usize, ChaCha8Rng)> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(config.seed, r as u64);
            (initial(&mut rng), rng)
        })
        .collect();
    let dt = config.dt();
    let mut layer_jumps = Vec::with_capacity(config.layers);
    if dt > 0.0 {
        for k in 1..=config.layers {
            let p = transition_at(T::of_usize(k) / T::of_usize(config.layers))?;
            let jumps: Vec<u64> = walkers
                .par_iter_mut()
                .map(|(x, rng)| {
                    let mut m = poisson_count(rng, dt);
                    if let Some(cap) = config.max_jumps {
                        m = m.min(cap);
                    }
                    for _ in 0..m {
                        *x = p.step(*x, T::of(rng.gen::<f64>()));
                    }
                    m
                })
                .collect();
            layer_jumps.push(jumps.iter().sum());
        }
    } else {
        layer_jumps.resize(config.layers, 0);
    }
    Ok(SampleResult {
        final_states: walkers.into_iter().map(|(x, _)| x).collect(),
        total_jumps: layer_jumps.iter().sum(),
        layer_jumps,
        truncation_probability: config.truncation_probability(),
        elapsed: start.elapsed(),
    })
}

fn kernel_deviation<T: Real>(a: &RateKernel<T>, b: &RateKernel<T>) -> Result<T> {
    let g = a.graph();
    let mut worst = T::zero();
    for (e, &(x, y)) in g.edges().iter().enumerate() {
        for (ra, rb, from, to) in [(a.forward()[e], b.forward()[e], x, y), (a.backward()[e], b.backward()[e], y, x)] {
            if ra == T::zero() && rb == T::zero() {
                continue;
            }
            if ra == T::zero() || rb == T::zero() {
                return Err(Error::ZeroRateEdge { x: from, y: to });
            }
            worst = worst.max((rb / ra - T::one()).abs()).max((ra / rb - T::one()).abs());
        }
    }
    Ok(worst)
}

/// Exact law of the layered algorithm: `μ_N = μ_0 Π_k exp((T/N) p_{k/N})`, each factor
/// applied by uniformization.
pub fn run_exact<T: Real>(
    kernel_at: impl Fn(T) -> Result<RateKernel<T>>,
    config: &AnnealConfig,
    mu0: &ProbVector<T>,
) -> Result<ExactResult<T>> {
    config.validate()?;
    let start = Instant::now();
    let dt = T::of(config.dt());
    let n_layers = T::of_usize(config.layers);
    let mut v = mu0.as_slice().to_vec();
    let mut deviation = T::zero();
    if config.horizon > 0.0 {
        let mut prev = kernel_at(T::zero())?;
        for k in 1..=config.layers {
            let cur = kernel_at(T::of_usize(k) / n_layers)?;
            if cur.len() != v.len() {
                return Err(Error::DimensionMismatch { expected: v.len(), found: cur.len() });
            }
            deviation = deviation.max(kernel_deviation(&prev, &cur)?);
            v = propagate_uniformized(&v, &cur, dt);
            prev = cur;
        }
    }
    let sum = crate::num::stable_sum(v.iter().copied());
    Ok(ExactResult {
        mass_drift: (sum - T::one()).abs(),
        marginal: ProbVector::normalize(v)?,
        layer_deviation: deviation,
        elapsed: start.elapsed(),
    })
}

/// `max |p_{s'}(x,y) / p_s(x,y) - 1|` over probe points `s` and `s' ∈ {s ± η/2, s ± η}`.
pub fn local_stability<T: Real>(kernel_at: impl Fn(T) -> Result<RateKernel<T>> + Sync, eta: T, probes: usize) -> Result<T> {
    let k = probes.max(2);
    let results: Vec<Result<T>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let s = T::of_usize(i) / T::of_usize(k - 1);
            let base = kernel_at(s)?;
            let mut worst = T::zero();
            let half = eta / T::of(2.0);
            for d in [-eta, -half, half, eta] {
                let t = s + d;
                if t < T::zero() || t > T::one() {
                    continue;
                }
                let other = kernel_at(t)?;
                let g = base.graph();
                for e in 0..g.num_edges() {
                    let (x, y) = g.edges()[e];
                    for (a, b, from, to) in [(base.forward()[e], other.forward()[e], x, y), (base.backward()[e], other.backward()[e], y, x)]
                    {
                        if a == T::zero() {
                            if b == T::zero() {
                                continue;
                            }
                            return Err(Error::ZeroRateEdge { x: from, y: to });
                        }
                        worst = worst.max((b / a - T::one()).abs());
                    }
                }
            }
            Ok(worst)
        })
        .collect();
    results.into_iter().try_fold(T::zero(), |m, r| Ok(m.max(r?)))
}

/// Generic stability window `η = ε / (12 L max|β'| T)` for kernels with rate log-Lipschitz
/// constant `L`; deviations over the window stay below about `ε / (6T)`.
pub fn stability_window(eps: f64, lipschitz: f64, max_beta_prime: f64, horizon: f64) -> Option<f64> {
    let denom = 12.0 * lipschitz * max_beta_prime * horizon;
    (denom > 0.0).then(|| eps / denom)
}

/// How the horizon and layer count of a verification run are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Horizon {
    /// `T = 2A/ε`, `N = ⌈1/η⌉`.
    ActionBased,
    /// Caller-supplied `T` and `N`.
    Fixed { horizon: f64, layers: usize },
}

/// Inputs of [`verify_error_bound`].
pub struct AnnealingProblem<'a, T: Real> {
    /// Model whose kernels the algorithm runs.
    pub runner: &'a dyn GibbsModel<T>,
    /// Model on which the action is computed (a symmetry reduction of `runner`, or `runner` itself).
    pub action_model: &'a dyn GibbsModel<T>,
    pub schedule: Schedule<T>,
    /// Initial law `π_0^ALG` on the runner's space.
    pub initial: ProbVector<T>,
    pub eps: f64,
    pub horizon: Horizon,
    pub grid_nodes: usize,
}

/// Right-hand side `KL_0 + (1+δ) A / (4T) + 2 δ T`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundDecomposition {
    pub initial_kl: f64,
    pub action_term: f64,
    pub stability_term: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorBoundReport {
    pub action: f64,
    pub action_error_estimate: f64,
    pub horizon: f64,
    pub layers: usize,
    pub eta: Option<f64>,
    pub delta: f64,
    pub kl0: f64,
    pub kl: f64,
    pub eps: f64,
    pub decomposition: BoundDecomposition,
    /// `kl ≤ ε`.
    pub pass: bool,
    /// `kl ≤ decomposition.total`.
    pub bound_holds: bool,
    pub mass_drift: f64,
    pub elapsed_secs: f64,
    /// Final law of the exact run on the runner's space.
    #[serde(skip)]
    pub marginal: Vec<f64>,
}

/// Computes the action, picks `T` and `N`, runs [`run_exact`] and compares the final KL
/// against `ε` and against the perturbation decomposition.
pub fn verify_error_bound<T: Real>(problem: &AnnealingProblem<'_, T>) -> Result<ErrorBoundReport> {
    let start = Instant::now();
    let sched = &problem.schedule;
    let curve = gibbs_curve(problem.action_model, sched, problem.grid_nodes)?;
    let act = action(&curve).map_err(|e| Error::ActionUnavailable(Box::new(e)))?;
    let a = act.action.as_f64();
    let max_bp = sched.max_abs_beta_prime(1025).as_f64();
    let lip = problem.runner.rate_log_lipschitz().as_f64();
    let (horizon, layers, eta) = match problem.horizon {
        Horizon::ActionBased => {
            let t = 2.0 * a / problem.eps;
            match stability_window(problem.eps, lip, max_bp, t) {
                Some(eta) => (t, (1.0 / eta).ceil().max(1.0) as usize, Some(eta)),
                None => (t, 1, None),
            }
        }
        Horizon::Fixed { horizon, layers } => (horizon, layers, None),
    };
    let config = AnnealConfig::new(horizon, layers)?;
    let runner = problem.runner;
    let exact = run_exact(|s| runner.kernel(sched.beta(s)), &config, &problem.initial)?;
    let target = runner.distribution(sched.beta(T::one()))?;
    let start_law = runner.distribution(sched.beta(T::zero()))?;
    let kl_final = kl(target.as_slice(), exact.marginal.as_slice())?.as_f64();
    let kl0 = kl(start_law.as_slice(), problem.initial.as_slice())?.as_f64();
    let delta = exact.layer_deviation.as_f64();
    let action_term = if a == 0.0 {
        0.0
    } else if horizon == 0.0 {
        f64::INFINITY
    } else {
        (1.0 + delta) * a / (4.0 * horizon)
    };
    let stability_term = 2.0 * delta * horizon;
    let total = kl0 + action_term + stability_term;
    Ok(ErrorBoundReport {
        action: a,
        action_error_estimate: act.error_estimate.as_f64(),
        horizon,
        layers,
        eta,
        delta,
        kl0,
        kl: kl_final,
        eps: problem.eps,
        decomposition: BoundDecomposition { initial_kl: kl0, action_term, stability_term, total },
        pass: kl_final <= problem.eps,
        bound_holds: kl_final <= total * (1.0 + 1e-9) + 1e-12,
        mass_drift: exact.mass_drift.as_f64(),
        elapsed_secs: start.elapsed().as_secs_f64(),
        marginal: exact.marginal.iter().map(|v| v.as_f64()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(a: f64, b: f64) -> RateKernel<f64> {
        RateKernel::new(Arc::new(StateGraph::path(2)), vec![a], vec![b]).unwrap()
    }

    #[test]
    fn zero_horizon_returns_initial_law() {
        let cfg = AnnealConfig::new(0.0, 1).unwrap();
        let mu0 = ProbVector::new(vec![0.3, 0.7]).unwrap();
        let out = run_exact(|_| Ok(two_state(0.5, 0.5)), &cfg, &mu0).unwrap();
        assert_eq!(out.marginal, mu0);
        let s = run_sampler(|_| TransitionMatrix::from_kernel(two_state(0.5, 0.5)), &cfg, |_| 1).unwrap();
        assert_eq!(s.total_jumps, 0);
        assert!(s.final_states.iter().all(|&x| x == 1));
    }

    #[test]
    fn one_layer_two_state_relaxation() {
        let (a, b) = (0.6, 0.3);
        let cfg = AnnealConfig::new(2.0, 1).unwrap();
        let mu0 = ProbVector::new(vec![1.0, 0.0]).unwrap_or_else(|_| ProbVector::new(vec![1.0 - 1e-300, 1e-300]).unwrap());
        let out = run_exact(|_| Ok(two_state(a, b)), &cfg, &mu0).unwrap();
        let stat = b / (a + b);
        let expected = stat + (mu0[0] - stat) * (-(a + b) * 2.0).exp();
        assert!((out.marginal[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn non_stochastic_rows_are_rejected() {
        assert!(matches!(TransitionMatrix::from_kernel(two_state(1.5, 0.2)), Err(Error::NonStochasticRow { row: 0, .. })));
    }

    #[test]
    fn sampler_is_deterministic() {
        let cfg = AnnealConfig { horizon: 5.0, layers: 10, seed: 7, replicates: 64, max_jumps: None };
        let run = || run_sampler(|_| TransitionMatrix::from_kernel(two_state(0.5, 0.5)), &cfg, |r| r.gen_range(0..2)).unwrap();
        assert_eq!(run().final_states, run().final_states);
    }

    #[test]
    fn constant_family_is_stable() {
        let d = local_stability(|_| Ok(two_state(0.4, 0.1)), 0.1, 11).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn poisson_inversion_mean() {
        let mut rng = stream_rng(1, 2);
        let n = 20_000;
        let mean = (0..n).map(|_| poisson_count(&mut rng, 2.5) as f64).sum::<f64>() / n as f64;
        assert!((mean - 2.5).abs() < 0.05);
        let big = (0..n).map(|_| poisson_count(&mut rng, 80.0) as f64).sum::<f64>() / n as f64;
        assert!((big - 80.0).abs() < 0.5);
    }

    #[test]
    fn truncation_probability_is_reported() {
        let cfg = AnnealConfig { horizon: 10.0, layers: 10, seed: 0, replicates: 1, max_jumps: Some(5) };
        let p = cfg.truncation_probability().unwrap();
        assert!(p > 0.0 && p < 1e-2);
    }
}
