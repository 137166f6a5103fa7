//! Mean-field Ising model: full-space Glauber dynamics on `{±1}ⁿ`, the magnetization
//! birth–death chain and its spin-flip folding, landscape shape checks, and the
//! action/complexity harness.

use std::sync::Arc;

use serde::Serialize;

use crate::annealing::{verify_error_bound, AnnealingProblem, ErrorBoundReport, Horizon};
use crate::combinatorics::{ln_binomial, ln_factorials};
use crate::error::{Error, Result};
use crate::gibbs::{gibbs_curve, GibbsModel, HeatBathModel};
use crate::graph::{Capacity, ProbVector, StateGraph};
use crate::markov::{capacity_from_kernel, RateKernel};
use crate::num::{stable_sum, Real};
use crate::schedule::Schedule;
use crate::symmetry::Projection;
use crate::transport::{action, ActionReport};

/// Largest site count for full-space enumeration.
pub const FULL_SPACE_MAX_SITES: usize = 12;
/// Largest site count for the projected chains.
pub const PROJECTED_MAX_SITES: usize = 10_000;
/// `|log p_β' - log p_β| ≤ 2 |β' - β|` for Glauber rates on every edge.
pub const RATE_LOG_LIPSCHITZ: f64 = 2.0;

fn check_full(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("at least one site required".into()));
    }
    if n > FULL_SPACE_MAX_SITES {
        return Err(Error::TooLarge { what: "Ising sites (full space)", size: n as u128, cap: FULL_SPACE_MAX_SITES as u128 });
    }
    Ok(())
}

fn check_projected(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidInput("at least one site required".into()));
    }
    if n > PROJECTED_MAX_SITES {
        return Err(Error::TooLarge { what: "Ising sites (projected)", size: n as u128, cap: PROJECTED_MAX_SITES as u128 });
    }
    Ok(())
}

/// Spin of site `i` in configuration `x`: bit `n-1-i` set means `-1`, so index 0 is all-plus.
pub fn spin(n: usize, x: usize, i: usize) -> i64 {
    if (x >> (n - 1 - i)) & 1 == 1 {
        -1
    } else {
        1
    }
}

/// Total magnetization `M(x) = n - 2·(number of minus spins)`.
pub fn magnetization(n: usize, x: usize) -> i64 {
    n as i64 - 2 * x.count_ones() as i64
}

/// Hypercube `{±1}ⁿ` with single-flip edges and labels such as `+-+`.
pub fn hypercube(n: usize) -> Result<StateGraph> {
    check_full(n)?;
    let size = 1usize << n;
    let labels = (0..size).map(|x| (0..n).map(|i| if spin(n, x, i) == 1 { '+' } else { '-' }).collect()).collect();
    let edges = (0..size).flat_map(|x| (0..n).map(move |b| (x, x ^ (1 << b)))).filter(|&(x, y)| x < y);
    StateGraph::new(labels, edges)
}

/// `μ_β(σ) ∝ exp(β M(σ)² / (2n))` on `{±1}ⁿ`.
pub fn ising_distribution<T: Real>(n: usize, beta: T) -> Result<ProbVector<T>> {
    check_full(n)?;
    let nn = T::of_usize(n);
    let lw: Vec<T> = (0..1usize << n)
        .map(|x| {
            let m = T::of(magnetization(n, x) as f64);
            beta * m * m / (T::of(2.0) * nn)
        })
        .collect();
    ProbVector::from_log_weights(&lw)
}

/// Single-site Glauber kernel `p(σ, σ^i) = (1/n) π(σ^i) / (π(σ) + π(σ^i))` for any positive
/// `π` on `{±1}ⁿ`, checked for detailed balance.
pub fn glauber_kernel<T: Real>(pi: &ProbVector<T>) -> Result<RateKernel<T>> {
    let size = pi.len();
    if !size.is_power_of_two() || size < 2 {
        return Err(Error::InvalidInput(format!("{size} is not the size of a hypercube")));
    }
    let n = size.trailing_zeros() as usize;
    let g = Arc::new(hypercube(n)?);
    let inv_n = T::one() / T::of_usize(n);
    let kernel = RateKernel::from_fn(g, |x, y| inv_n * pi[y] / (pi[x] + pi[y]))?;
    capacity_from_kernel(&kernel, pi)?;
    Ok(kernel)
}

/// Full-space Glauber family as a [`GibbsModel`] with `H = M² / (2n)`.
pub fn full_model<T: Real>(n: usize) -> Result<HeatBathModel<T>> {
    let g = Arc::new(hypercube(n)?);
    let nn = T::of_usize(n);
    let energy = (0..g.len())
        .map(|x| {
            let m = T::of(magnetization(n, x) as f64);
            m * m / (T::of(2.0) * nn)
        })
        .collect();
    let m = g.num_edges();
    let size = g.len();
    Ok(HeatBathModel::new(g, vec![T::zero(); size], energy, vec![T::one() / nn; m])?.with_rate_log_lipschitz(T::of(RATE_LOG_LIPSCHITZ)))
}

/// Magnetization values of the projected chain, ascending: `-n, -n+2, …, n`, or only the
/// nonnegative ones when folded.
pub fn magnetization_states(n: usize, folded: bool) -> Vec<i64> {
    let all = (0..=n).map(|j| 2 * j as i64 - n as i64);
    if folded {
        all.filter(|&m| m >= 0).collect()
    } else {
        all.collect()
    }
}

fn magnetization_labels(states: &[i64]) -> Vec<String> {
    states.iter().map(|m| format!("m={m}")).collect()
}

/// `σ ↦ M(σ)` from the hypercube onto the magnetization path.
pub fn magnetization_projection(n: usize) -> Result<Projection> {
    let g = Arc::new(hypercube(n)?);
    let map = (0..g.len()).map(|x| n - x.count_ones() as usize).collect();
    Projection::new(g, map, magnetization_labels(&magnetization_states(n, false)))
}

/// `m ↦ |m|` from the magnetization path onto its folded half.
pub fn folding_projection(n: usize) -> Result<Projection> {
    check_projected(n)?;
    let states = magnetization_states(n, false);
    let folded = magnetization_states(n, true);
    let base = folded[0];
    let map = states.iter().map(|&m| ((m.abs() - base) / 2) as usize).collect();
    let g = Arc::new(StateGraph::new(magnetization_labels(&states), (0..n).map(|j| (j, j + 1)))?);
    Projection::new(g, map, magnetization_labels(&folded))
}

/// Magnetization chain (optionally folded) as a [`GibbsModel`] with closed-form rates.
///
/// Unfolded: `π̄(m) ∝ C(n, (n+m)/2) exp(β m²/(2n))`. Folded: `π̄̄ = r π̄` with `r(0) = 1`,
/// `r(m > 0) = 2`, and `c̄̄ = 2 c̄`.
#[derive(Debug, Clone)]
pub struct ProjectedIsing<T> {
    n: usize,
    folded: bool,
    states: Vec<i64>,
    graph: Arc<StateGraph>,
    log_base: Vec<T>,
    energy: Vec<T>,
}

impl<T: Real> ProjectedIsing<T> {
    pub fn new(n: usize, folded: bool) -> Result<Self> {
        check_projected(n)?;
        let states = magnetization_states(n, folded);
        let table = ln_factorials(n);
        let log_base = states
            .iter()
            .map(|&m| {
                // C(n, k) = C(n, n-k) evaluated identically keeps π̄(m) = π̄(-m) bit-exact.
                let k = ((n as i64 - m.abs()) / 2) as usize;
                let r = if folded && m > 0 { 2f64.ln() } else { 0.0 };
                T::of(ln_binomial(&table, n, k) + r)
            })
            .collect();
        let nn = T::of_usize(n);
        let energy = states
            .iter()
            .map(|&m| {
                let m = T::of(m as f64);
                m * m / (T::of(2.0) * nn)
            })
            .collect();
        let k = states.len();
        let graph = Arc::new(StateGraph::new(magnetization_labels(&states), (1..k).map(|j| (j - 1, j)))?);
        Ok(Self { n, folded, states, graph, log_base, energy })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_folded(&self) -> bool {
        self.folded
    }

    pub fn states(&self) -> &[i64] {
        &self.states
    }

    /// Closed-form capacities `c̄(m, m+2) = ((n-m)/(2n)) π̄(m) π̄(m+2) / (((n-m)/(n+m+2)) π̄(m) + π̄(m+2))`,
    /// doubled on the folded chain.
    pub fn closed_form_capacity(&self, beta: T) -> Result<Capacity<T>> {
        let unfolded = if self.folded { ProjectedIsing::new(self.n, false)? } else { self.clone() };
        let pi = unfolded.distribution(beta)?;
        let n = T::of_usize(self.n);
        let two = T::of(2.0);
        let weights = self
            .graph
            .edges()
            .iter()
            .map(|&(a, _)| {
                let m = self.states[a];
                let j = ((m + self.n as i64) / 2) as usize;
                let mf = T::of(m as f64);
                let (lo, hi) = (pi[j], pi[j + 1]);
                let num = (n - mf) / (two * n) * lo * hi;
                let den = (n - mf) / (n + mf + two) * lo + hi;
                let c = num / den;
                if self.folded {
                    two * c
                } else {
                    c
                }
            })
            .collect();
        Capacity::new(self.graph.clone(), weights)
    }

    /// Smallest ratio `c̄(m, m+2) / ((1/(2n)) min(π̄(m), π̄(m+2)))` over edges.
    pub fn capacity_bound_slack(&self, beta: T) -> Result<T> {
        let cap = self.closed_form_capacity(beta)?;
        let pi = self.distribution(beta)?;
        let two_n = T::of_usize(2 * self.n);
        Ok(self.graph.edges().iter().zip(cap.weights()).map(|(&(a, b), &c)| c * two_n / pi[a].min(pi[b])).fold(T::infinity(), T::min))
    }
}

/// `1 / (1 + exp(-d))` without overflow.
fn logistic<T: Real>(d: T) -> T {
    if d >= T::zero() {
        T::one() / (T::one() + (-d).exp())
    } else {
        let e = d.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> GibbsModel<T> for ProjectedIsing<T> {
    fn graph(&self) -> &Arc<StateGraph> {
        &self.graph
    }

    fn log_base(&self) -> &[T] {
        &self.log_base
    }

    fn energy(&self) -> &[T] {
        &self.energy
    }

    /// `p̄(m, m+2) = ((n-m)/(2n)) σ(βΔ)` and `p̄(m+2, m) = ((n+m+2)/(2n)) σ(-βΔ)` with
    /// `Δ = ((m+2)² - m²)/(2n)`; the folded chain doubles the rate out of `m = 0`.
    fn kernel(&self, beta: T) -> Result<RateKernel<T>> {
        let n = T::of_usize(self.n);
        let two = T::of(2.0);
        let mut forward = Vec::with_capacity(self.graph.num_edges());
        let mut backward = Vec::with_capacity(self.graph.num_edges());
        for &(a, b) in self.graph.edges() {
            let m = T::of(self.states[a] as f64);
            let delta = (self.energy[b] - self.energy[a]) * beta;
            let mut up = (n - m) / (two * n) * logistic(delta);
            let down = (n + m + two) / (two * n) * logistic(-delta);
            if self.folded && self.states[a] == 0 {
                up *= two;
            }
            forward.push(up);
            backward.push(down);
        }
        RateKernel::new(self.graph.clone(), forward, backward)
    }

    fn rate_log_lipschitz(&self) -> T {
        T::of(RATE_LOG_LIPSCHITZ)
    }
}

/// Shape of `m ↦ π̄(m)` on `m ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum Landscape {
    Increasing,
    Decreasing,
    Unimodal {
        mode: i64,
    },
    /// None of the three shapes (a violation of the trichotomy).
    Irregular,
}

#[derive(Debug, Clone, Serialize)]
pub struct LandscapeReport {
    pub n: usize,
    pub beta: f64,
    pub shape: Landscape,
    /// Argmax of `π̄(m)` over `m ≥ 0`.
    pub mode: i64,
    /// `n √(1 - 1/β)` when `β ≥ 1`.
    pub mode_lower_bound: Option<f64>,
    /// `max_m π̄(m) / π̄(m₀)` with `m₀` the smallest nonnegative magnetization.
    pub peak_ratio: f64,
    /// Every statement applicable at this `β` holds.
    pub holds: bool,
}

/// `log π̄(m+2) - log π̄(m) = (2β/n)(m+1) + ln((n-m)/(n+m+2))`.
pub fn landscape_increment(n: usize, beta: f64, m: i64) -> f64 {
    let nf = n as f64;
    let mf = m as f64;
    2.0 * beta / nf * (mf + 1.0) + ((nf - mf) / (nf + mf + 2.0)).ln()
}

/// Classifies `{π̄(m)}_{m ≥ 0}` and checks the regime statements: decreasing for
/// `β ≤ 1 - 1/n`, peak below `e · π̄(m₀)` for `1 - 1/n < β < 1`, mode above `n√(1-1/β)` for `β ≥ 1`.
pub fn landscape_classify(n: usize, beta: f64) -> Result<LandscapeReport> {
    check_projected(n)?;
    let states = magnetization_states(n, true);
    let mut log_p = vec![0.0f64];
    for w in states.windows(2) {
        let last = *log_p.last().expect("nonempty");
        log_p.push(last + landscape_increment(n, beta, w[0]));
    }
    let (mode_idx, peak) =
        log_p.iter().enumerate().fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    let diffs: Vec<f64> = log_p.windows(2).map(|w| w[1] - w[0]).collect();
    let shape = if diffs.is_empty() {
        Landscape::Decreasing
    } else if diffs.iter().all(|&d| d > 0.0) {
        Landscape::Increasing
    } else if diffs.iter().all(|&d| d < 0.0) {
        Landscape::Decreasing
    } else {
        let rising = diffs.iter().take_while(|&&d| d > 0.0).count();
        if rising > 0 && diffs[rising..].iter().all(|&d| d < 0.0) {
            Landscape::Unimodal { mode: states[rising] }
        } else {
            Landscape::Irregular
        }
    };
    let mode = states[mode_idx];
    let nf = n as f64;
    let mode_lower_bound = (beta >= 1.0).then(|| nf * (1.0 - 1.0 / beta).sqrt());
    let peak_ratio = peak.exp();
    let holds = shape != Landscape::Irregular
        && if beta <= 1.0 - 1.0 / nf {
            shape == Landscape::Decreasing
        } else if beta < 1.0 {
            peak_ratio < std::f64::consts::E
        } else {
            (mode as f64) > mode_lower_bound.expect("set for beta >= 1")
        };
    Ok(LandscapeReport { n, beta, shape, mode, mode_lower_bound, peak_ratio, holds })
}

/// `m ↦ (β'/(2n)) (m² - E_{π̄̄}[m²])` on the folded chain, the derivative of `log π̄̄`
/// along a schedule with slope `β'`.
pub fn dlog_folded_measure<T: Real>(n: usize, beta: T, beta_prime: T) -> Result<Vec<T>> {
    let model = ProjectedIsing::<T>::new(n, true)?;
    let pi = model.distribution(beta)?;
    let m2: Vec<T> = model.states.iter().map(|&m| T::of((m * m) as f64)).collect();
    let mean = stable_sum(pi.iter().zip(&m2).map(|(&p, &v)| p * v));
    let scale = beta_prime / T::of_usize(2 * n);
    Ok(m2.into_iter().map(|v| scale * (v - mean)).collect())
}

/// How [`ising_pipeline`] chooses the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IsingHorizon {
    /// `T = 2n⁵β²/ε`, `N = ⌈48 n⁵ β³ / ε²⌉`.
    ClosedForm,
    /// `T = 2A/ε` with the computed action, `N = ⌈1/η⌉`.
    ActionBased,
}

#[derive(Debug, Clone, Serialize)]
pub struct IsingPipelineReport {
    pub n: usize,
    pub beta: f64,
    pub eps: f64,
    pub action: ActionReport<f64>,
    /// `n⁵ β² / 16`.
    pub action_bound: f64,
    pub action_ratio: f64,
    pub horizon: f64,
    pub layers: usize,
    /// `ε / (24 β T)`.
    pub eta: Option<f64>,
    /// End-to-end exact run on the full space, when requested and `n ≤ 12`.
    pub exact: Option<ErrorBoundReport>,
}

/// Closed-form horizon `2n⁵β²/ε` and layer count `⌈48n⁵β³/ε²⌉` (at least one).
pub fn closed_form_schedule(n: usize, beta: f64, eps: f64) -> (f64, usize) {
    let n5 = (n as f64).powi(5);
    let t = 2.0 * n5 * beta * beta / eps;
    let layers = (48.0 * n5 * beta.powi(3) / (eps * eps)).ceil().max(1.0) as usize;
    (t, layers)
}

/// Linear heating `β(s) = β s`: action on the folded chain against `n⁵β²/16`, the annealing
/// horizon, and optionally the exact end-to-end KL on the full space.
pub fn ising_pipeline(
    n: usize,
    beta: f64,
    eps: f64,
    horizon: IsingHorizon,
    grid_nodes: usize,
    run_exact: bool,
) -> Result<IsingPipelineReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("eps {eps} must lie in (0, 1)")));
    }
    let schedule = Schedule::heating(beta)?;
    let folded = ProjectedIsing::<f64>::new(n, true)?;
    let act = action(&gibbs_curve(&folded, &schedule, grid_nodes)?)?;
    let n5 = (n as f64).powi(5);
    let action_bound = n5 * beta * beta / 16.0;
    let (t, layers) = match horizon {
        IsingHorizon::ClosedForm => closed_form_schedule(n, beta, eps),
        IsingHorizon::ActionBased => {
            let t = 2.0 * act.action / eps;
            let denom = 24.0 * beta * t;
            (t, if denom > 0.0 { (denom / eps).ceil().max(1.0) as usize } else { 1 })
        }
    };
    let eta = (beta * t > 0.0).then(|| eps / (24.0 * beta * t));
    let exact = if run_exact {
        let full = full_model::<f64>(n)?;
        let problem = AnnealingProblem {
            runner: &full,
            action_model: &folded,
            schedule: schedule.clone(),
            initial: ProbVector::uniform(1 << n),
            eps,
            horizon: Horizon::Fixed { horizon: t, layers },
            grid_nodes,
        };
        Some(verify_error_bound(&problem)?)
    } else {
        None
    };
    Ok(IsingPipelineReport {
        n,
        beta,
        eps,
        action_ratio: if action_bound > 0.0 { act.action / action_bound } else { 0.0 },
        action: act,
        action_bound,
        horizon: t,
        layers,
        eta,
        exact,
    })
}
