//! Exponential families `π_β ∝ exp(b + β H)` with reversible kernels, and the curves of
//! measures they trace under a schedule.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::girsanov::reference_kernel;
use crate::graph::{Capacity, Flux, MassRate, ProbVector, StateGraph};
use crate::markov::{capacity_from_kernel, RateKernel, ReversiblePair};
use crate::num::{stable_sum, Real};
use crate::quadrature::UniformGrid;
use crate::schedule::Schedule;
use crate::transport::{metric_derivative_sq, CurveSpec};

/// A Gibbs family on a state graph together with a `π_β`-reversible kernel for each `β`.
pub trait GibbsModel<T: Real>: Send + Sync {
    fn graph(&self) -> &Arc<StateGraph>;

    /// Log reference weights `b(x)` (zero for uniform base measures).
    fn log_base(&self) -> &[T];

    /// Energy `H(x)`; the family is `π_β ∝ exp(b + β H)`.
    fn energy(&self) -> &[T];

    /// Kernel reversible with respect to `π_β`.
    fn kernel(&self, beta: T) -> Result<RateKernel<T>>;

    /// `L` with `|log p_β'(x,y) - log p_β(x,y)| ≤ L |β' - β|` on every edge.
    fn rate_log_lipschitz(&self) -> T;

    fn log_weights(&self, beta: T) -> Vec<T> {
        self.log_base().iter().zip(self.energy()).map(|(&b, &h)| b + beta * h).collect()
    }

    fn distribution(&self, beta: T) -> Result<ProbVector<T>> {
        ProbVector::from_log_weights(&self.log_weights(beta))
    }

    /// `∂_s π = β' π (H - E_π H)` at `π = π_β`.
    fn gibbs_rate(&self, beta: T, beta_prime: T) -> Result<MassRate<T>> {
        let pi = self.distribution(beta)?;
        Ok(gibbs_rate_of(&pi, self.energy(), beta_prime))
    }

    fn capacity(&self, beta: T) -> Result<Capacity<T>> {
        capacity_from_kernel(&self.kernel(beta)?, &self.distribution(beta)?)
    }

    fn pair(&self, beta: T) -> Result<ReversiblePair<T>> {
        ReversiblePair::new(self.kernel(beta)?, self.distribution(beta)?)
    }
}

/// `β' π (H - E_π H)`, rebalanced so the entries sum to zero exactly in floating point.
pub fn gibbs_rate_of<T: Real>(pi: &ProbVector<T>, energy: &[T], beta_prime: T) -> MassRate<T> {
    let mean = stable_sum(pi.iter().zip(energy).map(|(&p, &h)| p * h));
    let mut v: Vec<T> = pi.iter().zip(energy).map(|(&p, &h)| beta_prime * p * (h - mean)).collect();
    let drift = stable_sum(v.iter().copied());
    if let Some((i, _)) = pi.iter().enumerate().fold(None, |best: Option<(usize, T)>, (i, &p)| match best {
        Some((_, b)) if b >= p => best,
        _ => Some((i, p)),
    }) {
        v[i] -= drift;
    }
    MassRate::unchecked(v)
}

/// The curve `s ↦ π_{β(s)}` with analytic rate and the model's capacity.
pub fn gibbs_curve<'a, T: Real, M: GibbsModel<T> + ?Sized>(
    model: &'a M,
    schedule: &'a Schedule<T>,
    nodes: usize,
) -> Result<CurveSpec<'a, T>> {
    let grid = UniformGrid::unit(nodes)?;
    Ok(CurveSpec::new(
        grid,
        move |s| model.distribution(schedule.beta(s)),
        move |s| model.gibbs_rate(schedule.beta(s), schedule.beta_prime(s)),
        move |s| model.capacity(schedule.beta(s)),
    ))
}

/// Reference kernel at physical time `t ∈ [0, horizon]` for the curve run at speed
/// `1 / horizon`: the model kernel at `β(t / horizon)` tilted by the optimal flux over `horizon`.
pub fn reference_kernel_at<T: Real, M: GibbsModel<T> + ?Sized>(
    model: &M,
    schedule: &Schedule<T>,
    horizon: T,
    t: T,
) -> Result<RateKernel<T>> {
    if !(horizon > T::zero()) {
        return Err(Error::InvalidInput(format!("horizon {horizon} must be positive")));
    }
    let s = (t / horizon).max(T::zero()).min(T::one());
    let beta = schedule.beta(s);
    let pi = model.distribution(beta)?;
    let kernel = model.kernel(beta)?;
    let cap = capacity_from_kernel(&kernel, &pi)?;
    let rate = gibbs_rate_of(&pi, model.energy(), schedule.beta_prime(s));
    let md = metric_derivative_sq(&cap, &rate, &pi)?;
    let inv = T::one() / horizon;
    let flux = Flux::new(md.flux.graph().clone(), md.flux.values().iter().map(|&j| j * inv).collect())?;
    reference_kernel(&kernel, &cap, &flux)
}

/// Heat-bath dynamics `p(x, y) = w(x, y) π(y) / (π(x) + π(y))` for symmetric edge weights `w`.
#[derive(Debug, Clone)]
pub struct HeatBathModel<T> {
    graph: Arc<StateGraph>,
    log_base: Vec<T>,
    energy: Vec<T>,
    edge_weights: Vec<T>,
    lipschitz: Option<T>,
}

impl<T: Real> HeatBathModel<T> {
    pub fn new(graph: Arc<StateGraph>, log_base: Vec<T>, energy: Vec<T>, edge_weights: Vec<T>) -> Result<Self> {
        let n = graph.len();
        if log_base.len() != n || energy.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: log_base.len().min(energy.len()) });
        }
        if edge_weights.len() != graph.num_edges() {
            return Err(Error::DimensionMismatch { expected: graph.num_edges(), found: edge_weights.len() });
        }
        if edge_weights.iter().any(|&w| !(w >= T::zero())) {
            return Err(Error::InvalidInput("edge weights must be nonnegative".into()));
        }
        Ok(Self { graph, log_base, energy, edge_weights, lipschitz: None })
    }

    pub fn edge_weights(&self) -> &[T] {
        &self.edge_weights
    }

    /// Replaces the computed `max |ΔH|` by a caller-supplied (larger) constant.
    pub fn with_rate_log_lipschitz(mut self, lipschitz: T) -> Self {
        self.lipschitz = Some(lipschitz);
        self
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

impl<T: Real> GibbsModel<T> for HeatBathModel<T> {
    fn graph(&self) -> &Arc<StateGraph> {
        &self.graph
    }

    fn log_base(&self) -> &[T] {
        &self.log_base
    }

    fn energy(&self) -> &[T] {
        &self.energy
    }

    fn kernel(&self, beta: T) -> Result<RateKernel<T>> {
        let lw = self.log_weights(beta);
        let mut forward = Vec::with_capacity(self.graph.num_edges());
        let mut backward = Vec::with_capacity(self.graph.num_edges());
        for (&(a, b), &w) in self.graph.edges().iter().zip(&self.edge_weights) {
            let d = lw[b] - lw[a];
            forward.push(w * logistic(d));
            backward.push(w * logistic(-d));
        }
        RateKernel::new(self.graph.clone(), forward, backward)
    }

    fn rate_log_lipschitz(&self) -> T {
        if let Some(l) = self.lipschitz {
            return l;
        }
        self.graph.edges().iter().map(|&(a, b)| (self.energy[b] - self.energy[a]).abs()).fold(T::zero(), T::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::action;

    fn path_model() -> HeatBathModel<f64> {
        let g = Arc::new(StateGraph::path(4));
        HeatBathModel::new(g, vec![0.0; 4], vec![0.0, 1.0, 0.5, 2.0], vec![0.5; 3]).unwrap()
    }

    #[test]
    fn heat_bath_is_reversible() {
        let m = path_model();
        for beta in [0.0, 0.7, 3.0] {
            m.pair(beta).unwrap();
        }
    }

    #[test]
    fn gibbs_rate_matches_finite_difference() {
        let m = path_model();
        let sched = Schedule::heating(2.0).unwrap();
        let curve = gibbs_curve(&m, &sched, 11).unwrap();
        assert!(curve.check_consistency(1e-5, 1e-8).is_ok());
    }

    #[test]
    fn constant_schedule_has_zero_action() {
        let m = path_model();
        let sched = Schedule::constant(1.3).unwrap();
        let a = action(&gibbs_curve(&m, &sched, 11).unwrap()).unwrap();
        assert_eq!(a.action, 0.0);
    }
}
