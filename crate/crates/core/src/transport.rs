//! Continuity-equation solves, squared metric derivatives, the fixed-capacity
//! Wasserstein distance `W_{c,2}`, and action quadrature along curves of measures.
//!
//! Sign convention: a potential `ψ` is admissible for a mass rate `r` when
//! `Σ_y (ψ(y) - ψ(x)) c(x, y) = -r(x)` for every state, and the induced flux is
//! `J(x, y) = (ψ(y) - ψ(x)) c(x, y)`, so that `r + div J = 0`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Capacity, Flux, MassRate, ProbVector};
use crate::linalg::{DenseMatrix, Lu};
use crate::num::{stable_sum, Real};
use crate::quadrature::{simpson_with_error, UniformGrid};

/// Relative residual bound for potential solves.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

/// Potential canonicalized to zero mean under a reference distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Potential<T> {
    values: Vec<T>,
}

impl<T: Real> Potential<T> {
    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }
}

fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// `(L_c ψ)(x) = Σ_y c(x, y) (ψ(x) - ψ(y))`.
pub fn laplacian_apply<T: Real>(capacity: &Capacity<T>, psi: &[T]) -> Vec<T> {
    let g = capacity.graph();
    let mut out = vec![T::zero(); g.len()];
    for (&(a, b), &c) in g.edges().iter().zip(capacity.weights()) {
        let d = c * (psi[a] - psi[b]);
        out[a] += d;
        out[b] -= d;
    }
    out
}

/// Solves `L_c ψ = rate` with one state pinned, then shifts to zero mean under `reference`.
///
/// The reduced system is symmetrically diagonally scaled, solved by LU and refined once.
/// The returned potential satisfies `‖L_c ψ - rate‖_∞ ≤ 1e-10 ‖rate‖_∞`.
pub fn solve_continuity_potential<T: Real>(capacity: &Capacity<T>, rate: &MassRate<T>, reference: &ProbVector<T>) -> Result<Potential<T>> {
    let g = capacity.graph();
    let n = g.len();
    check_len(n, rate.len())?;
    check_len(n, reference.len())?;
    if !capacity.is_connected() {
        return Err(Error::DisconnectedCapacity);
    }
    if n == 1 || rate.is_zero() {
        return Ok(Potential { values: vec![T::zero(); n] });
    }

    let mut diag = vec![T::zero(); n];
    for (&(a, b), &c) in g.edges().iter().zip(capacity.weights()) {
        diag[a] += c;
        diag[b] += c;
    }
    let pin = (0..n).fold(0, |best, i| if diag[i] > diag[best] { i } else { best });
    let free: Vec<usize> = (0..n).filter(|&i| i != pin).collect();
    let mut slot = vec![usize::MAX; n];
    for (k, &i) in free.iter().enumerate() {
        slot[i] = k;
    }
    let scale: Vec<T> = free.iter().map(|&i| T::one() / diag[i].sqrt()).collect();
    let m = free.len();
    let mut a = DenseMatrix::zeros(m);
    for (k, &i) in free.iter().enumerate() {
        a[(k, k)] = diag[i] * scale[k] * scale[k];
    }
    for (&(x, y), &c) in g.edges().iter().zip(capacity.weights()) {
        if c == T::zero() || x == pin || y == pin {
            continue;
        }
        let (kx, ky) = (slot[x], slot[y]);
        let v = -c * scale[kx] * scale[ky];
        a[(kx, ky)] += v;
        a[(ky, kx)] += v;
    }
    let lu = Lu::factor(&a).ok_or(Error::SingularSolve { residual: f64::INFINITY, bound: 0.0 })?;

    let mut psi = vec![T::zero(); n];
    let solve_into = |rhs: &[T], psi: &mut [T]| {
        let b: Vec<T> = free.iter().enumerate().map(|(k, &i)| rhs[i] * scale[k]).collect();
        let y = lu.solve(&b);
        for (k, &i) in free.iter().enumerate() {
            psi[i] += y[k] * scale[k];
        }
    };
    solve_into(rate.as_slice(), &mut psi);
    let applied = laplacian_apply(capacity, &psi);
    let resid: Vec<T> = rate.iter().zip(&applied).map(|(&r, &l)| r - l).collect();
    solve_into(&resid, &mut psi);

    let mean = stable_sum(psi.iter().zip(reference.iter()).map(|(&p, &w)| p * w));
    for p in &mut psi {
        *p -= mean;
    }

    let applied = laplacian_apply(capacity, &psi);
    let residual = rate.iter().zip(&applied).fold(T::zero(), |m, (&r, &l)| m.max((r - l).abs()));
    let bound = T::tolerance_floor(SOLVE_TOLERANCE) * rate.norm_inf();
    if !(residual <= bound) {
        return Err(Error::SingularSolve { residual: residual.as_f64(), bound: bound.as_f64() });
    }
    Ok(Potential { values: psi })
}

/// `½ Σ_{x,y} (ψ(x) - ψ(y))² c(x, y)`, i.e. the sum over undirected edges.
pub fn potential_energy<T: Real>(capacity: &Capacity<T>, psi: &[T]) -> T {
    let g = capacity.graph();
    stable_sum(g.edges().iter().zip(capacity.weights()).map(|(&(a, b), &c)| {
        let d = psi[b] - psi[a];
        d * d * c
    }))
}

/// Flux `J(x, y) = (ψ(y) - ψ(x)) c(x, y)` induced by a potential.
pub fn potential_flux<T: Real>(capacity: &Capacity<T>, psi: &[T]) -> Flux<T> {
    let g = capacity.graph();
    let values = g.edges().iter().zip(capacity.weights()).map(|(&(a, b), &c)| (psi[b] - psi[a]) * c).collect();
    Flux::new(g.clone(), values).expect("edge-aligned values")
}

/// Squared metric derivative with its optimal flux and potential.
#[derive(Debug, Clone)]
pub struct MetricDerivative<T> {
    pub value: T,
    pub flux: Flux<T>,
    pub potential: Potential<T>,
}

/// `|π̇|² = ½ Σ (ψ(x) - ψ(y))² c(x, y)` for the admissible potential of `rate`.
pub fn metric_derivative_sq<T: Real>(capacity: &Capacity<T>, rate: &MassRate<T>, reference: &ProbVector<T>) -> Result<MetricDerivative<T>> {
    let potential = solve_continuity_potential(capacity, rate, reference)?;
    let value = potential_energy(capacity, potential.as_slice());
    let flux = potential_flux(capacity, potential.as_slice());
    Ok(MetricDerivative { value, flux, potential })
}

/// `½ Σ_{x,y} J(x, y)² / c(x, y)`; errors on flux through a zero-capacity edge.
pub fn flux_cost<T: Real>(capacity: &Capacity<T>, flux: &Flux<T>) -> Result<T> {
    let g = capacity.graph();
    check_len(g.num_edges(), flux.values().len())?;
    let mut terms = Vec::with_capacity(g.num_edges());
    for (e, (&c, &j)) in capacity.weights().iter().zip(flux.values()).enumerate() {
        if j == T::zero() {
            continue;
        }
        if c == T::zero() {
            let (x, y) = g.edges()[e];
            return Err(Error::ZeroCapacityEdge { x, y });
        }
        terms.push(j * j / c);
    }
    Ok(stable_sum(terms))
}

/// `W_{c,2}(μ, ν)`: root of the squared metric derivative for the rate `ν - μ`.
pub fn wc2_distance<T: Real>(capacity: &Capacity<T>, mu: &ProbVector<T>, nu: &ProbVector<T>) -> Result<T> {
    let rate = MassRate::difference(nu, mu)?;
    let v = metric_derivative_sq(capacity, &rate, mu)?.value;
    Ok(v.max(T::zero()).sqrt())
}

/// `‖∂ log π‖²_{L²(π)} = Σ_x rate(x)² / π(x)`.
pub fn log_derivative_norm_sq<T: Real>(pi: &ProbVector<T>, rate: &MassRate<T>) -> T {
    stable_sum(pi.iter().zip(rate.iter()).map(|(&p, &r)| r * r / p))
}

type MeasureFn<'a, T> = Box<dyn Fn(T) -> Result<ProbVector<T>> + Send + Sync + 'a>;
type RateFn<'a, T> = Box<dyn Fn(T) -> Result<MassRate<T>> + Send + Sync + 'a>;
type CapacityFn<'a, T> = Box<dyn Fn(T) -> Result<Capacity<T>> + Send + Sync + 'a>;

/// Step of the central difference used for curves without an analytic rate.
pub const FINITE_DIFFERENCE_STEP: f64 = 1e-5;

/// A curve of measures with its mass rate and capacity, sampled on a uniform grid.
pub struct CurveSpec<'a, T> {
    grid: UniformGrid<T>,
    measure: MeasureFn<'a, T>,
    rate: RateFn<'a, T>,
    capacity: CapacityFn<'a, T>,
}

impl<'a, T: Real> CurveSpec<'a, T> {
    pub fn new(
        grid: UniformGrid<T>,
        measure: impl Fn(T) -> Result<ProbVector<T>> + Send + Sync + 'a,
        rate: impl Fn(T) -> Result<MassRate<T>> + Send + Sync + 'a,
        capacity: impl Fn(T) -> Result<Capacity<T>> + Send + Sync + 'a,
    ) -> Self {
        Self { grid, measure: Box::new(measure), rate: Box::new(rate), capacity: Box::new(capacity) }
    }

    /// Curve whose rate is the central difference of the measure with step `1e-5`.
    pub fn with_finite_difference_rate(
        grid: UniformGrid<T>,
        measure: impl Fn(T) -> Result<ProbVector<T>> + Send + Sync + Clone + 'a,
        capacity: impl Fn(T) -> Result<Capacity<T>> + Send + Sync + 'a,
    ) -> Self {
        let m2 = measure.clone();
        let rate = move |s: T| central_difference(&m2, s, T::of(FINITE_DIFFERENCE_STEP));
        Self::new(grid, measure, rate, capacity)
    }

    pub fn grid(&self) -> &UniformGrid<T> {
        &self.grid
    }

    pub fn measure_at(&self, s: T) -> Result<ProbVector<T>> {
        (self.measure)(s)
    }

    pub fn rate_at(&self, s: T) -> Result<MassRate<T>> {
        (self.rate)(s)
    }

    pub fn capacity_at(&self, s: T) -> Result<Capacity<T>> {
        (self.capacity)(s)
    }

    /// Squared metric derivative at parameter `s`.
    pub fn metric_derivative_at(&self, s: T) -> Result<MetricDerivative<T>> {
        let pi = self.measure_at(s)?;
        let rate = self.rate_at(s)?;
        let cap = self.capacity_at(s)?;
        metric_derivative_sq(&cap, &rate, &pi)
    }

    /// Largest sup-norm gap between the rate evaluator and a central difference of the
    /// measure over the grid; errors if it exceeds `tol`.
    pub fn check_consistency(&self, h: T, tol: T) -> Result<T> {
        let mut worst = T::zero();
        for s in self.grid.points() {
            let fd = central_difference(&self.measure, s, h)?;
            let r = self.rate_at(s)?;
            let gap = fd.iter().zip(r.iter()).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
            worst = worst.max(gap);
        }
        if worst > tol {
            return Err(Error::InvalidInput(format!("rate evaluator deviates from finite differences by {worst}")));
        }
        Ok(worst)
    }
}

fn central_difference<T: Real>(measure: &(impl Fn(T) -> Result<ProbVector<T>> + ?Sized), s: T, h: T) -> Result<MassRate<T>> {
    let plus = measure(s + h)?;
    let minus = measure(s - h)?;
    let two_h = h + h;
    Ok(MassRate::unchecked(plus.iter().zip(minus.iter()).map(|(&a, &b)| (a - b) / two_h).collect()))
}

/// Action of a curve: Simpson quadrature of per-node squared metric derivatives.
#[derive(Debug, Clone, Serialize)]
pub struct ActionReport<T> {
    pub action: T,
    pub grid: Vec<T>,
    pub samples: Vec<T>,
    pub rule: &'static str,
    pub error_estimate: T,
}

impl<T: Real> ActionReport<T> {
    /// Report from precomputed nonnegative samples on a uniform grid.
    pub fn from_samples(grid: &UniformGrid<T>, samples: Vec<T>) -> Self {
        let (action, error_estimate) = simpson_with_error(&samples, grid.step());
        Self { action, grid: grid.points(), samples, rule: "composite-simpson", error_estimate }
    }
}

/// Evaluates `s ↦ |π̇|_s²` at every grid node (in parallel) and integrates.
pub fn action<T: Real>(curve: &CurveSpec<'_, T>) -> Result<ActionReport<T>> {
    let grid = *curve.grid();
    let evaluated: Vec<Result<T>> = (0..grid.nodes)
        .into_par_iter()
        .map(|i| {
            let s = grid.point(i);
            curve.metric_derivative_at(s).map(|m| m.value).map_err(|e| Error::AtGridNode { index: i, s: s.as_f64(), source: Box::new(e) })
        })
        .collect();
    let samples = evaluated.into_iter().collect::<Result<Vec<T>>>()?;
    Ok(ActionReport::from_samples(&grid, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::StateGraph;
    use std::sync::Arc;

    #[test]
    fn two_state_closed_forms() {
        let g = Arc::new(StateGraph::path(2));
        let cap = Capacity::<f64>::new(g, vec![0.5]).unwrap();
        let rate = MassRate::<f64>::new(vec![-0.2, 0.2]).unwrap();
        let pi = ProbVector::uniform(2);
        let psi = solve_continuity_potential(&cap, &rate, &pi).unwrap();
        assert!((psi.as_slice()[1] - psi.as_slice()[0] - 0.4).abs() < 1e-14);
        let md = metric_derivative_sq(&cap, &rate, &pi).unwrap();
        assert!((md.value - 0.08).abs() < 1e-14);
        assert!((md.flux.get(0, 1) - 0.2).abs() < 1e-14);
    }

    #[test]
    fn three_state_path_potential() {
        let g = Arc::new(StateGraph::path(3));
        let cap = Capacity::<f64>::new(g, vec![1.0, 1.0]).unwrap();
        let rate = MassRate::<f64>::new(vec![-1.0, 0.0, 1.0]).unwrap();
        let psi = solve_continuity_potential(&cap, &rate, &ProbVector::uniform(3)).unwrap();
        for (p, e) in psi.as_slice().iter().zip([-1.0, 0.0, 1.0]) {
            assert!((p - e).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_rate_gives_zero_potential() {
        let g = Arc::new(StateGraph::complete(4));
        let cap = Capacity::<f64>::new(g, vec![1.0; 6]).unwrap();
        let md = metric_derivative_sq(&cap, &MassRate::zeros(4), &ProbVector::uniform(4)).unwrap();
        assert_eq!(md.value, 0.0);
        assert!(md.flux.values().iter().all(|&j| j == 0.0));
    }

    #[test]
    fn disconnected_capacity_is_rejected() {
        let g = Arc::new(StateGraph::path(3));
        let cap = Capacity::<f64>::new(g, vec![1.0, 0.0]).unwrap();
        let rate = MassRate::<f64>::new(vec![-1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(solve_continuity_potential(&cap, &rate, &ProbVector::uniform(3)), Err(Error::DisconnectedCapacity)));
    }

    #[test]
    fn flux_cost_examples() {
        let c3 = Arc::new(StateGraph::cycle(3));
        let cap = Capacity::<f64>::new(c3.clone(), vec![1.0; 3]).unwrap();
        let mut circ = Flux::<f64>::zeros(c3);
        circ.add_path(&[0, 1, 2, 0], 1.0).unwrap();
        assert!((flux_cost(&cap, &circ).unwrap() - 3.0).abs() < 1e-15);
        let g = Arc::new(StateGraph::path(2));
        let cap = Capacity::<f64>::new(g.clone(), vec![0.5]).unwrap();
        let f = Flux::new(g.clone(), vec![0.2]).unwrap();
        assert!((flux_cost(&cap, &f).unwrap() - 0.08).abs() < 1e-15);
        assert_eq!(flux_cost(&cap, &Flux::zeros(g.clone())).unwrap(), 0.0);
        let zero = Capacity::<f64>::new(g, vec![0.0]).unwrap();
        assert!(matches!(flux_cost(&zero, &f), Err(Error::ZeroCapacityEdge { .. })));
    }

    #[test]
    fn wc2_two_state() {
        let g = Arc::new(StateGraph::path(2));
        let cap = Capacity::<f64>::new(g, vec![1.0]).unwrap();
        let mu = ProbVector::new(vec![0.3, 0.7]).unwrap();
        let nu = ProbVector::new(vec![0.5, 0.5]).unwrap();
        assert!((wc2_distance(&cap, &mu, &nu).unwrap() - 0.2).abs() < 1e-14);
        assert_eq!(wc2_distance(&cap, &mu, &mu).unwrap(), 0.0);
    }

    #[test]
    fn constant_curve_has_zero_action() {
        let g = Arc::new(StateGraph::path(3));
        let cap = Capacity::<f64>::new(g, vec![1.0, 2.0]).unwrap();
        let curve = CurveSpec::new(
            UniformGrid::unit(11).unwrap(),
            |_| Ok(ProbVector::uniform(3)),
            |_| Ok(MassRate::zeros(3)),
            move |_| Ok(cap.clone()),
        );
        let rep = action(&curve).unwrap();
        assert_eq!(rep.action, 0.0);
        assert_eq!(rep.samples.len(), 11);
    }
}
