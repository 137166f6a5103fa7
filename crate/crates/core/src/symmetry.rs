//! Projections of a state space onto a quotient: pushforwards of measures, rates and
//! capacities, symmetry checks, and metric-derivative comparisons across the quotient.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Capacity, MassRate, ProbVector, StateGraph};
use crate::markov::RateKernel;
use crate::num::{stable_sum, Real};
use crate::transport::metric_derivative_sq;

/// Relative tolerance of [`Projection::verify_symmetry`].
pub const SYMMETRY_RTOL: f64 = 1e-10;

/// Surjection `Π: Ω → Ω̄` with materialized fibers and the induced quotient graph.
#[derive(Debug, Clone)]
pub struct Projection {
    source: Arc<StateGraph>,
    map: Vec<usize>,
    fibers: Vec<Vec<usize>>,
    graph: Arc<StateGraph>,
}

impl Projection {
    /// `map[x]` is the quotient index of `x`; `labels` names the quotient states.
    pub fn new(source: Arc<StateGraph>, map: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        if map.len() != source.len() {
            return Err(Error::DimensionMismatch { expected: source.len(), found: map.len() });
        }
        let k = labels.len();
        let mut fibers = vec![Vec::new(); k];
        for (x, &a) in map.iter().enumerate() {
            if a >= k {
                return Err(Error::InvalidInput(format!("state {x} maps to {a}, beyond {k} quotient states")));
            }
            fibers[a].push(x);
        }
        if let Some(a) = fibers.iter().position(Vec::is_empty) {
            return Err(Error::InvalidInput(format!("quotient state {a} has an empty fiber")));
        }
        let edges: BTreeSet<(usize, usize)> = source
            .edges()
            .iter()
            .filter_map(|&(x, y)| {
                let (a, b) = (map[x], map[y]);
                (a != b).then(|| (a.min(b), a.max(b)))
            })
            .collect();
        let graph = Arc::new(StateGraph::new(labels, edges)?);
        Ok(Self { source, map, fibers, graph })
    }

    pub fn identity(source: Arc<StateGraph>) -> Self {
        let n = source.len();
        Self { map: (0..n).collect(), fibers: (0..n).map(|x| vec![x]).collect(), graph: source.clone(), source }
    }

    /// `other ∘ self`.
    pub fn compose(&self, other: &Projection) -> Result<Self> {
        if other.source.len() != self.graph.len() {
            return Err(Error::DimensionMismatch { expected: self.graph.len(), found: other.source.len() });
        }
        let map = self.map.iter().map(|&a| other.map[a]).collect();
        Self::new(self.source.clone(), map, other.graph.labels().to_vec())
    }

    pub fn source(&self) -> &Arc<StateGraph> {
        &self.source
    }

    pub fn graph(&self) -> &Arc<StateGraph> {
        &self.graph
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn fibers(&self) -> &[Vec<usize>] {
        &self.fibers
    }

    /// Fiber sums of an arbitrary state function.
    pub fn push_forward<T: Real>(&self, values: &[T]) -> Vec<T> {
        self.fibers.iter().map(|f| stable_sum(f.iter().map(|&x| values[x]))).collect()
    }

    pub fn project_measure<T: Real>(&self, mu: &ProbVector<T>) -> Result<ProbVector<T>> {
        ProbVector::new(self.push_forward(mu.as_slice()))
    }

    pub fn project_rate<T: Real>(&self, rate: &MassRate<T>) -> Result<MassRate<T>> {
        MassRate::new(self.push_forward(rate.as_slice()))
    }

    /// `c̄(a, b) = Σ_{x ∈ Π⁻¹a, y ∈ Π⁻¹b} c(x, y)`; edges inside a fiber are dropped.
    pub fn project_capacity<T: Real>(&self, capacity: &Capacity<T>) -> Result<Capacity<T>> {
        let mut parts: Vec<Vec<T>> = vec![Vec::new(); self.graph.num_edges()];
        for (&(x, y), &c) in capacity.graph().edges().iter().zip(capacity.weights()) {
            let (a, b) = (self.map[x], self.map[y]);
            if a == b {
                continue;
            }
            let e = self.graph.edge_index(a, b).expect("quotient edge exists for every crossing edge");
            parts[e].push(c);
        }
        Capacity::new(self.graph.clone(), parts.into_iter().map(stable_sum).collect())
    }

    /// Checks that `π` is constant on fibers and that `Π_# p(x, ·)` depends on `x` only
    /// through `Π(x)`. Failures are reported, not raised.
    pub fn verify_symmetry<T: Real>(&self, pi: &ProbVector<T>, kernel: &RateKernel<T>) -> SymmetryReport {
        let rtol = T::tolerance_floor(SYMMETRY_RTOL).as_f64();
        let mut report = SymmetryReport::default();
        let k = self.graph.len();
        for (a, fiber) in self.fibers.iter().enumerate() {
            let x0 = fiber[0];
            let p0 = pi[x0].as_f64();
            for &x in &fiber[1..] {
                let px = pi[x].as_f64();
                let rel = (px - p0).abs() / px.max(p0);
                if rel > report.measure_violation {
                    report.measure_violation = rel;
                    report.measure_fiber = Some(a);
                }
            }
            let row = |x: usize| {
                let mut v = vec![0.0f64; k];
                for &(y, e) in kernel.graph().neighbors(x) {
                    let b = self.map[y];
                    if b != a {
                        v[b] += kernel.rate_on_edge(e, x).as_f64();
                    }
                }
                v
            };
            let r0 = row(x0);
            let scale = r0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for &x in &fiber[1..] {
                let rx = row(x);
                let s = scale.max(rx.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                if s == 0.0 {
                    continue;
                }
                let gap = r0.iter().zip(&rx).fold(0.0f64, |m, (u, v)| m.max((u - v).abs())) / s;
                if gap > report.kernel_violation {
                    report.kernel_violation = gap;
                    report.kernel_fiber = Some(a);
                }
            }
        }
        report.pass = report.measure_violation <= rtol && report.kernel_violation <= rtol;
        report
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SymmetryReport {
    /// Worst relative spread of `π` within a fiber.
    pub measure_violation: f64,
    pub measure_fiber: Option<usize>,
    /// Worst relative gap between pushed-forward off-fiber kernel rows within a fiber.
    pub kernel_violation: f64,
    pub kernel_fiber: Option<usize>,
    pub pass: bool,
}

/// Measure, mass rate and capacity of a curve at one parameter value.
#[derive(Debug, Clone)]
pub struct ChainInstance<T> {
    pub measure: ProbVector<T>,
    pub rate: MassRate<T>,
    pub capacity: Capacity<T>,
}

impl<T: Real> ChainInstance<T> {
    /// Pushforward of every component.
    pub fn project(&self, proj: &Projection) -> Result<Self> {
        Ok(Self {
            measure: proj.project_measure(&self.measure)?,
            rate: proj.project_rate(&self.rate)?,
            capacity: proj.project_capacity(&self.capacity)?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricComparison {
    pub full: f64,
    pub projected: f64,
    /// `|full - projected| / max(full, projected)`, zero when both vanish.
    pub relative_gap: f64,
    pub symmetry: SymmetryReport,
}

/// Squared metric derivatives on both sides of the projection, gated on the symmetry check
/// of the full chain (kernel recovered as `c / π`).
pub fn compare_metric_derivative<T: Real>(
    proj: &Projection,
    full: &ChainInstance<T>,
    projected: &ChainInstance<T>,
) -> Result<MetricComparison> {
    let kernel = RateKernel::from_capacity(&full.capacity, &full.measure)?;
    let symmetry = proj.verify_symmetry(&full.measure, &kernel);
    if !symmetry.pass {
        return Err(Error::SymmetryViolated(format!(
            "measure spread {:.3e} (fiber {:?}), kernel gap {:.3e} (fiber {:?})",
            symmetry.measure_violation, symmetry.measure_fiber, symmetry.kernel_violation, symmetry.kernel_fiber
        )));
    }
    let a = metric_derivative_sq(&full.capacity, &full.rate, &full.measure)?.value.as_f64();
    let b = metric_derivative_sq(&projected.capacity, &projected.rate, &projected.measure)?.value.as_f64();
    let big = a.abs().max(b.abs());
    let relative_gap = if big == 0.0 { 0.0 } else { (a - b).abs() / big };
    Ok(MetricComparison { full: a, projected: b, relative_gap, symmetry })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Arc<StateGraph> {
        Arc::new(StateGraph::cycle(4))
    }

    #[test]
    fn identity_is_neutral() {
        let g = square();
        let p = Projection::identity(g.clone());
        let mu = ProbVector::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(p.project_measure(&mu).unwrap(), mu);
        let c = Capacity::<f64>::new(g, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(p.project_capacity(&c).unwrap().weights(), c.weights());
    }

    #[test]
    fn collapse_to_point_has_no_edges() {
        let g = square();
        let p = Projection::new(g.clone(), vec![0; 4], vec!["*".into()]).unwrap();
        let c = Capacity::<f64>::new(g, vec![1.0; 4]).unwrap();
        assert_eq!(p.project_capacity(&c).unwrap().weights().len(), 0);
    }

    #[test]
    fn empty_fibers_are_rejected() {
        assert!(Projection::new(square(), vec![0; 4], vec!["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn biased_kernel_fails_symmetry() {
        let g = square();
        // Opposite corners 0 and 2 share a fiber, as do 1 and 3.
        let p = Projection::new(g.clone(), vec![0, 1, 0, 1], vec!["even".into(), "odd".into()]).unwrap();
        let k = RateKernel::<f64>::from_fn(g.clone(), |x, _| if x == 0 { 0.5 } else { 0.25 }).unwrap();
        let r = p.verify_symmetry(&ProbVector::uniform(4), &k);
        assert!(!r.pass);
        assert_eq!(r.kernel_fiber, Some(0));
        let fair = RateKernel::<f64>::from_fn(g, |_, _| 0.25).unwrap();
        assert!(p.verify_symmetry(&ProbVector::uniform(4), &fair).pass);
    }
}
