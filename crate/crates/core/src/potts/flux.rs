//! Greedy source–sink matching of a balanced mass rate, routed along prescribed paths.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{Flux, MassRate, StateGraph};
use crate::num::{stable_sum, Real};

/// Balance tolerance of [`greedy_flux`] relative to `‖D‖₁`.
pub const BALANCE_TOLERANCE: f64 = 1e-12;

/// Matched masses `j(x, y)` from sources `D(x) < 0` to sinks `D(y) > 0`, with the path used
/// for each pair.
#[derive(Debug, Clone, Serialize)]
pub struct TransportPlan<T> {
    pub pairs: Vec<(usize, usize, T)>,
    pub paths: BTreeMap<(usize, usize), Vec<usize>>,
}

/// Outcome of [`TransportPlan::check`].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PlanCheck {
    /// `j > 0` only from `D < 0` to `D > 0`.
    pub sign_support: bool,
    /// At most `2|Ω|` matched pairs.
    pub support_size: bool,
    /// `j(x, y) ≤ min(|D(x)|, |D(y)|)`.
    pub pair_bound: bool,
    /// Row and column sums of `j` reproduce `|D|`.
    pub marginals: bool,
    pub max_marginal_residual: f64,
}

impl PlanCheck {
    pub fn all(&self) -> bool {
        self.sign_support && self.support_size && self.pair_bound && self.marginals
    }
}

impl<T: Real> TransportPlan<T> {
    pub fn check(&self, d: &[T]) -> PlanCheck {
        let n = d.len();
        let scale = d.iter().fold(0.0f64, |m, v| m + v.as_f64().abs()).max(1e-300);
        let sign_support = self.pairs.iter().all(|&(x, y, j)| j > T::zero() && d[x] < T::zero() && d[y] > T::zero());
        let pair_bound = self.pairs.iter().all(|&(x, y, j)| j <= d[x].abs().min(d[y].abs()));
        let mut out = vec![Vec::new(); n];
        let mut inn = vec![Vec::new(); n];
        for &(x, y, j) in &self.pairs {
            out[x].push(j);
            inn[y].push(j);
        }
        let mut residual = 0.0f64;
        for (x, &v) in d.iter().enumerate() {
            let sent = stable_sum(out[x].iter().copied());
            let got = stable_sum(inn[x].iter().copied());
            let r = if v < T::zero() { (sent + v).abs() + got.abs() } else { (got - v).abs() + sent.abs() };
            residual = residual.max(r.as_f64());
        }
        PlanCheck {
            sign_support,
            support_size: self.pairs.len() <= 2 * n,
            pair_bound,
            marginals: residual <= 1e-12 * scale,
            max_marginal_residual: residual,
        }
    }
}

/// Pairs the negative support of `D` with its positive support in ascending state order,
/// sending `min(|D(x)|, |D(y)|)` per pair and zeroing the exhausted side, then routes each
/// matched mass along `path_for(x, y)`. The result satisfies `D + div J = 0`.
pub fn greedy_flux<T: Real>(
    d: &MassRate<T>,
    graph: Arc<StateGraph>,
    mut path_for: impl FnMut(usize, usize) -> Result<Vec<usize>>,
) -> Result<(Flux<T>, TransportPlan<T>)> {
    if d.len() != graph.len() {
        return Err(Error::DimensionMismatch { expected: graph.len(), found: d.len() });
    }
    let total = stable_sum(d.iter().copied());
    let scale = d.iter().fold(T::zero(), |m, v| m + v.abs());
    if total.abs() > T::tolerance_floor(BALANCE_TOLERANCE) * scale.max(T::min_positive_value()) {
        return Err(Error::UnbalancedD { residual: total.as_f64() });
    }
    let mut rem: Vec<T> = d.as_slice().to_vec();
    let neg: Vec<usize> = (0..rem.len()).filter(|&x| rem[x] < T::zero()).collect();
    let pos: Vec<usize> = (0..rem.len()).filter(|&x| rem[x] > T::zero()).collect();
    let mut plan = TransportPlan { pairs: Vec::new(), paths: BTreeMap::new() };
    let mut flux = Flux::zeros(graph);
    let (mut i, mut k) = (0, 0);
    while i < neg.len() && k < pos.len() {
        let (x, y) = (neg[i], pos[k]);
        let (dx, dy) = (-rem[x], rem[y]);
        let j = dx.min(dy);
        if dx <= dy {
            rem[x] = T::zero();
            rem[y] = if dx == dy { T::zero() } else { dy - j };
            i += 1;
            if dx == dy {
                k += 1;
            }
        } else {
            rem[y] = T::zero();
            rem[x] = -(dx - j);
            k += 1;
        }
        if j > T::zero() {
            let path = path_for(x, y)?;
            if path.first() != Some(&x) || path.last() != Some(&y) {
                return Err(Error::BrokenPath { x, y, step: 0 });
            }
            flux.add_path(&path, j)?;
            plan.pairs.push((x, y, j));
            plan.paths.insert((x, y), path);
        }
    }
    Ok((flux, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::divergence;

    #[test]
    fn zero_rate_gives_empty_plan() {
        let g = Arc::new(StateGraph::path(3));
        let (f, plan) = greedy_flux(&MassRate::<f64>::zeros(3), g, |x, y| Ok(vec![x, y])).unwrap();
        assert!(plan.pairs.is_empty());
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn three_state_example() {
        let g = Arc::new(StateGraph::complete(3));
        let d = MassRate::<f64>::new(vec![-1.0, 0.4, 0.6]).unwrap();
        let (f, plan) = greedy_flux(&d, g, |x, y| Ok(vec![x, y])).unwrap();
        assert_eq!(plan.pairs.len(), 2);
        assert_eq!((plan.pairs[0].0, plan.pairs[0].1), (0, 1));
        assert!((plan.pairs[0].2 - 0.4).abs() < 1e-15);
        assert!((plan.pairs[1].2 - 0.6).abs() < 1e-15);
        let div = divergence(&f);
        for (a, b) in d.iter().zip(div.iter()) {
            assert!((a + b).abs() < 1e-15);
        }
        assert!(plan.check(&d).all());
    }

    #[test]
    fn unbalanced_is_rejected() {
        let g = Arc::new(StateGraph::path(2));
        let d = MassRate::unchecked(vec![-1.0, 0.5]);
        assert!(matches!(greedy_flux(&d, g, |x, y| Ok(vec![x, y])), Err(Error::UnbalancedD { .. })));
    }
}
