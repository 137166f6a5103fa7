//! State spaces, distributions, capacities and fluxes.
//!
//! States are indexed densely. Every undirected edge is stored once as `(lo, hi)` with
//! `lo < hi`; edge-indexed data (capacities, flux values, rates) share that index.
//! Signed edge quantities store the value for the canonical orientation, which makes
//! antisymmetry structural.

use std::collections::HashMap;
use std::ops::Deref;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::num::{stable_sum, Real};

/// Tolerance on sum constraints of probability vectors and mass rates.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateGraph {
    labels: Vec<String>,
    edges: Vec<(usize, usize)>,
    edge_index: HashMap<(usize, usize), usize>,
    /// Per state: `(neighbor, edge index)`, ordered by neighbor.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl StateGraph {
    /// Builds a graph from labels and unordered pairs. Duplicate pairs are merged;
    /// self-loops and out-of-range indices are rejected.
    pub fn new(labels: Vec<String>, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let n = labels.len();
        let mut canon: Vec<(usize, usize)> = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at state {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) out of range for {n} states")));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        canon.dedup();
        let mut edge_index = HashMap::with_capacity(canon.len());
        let mut adjacency = vec![Vec::new(); n];
        for (e, &(a, b)) in canon.iter().enumerate() {
            edge_index.insert((a, b), e);
            adjacency[a].push((b, e));
            adjacency[b].push((a, e));
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Ok(Self { labels, edges: canon, edge_index, adjacency })
    }

    /// Graph on `n` states labelled by their index.
    pub fn indexed(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::new((0..n).map(|i| i.to_string()).collect(), edges)
    }

    pub fn path(n: usize) -> Self {
        Self::indexed(n, (1..n).map(|i| (i - 1, i))).expect("path graph is valid")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "cycle needs at least 3 states");
        Self::indexed(n, (0..n).map(|i| (i, (i + 1) % n))).expect("cycle graph is valid")
    }

    pub fn complete(n: usize) -> Self {
        Self::indexed(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)))).expect("complete graph is valid")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    /// Canonical edges `(lo, hi)`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Index of the undirected edge `{x, y}` in either orientation.
    pub fn edge_index(&self, x: usize, y: usize) -> Option<usize> {
        self.edge_index.get(&(x.min(y), x.max(y))).copied()
    }

    pub fn neighbors(&self, x: usize) -> &[(usize, usize)] {
        &self.adjacency[x]
    }

    /// Connectivity of the unweighted graph.
    pub fn is_connected(&self) -> bool {
        self.connected_with(|_| true)
    }

    /// Connectivity using only edges accepted by `keep`.
    pub(crate) fn connected_with(&self, keep: impl Fn(usize) -> bool) -> bool {
        let n = self.len();
        if n <= 1 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(x) = stack.pop() {
            for &(y, e) in &self.adjacency[x] {
                if !seen[y] && keep(e) {
                    seen[y] = true;
                    count += 1;
                    stack.push(y);
                }
            }
        }
        count == n
    }
}

/// Strictly positive probability vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbVector<T> {
    values: Vec<T>,
}

impl<T: Real> ProbVector<T> {
    /// Validates positivity and `|Σ - 1| ≤ 1e-12`; never renormalizes.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDistribution("empty vector".into()));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidDistribution(format!("entry {i} = {v} is not positive")));
        }
        let sum = stable_sum(values.iter().copied());
        if (sum - T::one()).abs() > T::tolerance_floor(SUM_TOLERANCE) {
            return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
        }
        Ok(Self { values })
    }

    /// Explicit renormalization of positive weights.
    pub fn normalize(weights: Vec<T>) -> Result<Self> {
        let sum = stable_sum(weights.iter().copied());
        if !(sum > T::zero()) || !sum.is_finite() {
            return Err(Error::InvalidDistribution(format!("weights sum to {sum}")));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    /// Normalizes log-weights through log-sum-exp.
    pub fn from_log_weights(log_weights: &[T]) -> Result<Self> {
        Self::normalize(crate::num::softmax(log_weights))
    }

    pub fn uniform(n: usize) -> Self {
        let v = T::one() / T::of_usize(n);
        Self { values: vec![v; n] }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    /// Convex combination `(1 - t) self + t other`.
    pub fn mix(&self, other: &Self, t: T) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), found: other.len() });
        }
        Self::normalize(self.values.iter().zip(&other.values).map(|(&a, &b)| (T::one() - t) * a + t * b).collect())
    }
}

impl<T> Deref for ProbVector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.values
    }
}

/// Tangent vector to the simplex: entries sum to zero.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct MassRate<T> {
    values: Vec<T>,
}

impl<T: Real> MassRate<T> {
    /// Validates `|Σ| ≤ 1e-12 · max(1, ‖·‖₁)`.
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("mass rate entry {i} = {v} is not finite")));
        }
        let sum = stable_sum(values.iter().copied());
        let l1: T = values.iter().map(|v| v.abs()).sum();
        if sum.abs() > T::tolerance_floor(SUM_TOLERANCE) * l1.max(T::one()) {
            return Err(Error::InvalidInput(format!("mass rate sums to {sum}")));
        }
        Ok(Self { values })
    }

    pub(crate) fn unchecked(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![T::zero(); n] }
    }

    /// `nu - mu`.
    pub fn difference(nu: &[T], mu: &[T]) -> Result<Self> {
        if nu.len() != mu.len() {
            return Err(Error::DimensionMismatch { expected: nu.len(), found: mu.len() });
        }
        Self::new(nu.iter().zip(mu).map(|(&a, &b)| a - b).collect())
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn norm_inf(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == T::zero())
    }
}

impl<T> Deref for MassRate<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.values
    }
}

/// Nonnegative symmetric edge weights on a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Capacity<T> {
    graph: Arc<StateGraph>,
    weights: Vec<T>,
}

impl<T: Real> Capacity<T> {
    /// One weight per canonical edge of `graph`.
    pub fn new(graph: Arc<StateGraph>, weights: Vec<T>) -> Result<Self> {
        if weights.len() != graph.num_edges() {
            return Err(Error::DimensionMismatch { expected: graph.num_edges(), found: weights.len() });
        }
        if let Some((e, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidInput(format!("capacity on edge {e} is {w}")));
        }
        Ok(Self { graph, weights })
    }

    pub fn from_fn(graph: Arc<StateGraph>, f: impl Fn(usize, usize) -> T) -> Result<Self> {
        let weights = graph.edges().iter().map(|&(a, b)| f(a, b)).collect();
        Self::new(graph, weights)
    }

    pub fn graph(&self) -> &Arc<StateGraph> {
        &self.graph
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// `c(x, y) = c(y, x)`; zero off the edge set.
    pub fn get(&self, x: usize, y: usize) -> T {
        self.graph.edge_index(x, y).map_or(T::zero(), |e| self.weights[e])
    }

    pub fn total(&self) -> T {
        stable_sum(self.weights.iter().copied())
    }

    /// True iff the strictly positive edges connect every state.
    pub fn is_connected(&self) -> bool {
        self.graph.connected_with(|e| self.weights[e] > T::zero())
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { graph: self.graph.clone(), weights: self.weights.iter().map(|&w| w * s).collect() }
    }
}

/// True iff the positive-capacity subgraph is connected.
pub fn is_connected<T: Real>(capacity: &Capacity<T>) -> bool {
    capacity.is_connected()
}

/// Antisymmetric edge function; stores `J(lo, hi)` per canonical edge.
#[derive(Debug, Clone, PartialEq)]
pub struct Flux<T> {
    graph: Arc<StateGraph>,
    values: Vec<T>,
}

impl<T: Real> Flux<T> {
    pub fn new(graph: Arc<StateGraph>, values: Vec<T>) -> Result<Self> {
        if values.len() != graph.num_edges() {
            return Err(Error::DimensionMismatch { expected: graph.num_edges(), found: values.len() });
        }
        Ok(Self { graph, values })
    }

    pub fn zeros(graph: Arc<StateGraph>) -> Self {
        let m = graph.num_edges();
        Self { graph, values: vec![T::zero(); m] }
    }

    pub fn graph(&self) -> &Arc<StateGraph> {
        &self.graph
    }

    /// Values on canonical orientations.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `J(x, y)`; `-J(y, x)` by construction, zero off the edge set.
    pub fn get(&self, x: usize, y: usize) -> T {
        match self.graph.edge_index(x, y) {
            Some(e) if x < y => self.values[e],
            Some(e) => -self.values[e],
            None => T::zero(),
        }
    }

    /// Adds `amount` of flow in direction `x → y`.
    pub fn add(&mut self, x: usize, y: usize, amount: T) -> Result<()> {
        let e = self.graph.edge_index(x, y).ok_or_else(|| Error::InvalidInput(format!("({x}, {y}) is not an edge")))?;
        if x < y {
            self.values[e] += amount;
        } else {
            self.values[e] -= amount;
        }
        Ok(())
    }

    /// Adds `amount` of unit flow along the vertex sequence `path`.
    pub fn add_path(&mut self, path: &[usize], amount: T) -> Result<()> {
        for w in path.windows(2) {
            self.add(w[0], w[1], amount)?;
        }
        Ok(())
    }
}

/// `div J(x) = Σ_y J(x, y)`.
pub fn divergence<T: Real>(flux: &Flux<T>) -> MassRate<T> {
    let mut out = vec![T::zero(); flux.graph.len()];
    for (&(a, b), &v) in flux.graph.edges().iter().zip(&flux.values) {
        out[a] += v;
        out[b] -= v;
    }
    MassRate::unchecked(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divergence_examples() {
        let g = Arc::new(StateGraph::path(2));
        let f = Flux::new(g.clone(), vec![0.3]).unwrap();
        assert_eq!(divergence(&f).as_slice(), &[0.3, -0.3]);
        assert!(divergence(&Flux::<f64>::zeros(g)).is_zero());

        let c = Arc::new(StateGraph::cycle(3));
        let mut circ = Flux::zeros(c);
        circ.add_path(&[0, 1, 2, 0], 1.0).unwrap();
        assert_eq!(divergence(&circ).as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(circ.get(1, 0), -1.0);
    }

    #[test]
    fn connectivity_examples() {
        let g = Arc::new(StateGraph::path(4));
        assert!(Capacity::new(g.clone(), vec![1.0; 3]).unwrap().is_connected());
        assert!(!Capacity::new(g, vec![1.0, 0.0, 1.0]).unwrap().is_connected());
        let single = Arc::new(StateGraph::indexed(1, []).unwrap());
        assert!(Capacity::<f64>::new(single, vec![]).unwrap().is_connected());
    }

    #[test]
    fn graph_rejects_self_loops_and_merges_duplicates() {
        assert!(StateGraph::indexed(2, [(1, 1)]).is_err());
        let g = StateGraph::indexed(3, [(2, 0), (0, 2), (1, 2)]).unwrap();
        assert_eq!(g.edges(), &[(0, 2), (1, 2)]);
        assert_eq!(g.edge_index(2, 0), Some(0));
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.5]).is_ok());
        assert!(ProbVector::new(vec![1.0, 0.0]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.5 + 1e-11]).is_err());
        assert!(ProbVector::normalize(vec![1.0, 3.0]).is_ok());
    }

    #[test]
    fn capacity_reads_symmetrically() {
        let g = Arc::new(StateGraph::complete(3));
        let c = Capacity::new(g, vec![0.1, 0.2, 0.3]).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert_eq!(c.get(x, y), c.get(y, x));
            }
        }
    }
}
