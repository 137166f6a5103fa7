#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::Arc;

use dotanneal::{Capacity, MassRate, ProbVector, StateGraph};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random spanning tree plus extra edges with probability `extra`.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize, extra: f64) -> Arc<StateGraph> {
    let mut edges = BTreeSet::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        edges.insert((j, i));
    }
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(extra) {
                edges.insert((a, b));
            }
        }
    }
    Arc::new(StateGraph::indexed(n, edges).unwrap())
}

pub fn random_measure(rng: &mut ChaCha8Rng, n: usize) -> ProbVector<f64> {
    ProbVector::normalize((0..n).map(|_| rng.gen_range(0.05..1.0)).collect()).unwrap()
}

pub fn random_capacity(rng: &mut ChaCha8Rng, graph: Arc<StateGraph>) -> Capacity<f64> {
    let m = graph.num_edges();
    Capacity::new(graph, (0..m).map(|_| rng.gen_range(0.1..2.0)).collect()).unwrap()
}

/// Mean-zero vector with entries of order one.
pub fn random_rate(rng: &mut ChaCha8Rng, n: usize) -> MassRate<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    let mut w: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let drift: f64 = w.iter().sum();
    w[0] -= drift;
    MassRate::new(w).unwrap()
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    let big = a.abs().max(b.abs());
    if big == 0.0 {
        0.0
    } else {
        (a - b).abs() / big
    }
}
