//! State spaces and `(q-1)`-block heat-bath dynamics: the full configuration space, the
//! magnetization-vector space and its sorted folding.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use crate::combinatorics::{binomial, compositions, factorial, ln_factorials, multinomial};
use crate::error::{Error, Result};
use crate::gibbs::GibbsModel;
use crate::graph::{Capacity, ProbVector, StateGraph};
use crate::markov::{capacity_from_kernel, RateKernel};
use crate::num::{log_sum_exp, Real};
use crate::symmetry::Projection;

/// Largest full configuration space `qⁿ`.
pub const FULL_SPACE_CAP: u128 = 200_000;
/// Largest magnetization-vector space.
pub const PROJECTED_SPACE_CAP: u128 = 200_000;

/// Validated `(n, q)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PottsModel {
    pub n: usize,
    pub q: usize,
}

impl PottsModel {
    pub fn new(n: usize, q: usize) -> Result<Self> {
        if q < 2 || n < q {
            return Err(Error::InvalidInput(format!("need n >= q >= 2, got n={n}, q={q}")));
        }
        Ok(Self { n, q })
    }

    /// `qⁿ`, if it fits in `u128`.
    pub fn full_size(&self) -> Option<u128> {
        (self.q as u128).checked_pow(self.n as u32)
    }

    /// `C(n+q-1, q-1)`.
    pub fn projected_size(&self) -> Option<u128> {
        binomial((self.n + self.q - 1) as u64, (self.q - 1) as u64)
    }

    fn check_full(&self) -> Result<usize> {
        match self.full_size() {
            Some(s) if s <= FULL_SPACE_CAP => Ok(s as usize),
            s => Err(Error::TooLarge { what: "Potts configurations", size: s.unwrap_or(u128::MAX), cap: FULL_SPACE_CAP }),
        }
    }

    fn check_projected(&self) -> Result<()> {
        match self.projected_size() {
            Some(s) if s <= PROJECTED_SPACE_CAP => Ok(()),
            s => Err(Error::TooLarge { what: "Potts magnetization vectors", size: s.unwrap_or(u128::MAX), cap: PROJECTED_SPACE_CAP }),
        }
    }

    /// Color (0-based) of site `i` in configuration `x` (site 0 is the most significant digit).
    pub fn color(&self, x: usize, i: usize) -> usize {
        (x / self.q.pow((self.n - 1 - i) as u32)) % self.q
    }

    /// Color counts of configuration `x`.
    pub fn magnetization(&self, x: usize) -> Vec<usize> {
        let mut m = vec![0; self.q];
        let mut y = x;
        for _ in 0..self.n {
            m[y % self.q] += 1;
            y /= self.q;
        }
        m
    }
}

/// `Σ m_a² / n`.
pub fn energy_of(m: &[usize], n: usize) -> f64 {
    m.iter().map(|&v| (v * v) as f64).sum::<f64>() / n as f64
}

/// `r(m) = q! / ∏ (multiplicity of each value)!`, the number of distinct color permutations.
pub fn orbit_size(m: &[usize]) -> u128 {
    let mut counts: HashMap<usize, u64> = HashMap::new();
    for &v in m {
        *counts.entry(v).or_default() += 1;
    }
    let denom: u128 = counts.values().map(|&c| factorial(c).expect("small")).product();
    factorial(m.len() as u64).expect("q small") / denom
}

/// Non-increasing rearrangement.
pub fn sorted(m: &[usize]) -> Vec<usize> {
    let mut s = m.to_vec();
    s.sort_unstable_by(|a, b| b.cmp(a));
    s
}

fn composition_label(m: &[usize]) -> String {
    let parts: Vec<String> = m.iter().map(usize::to_string).collect();
    format!("({})", parts.join(","))
}

/// `μ_β(σ) ∝ exp((β/n) Σ_a M_a(σ)²)` on `[q]ⁿ`.
pub fn potts_distribution<T: Real>(n: usize, q: usize, beta: T) -> Result<ProbVector<T>> {
    let model = PottsModel::new(n, q)?;
    let size = model.check_full()?;
    let lw: Vec<T> = (0..size).map(|x| beta * T::of(energy_of(&model.magnetization(x), n))).collect();
    ProbVector::from_log_weights(&lw)
}

/// One resampling class: the states reachable from each other by recoloring one block, with
/// ordered pairs pointing at kernel edge slots.
#[derive(Debug, Clone)]
struct BlockClass {
    members: Vec<u32>,
    log_mult: Vec<f64>,
    pairs: Vec<PairSlot>,
}

#[derive(Debug, Clone, Copy)]
struct PairSlot {
    dst: u16,
    log_prefactor: f64,
    edge: u32,
    forward: bool,
}

/// Block heat-bath rates `Σ_classes exp(log_prefactor + log_mult_j + β H_j - LSE_k(log_mult_k + β H_k))`.
#[derive(Debug, Clone)]
struct BlockDynamics {
    classes: Vec<BlockClass>,
    member_energy: Vec<f64>,
}

struct PendingPair {
    class: usize,
    dst: u16,
    log_prefactor: f64,
    from: usize,
    to: usize,
}

impl BlockDynamics {
    fn build(
        labels: Vec<String>,
        member_energy: Vec<f64>,
        raw: Vec<(Vec<u32>, Vec<f64>)>,
        pair_of: impl Fn(usize, usize, &[u32]) -> Option<(f64, usize, usize)>,
    ) -> Result<(Self, Arc<StateGraph>)> {
        let mut pending = Vec::new();
        let mut edges = BTreeSet::new();
        for (c, (members, _)) in raw.iter().enumerate() {
            for i in 0..members.len() {
                for j in 0..members.len() {
                    if i == j {
                        continue;
                    }
                    if let Some((log_prefactor, from, to)) = pair_of(i, j, members) {
                        if from == to {
                            continue;
                        }
                        edges.insert((from.min(to), from.max(to)));
                        pending.push(PendingPair { class: c, dst: j as u16, log_prefactor, from, to });
                    }
                }
            }
        }
        let graph = Arc::new(StateGraph::new(labels, edges)?);
        let mut classes: Vec<BlockClass> =
            raw.into_iter().map(|(members, log_mult)| BlockClass { members, log_mult, pairs: Vec::new() }).collect();
        for p in pending {
            let edge = graph.edge_index(p.from, p.to).expect("edge inserted above") as u32;
            classes[p.class].pairs.push(PairSlot { dst: p.dst, log_prefactor: p.log_prefactor, edge, forward: p.from < p.to });
        }
        classes.retain(|c| !c.pairs.is_empty());
        Ok((Self { classes, member_energy }, graph))
    }

    fn kernel<T: Real>(&self, graph: &Arc<StateGraph>, beta: T) -> Result<RateKernel<T>> {
        let mut forward = vec![T::zero(); graph.num_edges()];
        let mut backward = vec![T::zero(); graph.num_edges()];
        let mut logs: Vec<T> = Vec::new();
        for class in &self.classes {
            logs.clear();
            logs.extend(
                class.members.iter().zip(&class.log_mult).map(|(&m, &lm)| T::of(lm) + beta * T::of(self.member_energy[m as usize])),
            );
            let lse = log_sum_exp(&logs);
            for p in &class.pairs {
                let rate = (T::of(p.log_prefactor) + logs[p.dst as usize] - lse).exp();
                if p.forward {
                    forward[p.edge as usize] += rate;
                } else {
                    backward[p.edge as usize] += rate;
                }
            }
        }
        RateKernel::new(graph.clone(), forward, backward)
    }
}

/// Full configuration space with `(q-1)`-block heat-bath dynamics: pick a uniformly random
/// block of `q-1` sites and resample it from `μ_β` conditioned on the rest.
#[derive(Debug, Clone)]
pub struct FullPotts<T> {
    model: PottsModel,
    graph: Arc<StateGraph>,
    dynamics: BlockDynamics,
    log_base: Vec<T>,
    energy: Vec<T>,
}

fn site_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

impl<T: Real> FullPotts<T> {
    pub fn new(n: usize, q: usize) -> Result<Self> {
        let model = PottsModel::new(n, q)?;
        let size = model.check_full()?;
        let energies: Vec<f64> = (0..size).map(|x| energy_of(&model.magnetization(x), n)).collect();
        let labels =
            (0..size).map(|x| (0..n).map(|i| char::from_digit((model.color(x, i) + 1) as u32, 36).unwrap_or('?')).collect()).collect();
        let k = q - 1;
        let log_blocks = (binomial(n as u64, k as u64).expect("small") as f64).ln();
        let fillings = q.pow(k as u32);
        let mut raw = Vec::new();
        for block in site_subsets(n, k) {
            let weights: Vec<usize> = block.iter().map(|&i| q.pow((n - 1 - i) as u32)).collect();
            for x in 0..size {
                if block.iter().any(|&i| model.color(x, i) != 0) {
                    continue;
                }
                let members: Vec<u32> = (0..fillings)
                    .map(|f| {
                        let mut y = x;
                        let mut g = f;
                        for &w in &weights {
                            y += (g % q) * w;
                            g /= q;
                        }
                        y as u32
                    })
                    .collect();
                raw.push((members, vec![0.0; fillings]));
            }
        }
        let (dynamics, graph) = BlockDynamics::build(labels, energies.clone(), raw, |i, j, members| {
            Some((-log_blocks, members[i] as usize, members[j] as usize))
        })?;
        Ok(Self { model, graph, dynamics, log_base: vec![T::zero(); size], energy: energies.into_iter().map(T::of).collect() })
    }

    pub fn model(&self) -> PottsModel {
        self.model
    }
}

impl<T: Real> GibbsModel<T> for FullPotts<T> {
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
        self.dynamics.kernel(&self.graph, beta)
    }

    fn rate_log_lipschitz(&self) -> T {
        T::of(2.0 * (self.model.q - 1) as f64)
    }
}

/// Block heat-bath kernel for an arbitrary positive `π` on `[q]ⁿ`:
/// `p(σ, σ') = Σ_{I} (1/C(n, q-1)) π(σ') / Σ_{a⃗} π(σ^{I←a⃗})` over blocks `I` outside of
/// which `σ` and `σ'` agree. Checked for detailed balance.
pub fn block_glauber_kernel<T: Real>(pi: &ProbVector<T>, n: usize, q: usize) -> Result<RateKernel<T>> {
    let model = PottsModel::new(n, q)?;
    let size = model.check_full()?;
    if pi.len() != size {
        return Err(Error::DimensionMismatch { expected: size, found: pi.len() });
    }
    let skeleton = FullPotts::<T>::new(n, q)?;
    let graph = skeleton.graph.clone();
    let blocks = T::of(binomial(n as u64, (q - 1) as u64).expect("small") as f64);
    let mut forward = vec![T::zero(); graph.num_edges()];
    let mut backward = vec![T::zero(); graph.num_edges()];
    for class in &skeleton.dynamics.classes {
        let z: T = class.members.iter().map(|&m| pi[m as usize]).sum();
        for p in &class.pairs {
            let rate = pi[class.members[p.dst as usize] as usize] / (z * blocks);
            if p.forward {
                forward[p.edge as usize] += rate;
            } else {
                backward[p.edge as usize] += rate;
            }
        }
    }
    let kernel = RateKernel::new(graph, forward, backward)?;
    capacity_from_kernel(&kernel, pi)?;
    Ok(kernel)
}

/// Magnetization-vector chain (all compositions of `n` into `q` parts) or its sorted folding,
/// with exact lumped block heat-bath rates.
#[derive(Debug, Clone)]
pub struct ProjectedPotts<T> {
    model: PottsModel,
    folded: bool,
    states: Vec<Vec<usize>>,
    index: HashMap<Vec<usize>, usize>,
    graph: Arc<StateGraph>,
    dynamics: BlockDynamics,
    log_base: Vec<T>,
    energy: Vec<T>,
}

impl<T: Real> ProjectedPotts<T> {
    pub fn new(n: usize, q: usize, folded: bool) -> Result<Self> {
        let model = PottsModel::new(n, q)?;
        model.check_projected()?;
        let all = compositions(n, q);
        let all_index: HashMap<Vec<usize>, usize> = all.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        let states: Vec<Vec<usize>> =
            if folded { all.iter().filter(|m| m.windows(2).all(|w| w[0] >= w[1])).cloned().collect() } else { all.clone() };
        let index: HashMap<Vec<usize>, usize> = states.iter().cloned().enumerate().map(|(i, m)| (m, i)).collect();
        let table = ln_factorials(n + q);
        let k = q - 1;
        let log_blocks = (binomial(n as u64, k as u64).expect("small") as f64).ln();
        let member_energy: Vec<f64> = all.iter().map(|m| energy_of(m, n)).collect();
        let fills = compositions(k, q);
        let mut raw = Vec::new();
        for base in compositions(n - k, q) {
            let members: Vec<u32> = fills
                .iter()
                .map(|y| {
                    let t: Vec<usize> = base.iter().zip(y).map(|(b, v)| b + v).collect();
                    all_index[&t] as u32
                })
                .collect();
            let log_mult = fills.iter().map(|y| multinomial(&table, y).ln()).collect();
            raw.push((members, log_mult));
        }
        let log_source_factor = |m: &[usize], x: &[usize]| -> f64 {
            m.iter().zip(x).map(|(&a, &b)| table[a] - table[b] - table[a - b]).sum::<f64>() - log_blocks
        };
        let target = |t: usize| -> usize {
            if folded {
                index[&sorted(&all[t])]
            } else {
                t
            }
        };
        let source = |m: usize| -> Option<usize> { index.get(&all[m]).copied() };
        let labels = states.iter().map(|m| composition_label(m)).collect();
        let (dynamics, graph) = BlockDynamics::build(labels, member_energy, raw, |i, j, members| {
            let m = members[i] as usize;
            let from = source(m)?;
            let x = &fills[i];
            if all[m].iter().zip(x).any(|(a, b)| b > a) {
                return None;
            }
            Some((log_source_factor(&all[m], x), from, target(members[j] as usize)))
        })?;
        let log_base = states
            .iter()
            .map(|m| {
                let r = if folded { (orbit_size(m) as f64).ln() } else { 0.0 };
                T::of(multinomial_ln(&table, m) + r)
            })
            .collect();
        let energy = states.iter().map(|m| T::of(energy_of(m, n))).collect();
        Ok(Self { model, folded, states, index, graph, dynamics, log_base, energy })
    }

    pub fn model(&self) -> PottsModel {
        self.model
    }

    pub fn is_folded(&self) -> bool {
        self.folded
    }

    pub fn states(&self) -> &[Vec<usize>] {
        &self.states
    }

    pub fn index_of(&self, m: &[usize]) -> Option<usize> {
        self.index.get(m).copied()
    }

    /// Unfolded log-weight `ln(n!/∏m_a!) + β Σ m_a²/n` of any composition.
    pub fn log_weight(&self, m: &[usize], beta: f64) -> f64 {
        let table = ln_factorials(self.model.n);
        multinomial_ln(&table, m) + beta * energy_of(m, self.model.n)
    }

    /// Smallest ratio of capacity to its lower bound over edges: unfolded
    /// `π̄(m)π̄(m')/n^{2q-2}`, folded `min(π̄̄, π̄̄')² / ((q!)² n^{2q-2})`.
    pub fn capacity_bound_slack(&self, beta: T) -> Result<T> {
        let cap: Capacity<T> = self.capacity(beta)?;
        let pi = self.distribution(beta)?;
        let n = T::of_usize(self.model.n);
        let scale = n.powi(2 * self.model.q as i32 - 2);
        let qf = T::of(factorial(self.model.q as u64).expect("small") as f64);
        Ok(self
            .graph
            .edges()
            .iter()
            .zip(cap.weights())
            .map(|(&(a, b), &c)| {
                let bound = if self.folded {
                    let lo = pi[a].min(pi[b]);
                    lo * lo / (qf * qf * scale)
                } else {
                    pi[a] * pi[b] / scale
                };
                c / bound
            })
            .fold(T::infinity(), T::min))
    }
}

fn multinomial_ln(table: &[f64], m: &[usize]) -> f64 {
    let n: usize = m.iter().sum();
    table[n] - m.iter().map(|&v| table[v]).sum::<f64>()
}

impl<T: Real> GibbsModel<T> for ProjectedPotts<T> {
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
        self.dynamics.kernel(&self.graph, beta)
    }

    fn rate_log_lipschitz(&self) -> T {
        T::of(2.0 * (self.model.q - 1) as f64)
    }
}

/// Configuration ↦ magnetization vector, onto the unfolded projected chain's states.
pub fn magnetization_projection(n: usize, q: usize) -> Result<Projection> {
    let full = FullPotts::<f64>::new(n, q)?;
    let proj = ProjectedPotts::<f64>::new(n, q, false)?;
    let map = (0..full.graph.len()).map(|x| proj.index[&full.model.magnetization(x)]).collect();
    Projection::new(full.graph.clone(), map, proj.graph.labels().to_vec())
}

/// Magnetization vector ↦ its non-increasing rearrangement.
pub fn sorting_projection(n: usize, q: usize) -> Result<Projection> {
    let proj = ProjectedPotts::<f64>::new(n, q, false)?;
    let folded = ProjectedPotts::<f64>::new(n, q, true)?;
    let map = proj.states.iter().map(|m| folded.index[&sorted(m)]).collect();
    Projection::new(proj.graph.clone(), map, folded.graph.labels().to_vec())
}
