//! Low-temperature initialization, exact versus constructive action, and the end-to-end
//! annealing harness for the Potts model.

use rayon::prelude::*;
use serde::Serialize;

use crate::annealing::{verify_error_bound, AnnealingProblem, ErrorBoundReport, Horizon};
use crate::combinatorics::{compositions, ln_factorials};
use crate::error::{Error, Result};
use crate::gibbs::{gibbs_curve, GibbsModel};
use crate::graph::ProbVector;
use crate::markov::kl;
use crate::quadrature::UniformGrid;
use crate::schedule::Schedule;
use crate::transport::{action, flux_cost, ActionReport};

use super::chain::{orbit_size, FullPotts, PottsModel, ProjectedPotts};
use super::flux::greedy_flux;
use super::paths::{log_weight, potts_path};

/// `β₀ = n ln q + ln(6/ε)`.
pub fn initial_beta(n: usize, q: usize, eps: f64) -> f64 {
    n as f64 * (q as f64).ln() + (6.0 / eps).ln()
}

/// `ν = (ε/6) Unif(Ω) + (1 - ε/6) Unif(Ω₀)` on `[q]ⁿ`, `Ω₀` the monochromatic configurations.
pub fn init_measure_full(n: usize, q: usize, eps: f64) -> Result<ProbVector<f64>> {
    let full = FullPotts::<f64>::new(n, q)?;
    let size = full.graph().len();
    let w = eps / 6.0;
    let step = (size - 1) / (q - 1);
    let v = (0..size).map(|x| w / size as f64 + if x % step == 0 { (1.0 - w) / q as f64 } else { 0.0 }).collect();
    ProbVector::new(v)
}

/// Law of `ν` pushed to sorted magnetization vectors.
pub fn init_measure_folded(n: usize, q: usize, eps: f64) -> Result<ProbVector<f64>> {
    let folded = ProjectedPotts::<f64>::new(n, q, true)?;
    let table = ln_factorials(n);
    let w = eps / 6.0;
    let log_qn = n as f64 * (q as f64).ln();
    let v = folded
        .states()
        .iter()
        .map(|m| {
            let fiber = log_weight(&table, m, 0.0) + (orbit_size(m) as f64).ln();
            let mono = if m[0] == n { 1.0 - w } else { 0.0 };
            w * (fiber - log_qn).exp() + mono
        })
        .collect();
    ProbVector::new(v)
}

#[derive(Debug, Clone, Serialize)]
pub struct PottsInit {
    pub n: usize,
    pub q: usize,
    pub eps: f64,
    pub beta0: f64,
    /// `KL(μ_{β₀} ‖ ν)`.
    pub kl: f64,
    /// `"full"` (enumeration over `qⁿ`) or `"projected"` (fiber weights).
    pub method: &'static str,
    /// `μ_{β₀}(Ω₀)`.
    pub monochromatic_mass: f64,
    pub below_sixth: bool,
    pub below_third: bool,
}

/// Initialization certificate. The KL is computed on the full space when `qⁿ` is within
/// the enumeration cap, otherwise on magnetization vectors, where both measures are
/// constant on fibers and the KL is unchanged.
pub fn potts_init(n: usize, q: usize, eps: f64) -> Result<PottsInit> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("eps {eps} must lie in (0, 1)")));
    }
    let model = PottsModel::new(n, q)?;
    let beta0 = initial_beta(n, q, eps);
    let (kl_value, method, mono) = if FullPotts::<f64>::new(n, q).is_ok() {
        let full = FullPotts::<f64>::new(n, q)?;
        let mu = full.distribution(beta0)?;
        let nu = init_measure_full(n, q, eps)?;
        let step = (mu.len() - 1) / (q - 1);
        let mono: f64 = (0..q).map(|c| mu[c * step]).sum();
        (kl(mu.as_slice(), nu.as_slice())?, "full", mono)
    } else {
        let folded = ProjectedPotts::<f64>::new(model.n, model.q, true)?;
        let mu = folded.distribution(beta0)?;
        let nu = init_measure_folded(n, q, eps)?;
        let mono = mu[folded.index_of(&super::paths::diagonal_point(n, q, 0)).expect("monochromatic state")];
        (kl(mu.as_slice(), nu.as_slice())?, "projected", mono)
    };
    Ok(PottsInit {
        n,
        q,
        eps,
        beta0,
        kl: kl_value,
        method,
        monochromatic_mass: mono,
        below_sixth: kl_value < eps / 6.0,
        below_third: kl_value < eps / 3.0,
    })
}

fn check_schedule(q: usize, schedule: &Schedule<f64>, grid: &UniformGrid<f64>) -> Result<()> {
    let min = q as f64 / 2.0;
    for s in grid.points() {
        let beta = schedule.beta(s);
        if beta < min {
            return Err(Error::PreconditionBeta { beta, min });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct PottsActionReport {
    pub exact: ActionReport<f64>,
    /// Simpson integral of the greedy-flux costs.
    pub constructive: ActionReport<f64>,
    /// Exact metric derivative ≤ constructive flux cost at every node.
    pub nodewise_ordered: bool,
    /// `|∂_s π̄̄| ≤ |β'| n π̄̄` at every node.
    pub derivative_bound_holds: bool,
}

/// Exact action on the sorted chain next to the cost of the constructive flux that routes
/// the greedy matching of `∂_s π̄̄` along paths through the diagonal mode.
pub fn potts_action(n: usize, q: usize, schedule: &Schedule<f64>, nodes: usize) -> Result<PottsActionReport> {
    let grid = UniformGrid::unit(nodes)?;
    check_schedule(q, schedule, &grid)?;
    let folded = ProjectedPotts::<f64>::new(n, q, true)?;
    let exact = action(&gibbs_curve(&folded, schedule, nodes)?)?;
    let results: Vec<Result<(f64, bool)>> = grid
        .points()
        .into_par_iter()
        .map(|s| {
            let beta = schedule.beta(s);
            let bp = schedule.beta_prime(s);
            let pi = folded.distribution(beta)?;
            let d = folded.gibbs_rate(beta, bp)?;
            let cap = folded.capacity(beta)?;
            let bound_ok = d.iter().zip(pi.iter()).all(|(&v, &p)| v.abs() <= bp.abs() * n as f64 * p * (1.0 + 1e-12));
            let routes: Vec<Vec<usize>> = folded
                .states()
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let mut r = vec![i];
                    for v in potts_path(n, q, beta, m)? {
                        r.push(folded.index_of(&v).expect("sorted state"));
                    }
                    Ok(r)
                })
                .collect::<Result<_>>()?;
            let (flux, _) = greedy_flux(&d, folded.graph().clone(), |x, y| {
                let mut p = routes[x].clone();
                p.extend(routes[y].iter().rev().skip(1));
                Ok(p)
            })?;
            Ok((flux_cost(&cap, &flux)?, bound_ok))
        })
        .collect();
    let mut samples = Vec::with_capacity(nodes);
    let mut derivative_bound_holds = true;
    for r in results {
        let (c, ok) = r?;
        samples.push(c);
        derivative_bound_holds &= ok;
    }
    let nodewise_ordered = exact.samples.iter().zip(&samples).all(|(&e, &c)| e <= c * (1.0 + 1e-10) + 1e-14);
    Ok(PottsActionReport { constructive: ActionReport::from_samples(&grid, samples), exact, nodewise_ordered, derivative_bound_holds })
}

/// Horizon choice of [`potts_pipeline`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PottsHorizon {
    /// `T = 2A/ε` from the computed action.
    ActionBased,
    Fixed {
        horizon: f64,
        layers: usize,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct PottsPipelineReport {
    pub n: usize,
    pub q: usize,
    pub beta: f64,
    pub eps: f64,
    pub beta0: f64,
    pub action: PottsActionReport,
    pub horizon: f64,
    pub layers: usize,
    /// `ε / (24 (q-1) |β₀ - β| T)`.
    pub eta: Option<f64>,
    /// `exp(2(q-1)|β₀ - β|/N) - 1`, the per-layer stability allowance.
    pub stability_allowance: f64,
    pub init: PottsInit,
    /// Exact run on sorted magnetization vectors.
    pub projected: ErrorBoundReport,
    /// Exact run on `[q]ⁿ`, when requested and within the enumeration cap.
    pub full: Option<ErrorBoundReport>,
}

/// Cooling schedule `β(s) = β₀ - (β₀ - β)s` from the initialization temperature, with
/// verification on the sorted chain and optionally on the full space.
pub fn potts_pipeline(
    n: usize,
    q: usize,
    beta: f64,
    eps: f64,
    horizon: PottsHorizon,
    grid_nodes: usize,
    full_space: bool,
) -> Result<PottsPipelineReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("eps {eps} must lie in (0, 1)")));
    }
    let min = q as f64 / 2.0;
    if !(beta >= min) {
        return Err(Error::PreconditionBeta { beta, min });
    }
    let beta0 = initial_beta(n, q, eps);
    let schedule = Schedule::linear(beta0, beta)?;
    let act = potts_action(n, q, &schedule, grid_nodes)?;
    let gap = (beta0 - beta).abs();
    let (t, layers, eta) = match horizon {
        PottsHorizon::ActionBased => {
            let t = 2.0 * act.exact.action / eps;
            let denom = 24.0 * (q - 1) as f64 * gap * t;
            if denom > 0.0 {
                let eta = eps / denom;
                (t, (1.0 / eta).ceil() as usize, Some(eta))
            } else {
                (t, 1, None)
            }
        }
        PottsHorizon::Fixed { horizon, layers } => (horizon, layers, None),
    };
    let init = potts_init(n, q, eps)?;
    let folded = ProjectedPotts::<f64>::new(n, q, true)?;
    let fixed = Horizon::Fixed { horizon: t, layers };
    let projected = verify_error_bound(&AnnealingProblem {
        runner: &folded,
        action_model: &folded,
        schedule: schedule.clone(),
        initial: init_measure_folded(n, q, eps)?,
        eps,
        horizon: fixed,
        grid_nodes,
    })?;
    let full = if full_space && PottsModel::new(n, q)?.full_size().is_some_and(|s| s <= super::chain::FULL_SPACE_CAP) {
        let runner = FullPotts::<f64>::new(n, q)?;
        Some(verify_error_bound(&AnnealingProblem {
            runner: &runner,
            action_model: &folded,
            schedule: schedule.clone(),
            initial: init_measure_full(n, q, eps)?,
            eps,
            horizon: fixed,
            grid_nodes,
        })?)
    } else {
        None
    };
    Ok(PottsPipelineReport {
        n,
        q,
        beta,
        eps,
        beta0,
        action: act,
        horizon: t,
        layers,
        eta,
        stability_allowance: (2.0 * (q - 1) as f64 * gap / layers as f64).exp() - 1.0,
        init,
        projected,
        full,
    })
}

/// Sorted magnetization vectors of `n` into `q` parts.
pub fn sorted_states(n: usize, q: usize) -> Vec<Vec<usize>> {
    compositions(n, q).into_iter().filter(|m| m.windows(2).all(|w| w[0] >= w[1])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_measures_agree() {
        let full = init_measure_full(4, 3, 0.5).unwrap();
        assert!((full.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let folded = init_measure_folded(4, 3, 0.5).unwrap();
        let proj = super::super::chain::magnetization_projection(4, 3)
            .unwrap()
            .compose(&super::super::chain::sorting_projection(4, 3).unwrap())
            .unwrap();
        let pushed = proj.project_measure(&full).unwrap();
        for (a, b) in pushed.iter().zip(folded.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn init_kl_matches_projected_kl() {
        let r = potts_init(4, 3, 0.5).unwrap();
        let folded = ProjectedPotts::<f64>::new(4, 3, true).unwrap();
        let mu = folded.distribution(r.beta0).unwrap();
        let nu = init_measure_folded(4, 3, 0.5).unwrap();
        assert!((kl(mu.as_slice(), nu.as_slice()).unwrap() - r.kl).abs() < 1e-12);
    }

    #[test]
    fn constant_schedule_actions_vanish() {
        let s = Schedule::constant(2.0).unwrap();
        let r = potts_action(6, 3, &s, 5).unwrap();
        assert_eq!(r.exact.action, 0.0);
        assert_eq!(r.constructive.action, 0.0);
    }

    #[test]
    fn exact_below_constructive() {
        let s = Schedule::linear(2.0, 1.5).unwrap();
        let r = potts_action(6, 3, &s, 11).unwrap();
        assert!(r.nodewise_ordered && r.derivative_bound_holds);
        assert!(r.exact.action <= r.constructive.action && r.constructive.action.is_finite());
    }
}
