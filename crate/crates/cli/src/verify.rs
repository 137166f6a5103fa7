//! Numerical verification suites. Randomized checks draw from a ChaCha stream keyed by
//! `--seed`, so reports are reproducible.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use dotanneal::gibbs::{gibbs_curve, reference_kernel_at};
use dotanneal::girsanov::{edge_kl_cost, path_kl, reference_kernel, reference_multipliers};
use dotanneal::ising::{self, ProjectedIsing};
use dotanneal::markov::{bfs_paths, chi2, kl, mlsi_constant, poincare_constant, MlsiMode, RateKernel, ReversiblePair};
use dotanneal::potts::{self, paths::path_log_dip, pipeline::sorted_states, FullPotts, ProjectedPotts};
use dotanneal::quadrature::UniformGrid;
use dotanneal::symmetry::{compare_metric_derivative, ChainInstance, Projection};
use dotanneal::transport::{action, flux_cost, metric_derivative_sq, wc2_distance};
use dotanneal::{divergence, Capacity, GibbsModel, MassRate, ProbVector, Schedule, StateGraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::args::{Model, Suite, VerifyArgs};
use crate::output::write_json;
use crate::{CliError, CliResult, Outcome};

#[derive(Serialize)]
struct Check {
    suite: &'static str,
    name: &'static str,
    pass: bool,
    detail: String,
}

#[derive(Serialize)]
struct Report {
    schema: &'static str,
    seed: u64,
    instances: usize,
    pass: bool,
    checks: Vec<Check>,
}

type CheckFn<'a> = Box<dyn Fn(&mut ChaCha8Rng) -> CliResult<(bool, String)> + 'a>;
type Checks = Vec<(&'static str, CheckFn<'static>)>;

fn graph(rng: &mut ChaCha8Rng, n: usize, extra: f64) -> Arc<StateGraph> {
    let mut edges = BTreeSet::new();
    for i in 1..n {
        edges.insert((rng.gen_range(0..i), i));
    }
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(extra) {
                edges.insert((a, b));
            }
        }
    }
    Arc::new(StateGraph::indexed(n, edges).expect("tree plus chords is a valid graph"))
}

fn measure(rng: &mut ChaCha8Rng, n: usize) -> ProbVector<f64> {
    ProbVector::normalize((0..n).map(|_| rng.gen_range(0.05..1.0)).collect()).expect("positive weights")
}

/// Mixes concentrated and spread-out laws with full support.
fn law(rng: &mut ChaCha8Rng, n: usize) -> ProbVector<f64> {
    let sharp = rng.gen_bool(0.3);
    let w = (0..n).map(|_| if sharp { rng.gen_range(0.0f64..1.0).powi(6) } else { rng.gen_range(0.0..1.0) } + 1e-9).collect();
    ProbVector::normalize(w).expect("positive weights")
}

fn capacity(rng: &mut ChaCha8Rng, g: Arc<StateGraph>) -> Capacity<f64> {
    let m = g.num_edges();
    Capacity::new(g, (0..m).map(|_| rng.gen_range(0.1..2.0)).collect()).expect("positive weights")
}

fn rate(rng: &mut ChaCha8Rng, n: usize) -> MassRate<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean = v.iter().sum::<f64>() / n as f64;
    let mut w: Vec<f64> = v.iter().map(|x| x - mean).collect();
    let drift: f64 = w.iter().sum();
    w[0] -= drift;
    MassRate::new(w).expect("balanced by construction")
}

fn reversible(rng: &mut ChaCha8Rng, n: usize) -> CliResult<ReversiblePair<f64>> {
    let g = graph(rng, n, 0.3);
    let c = capacity(rng, g);
    Ok(ReversiblePair::from_capacity(c, measure(rng, n))?)
}

fn rel_gap(a: f64, b: f64) -> f64 {
    let big = a.abs().max(b.abs());
    if big == 0.0 {
        0.0
    } else {
        (a - b).abs() / big
    }
}

fn metric_axioms(k: usize) -> Checks {
    vec![(
        "identity-symmetry-triangle",
        Box::new(move |rng| {
            let (mut identity, mut symmetry, mut triangle) = (0.0f64, 0.0f64, 0usize);
            for _ in 0..k {
                let n = rng.gen_range(2..=12);
                let g = graph(rng, n, 0.2);
                let c = capacity(rng, g);
                let (a, b, d) = (law(rng, n), law(rng, n), law(rng, n));
                identity = identity.max(wc2_distance(&c, &a, &a)?);
                let ab = wc2_distance(&c, &a, &b)?;
                symmetry = symmetry.max(rel_gap(ab, wc2_distance(&c, &b, &a)?));
                if wc2_distance(&c, &a, &d)? > (ab + wc2_distance(&c, &b, &d)?) * (1.0 + 1e-10) {
                    triangle += 1;
                }
            }
            Ok((
                identity <= 1e-12 && symmetry <= 1e-9 && triangle == 0,
                format!("max W(mu, mu) {identity:.1e}, max asymmetry {symmetry:.1e}, {triangle} triangle violations"),
            ))
        }),
    )]
}

fn duality(k: usize) -> Checks {
    vec![(
        "flux-potential",
        Box::new(move |rng| {
            let (mut gap, mut residual) = (0.0f64, 0.0f64);
            for _ in 0..k {
                let n = rng.gen_range(2..=30);
                let g = graph(rng, n, 0.15);
                let c = capacity(rng, g);
                let pi = measure(rng, n);
                let d = rate(rng, n);
                let md = metric_derivative_sq(&c, &d, &pi)?;
                gap = gap.max(rel_gap(md.value, flux_cost(&c, &md.flux)?));
                let div = divergence(&md.flux);
                residual = residual.max(d.iter().zip(div.iter()).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max));
            }
            Ok((gap <= 1e-10 && residual <= 1e-10, format!("max relative gap {gap:.2e}, max continuity residual {residual:.2e}")))
        }),
    )]
}

fn transport_inequalities(k: usize) -> Checks {
    vec![
        (
            "variance",
            Box::new(move |rng| {
                let (mut violations, mut tightest) = (0, 0.0f64);
                for _ in 0..k.div_ceil(10) {
                    let n = rng.gen_range(2..=12);
                    let pair = reversible(rng, n)?;
                    let c_pi = poincare_constant(&pair)?;
                    for _ in 0..50 {
                        let mu = law(rng, n);
                        let w2 = wc2_distance(pair.capacity(), &mu, pair.stationary())?.powi(2);
                        let rhs = c_pi * chi2(mu.as_slice(), pair.stationary().as_slice())?;
                        tightest = tightest.max(w2 / rhs);
                        violations += usize::from(w2 > rhs * (1.0 + 1e-10));
                    }
                }
                Ok((violations == 0, format!("{violations} violations, max W^2 / (C_PI chi^2) = {tightest:.4}")))
            }),
        ),
        (
            "entropy",
            Box::new(move |rng| {
                let (mut violations, mut tightest) = (0, 0.0f64);
                for _ in 0..k.div_ceil(50) {
                    let n = rng.gen_range(2..=4);
                    let pair = reversible(rng, n)?;
                    let est = mlsi_constant(&pair, MlsiMode::default())?;
                    let pi = pair.stationary().as_slice();
                    for _ in 0..50 {
                        let mu = law(rng, n);
                        let w2 = wc2_distance(pair.capacity(), &mu, pair.stationary())?.powi(2);
                        let sup = mu.iter().zip(pi).map(|(m, p)| m / p).fold(0.0, f64::max);
                        let rhs = 4.0 * est.value * sup * kl(mu.as_slice(), pi)?;
                        tightest = tightest.max(w2 / rhs);
                        violations += usize::from(w2 > rhs * (1.0 + 1e-10));
                    }
                }
                Ok((violations == 0, format!("{violations} violations, max W^2 / (4 C_MLSI sup KL) = {tightest:.4}")))
            }),
        ),
    ]
}

fn girsanov(k: usize) -> Checks {
    vec![
        (
            "edge-cost-quadratic",
            Box::new(|_| {
                let mut worst = 0.0f64;
                let mut ok = true;
                for i in 0..=180 {
                    let rho = 10f64.powf(-6.0 + 9.0 * i as f64 / 180.0);
                    let cost = edge_kl_cost(rho);
                    ok &= cost >= 0.0 && edge_kl_cost(-rho) == cost;
                    worst = worst.max(cost / (rho * rho / 4.0));
                }
                Ok((ok && worst <= 1.0 + 1e-12, format!("max cost / (rho^2/4) = {worst:.6}")))
            }),
        ),
        (
            "multipliers",
            Box::new(|_| {
                let mut worst = 0.0f64;
                for rho in [1e-8f64, 0.3, 2.0, 50.0, 1e4] {
                    let (up, down) = reference_multipliers(rho);
                    worst = worst.max((up * down - 1.0).abs()).max(((up - down) - rho).abs() / up);
                }
                Ok((worst <= 1e-12, format!("max identity residual {worst:.1e}")))
            }),
        ),
        (
            "reference-flux",
            Box::new(move |rng| {
                let mut worst = 0.0f64;
                for _ in 0..k {
                    let n = rng.gen_range(2..=8);
                    let g = graph(rng, n, 0.3);
                    let c = capacity(rng, g);
                    let pi = measure(rng, n);
                    let p = RateKernel::from_capacity(&c, &pi)?;
                    let d = rate(rng, n);
                    let md = metric_derivative_sq(&c, &d, &pi)?;
                    let q = reference_kernel(&p, &c, &md.flux)?;
                    let flow = q.left_apply(pi.as_slice());
                    worst = worst.max(flow.iter().zip(d.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
                }
                Ok((worst <= 1e-9, format!("max |pi q - rate| {worst:.2e}")))
            }),
        ),
        (
            "reference-path-kl",
            Box::new(|_| {
                let model = ProjectedIsing::<f64>::new(6, true)?;
                let schedule = Schedule::heating(1.5)?;
                let a = action(&gibbs_curve(&model, &schedule, 201)?)?.action;
                let mut worst = 0.0f64;
                for horizon in [0.5, 2.0, 10.0] {
                    let r = path_kl(
                        |t| reference_kernel_at(&model, &schedule, horizon, t),
                        |t| model.kernel(schedule.beta(t / horizon)),
                        |t| model.distribution(schedule.beta(t / horizon)),
                        0.0,
                        UniformGrid::new(0.0, horizon, 401)?,
                    )?;
                    worst = worst.max((r.value - r.error_estimate.abs()) / (a / (4.0 * horizon)));
                }
                Ok((worst <= 1.0 + 1e-6, format!("max path KL / (A / 4T) = {worst:.4}")))
            }),
        ),
    ]
}

fn instance<M: GibbsModel<f64> + ?Sized>(model: &M, beta: f64, beta_prime: f64) -> CliResult<ChainInstance<f64>> {
    Ok(ChainInstance { measure: model.distribution(beta)?, rate: model.gibbs_rate(beta, beta_prime)?, capacity: model.capacity(beta)? })
}

/// Symmetry hypothesis at several temperatures, then the nodewise and integrated gaps
/// between the full and reduced metric derivatives.
fn projection_checks<M, P>(full: M, reduced: P, proj: Projection, betas: Vec<f64>) -> Checks
where
    M: GibbsModel<f64> + 'static,
    P: GibbsModel<f64> + 'static,
{
    let full = Arc::new(full);
    let reduced = Arc::new(reduced);
    let proj = Arc::new(proj);
    let (f1, p1, b1) = (full.clone(), proj.clone(), betas.clone());
    let (f2, r2, p2, b2) = (full.clone(), reduced.clone(), proj, betas.clone());
    vec![
        (
            "hypothesis",
            Box::new(move |_| {
                let mut worst = 0.0f64;
                let mut ok = true;
                for &b in &b1 {
                    let r = p1.verify_symmetry(&f1.distribution(b)?, &f1.kernel(b)?);
                    ok &= r.pass;
                    worst = worst.max(r.measure_violation).max(r.kernel_violation);
                }
                Ok((ok, format!("max fiber violation {worst:.2e} over {} temperatures", b1.len())))
            }),
        ),
        (
            "metric-derivative",
            Box::new(move |_| {
                let mut worst = 0.0f64;
                for &b in &b2 {
                    for s in UniformGrid::<f64>::unit(11)?.points() {
                        let cmp = compare_metric_derivative(&p2, &instance(f2.as_ref(), b * s, b)?, &instance(r2.as_ref(), b * s, b)?)?;
                        worst = worst.max(cmp.relative_gap);
                    }
                }
                Ok((worst <= 1e-8, format!("max relative gap {worst:.2e}")))
            }),
        ),
        (
            "action",
            Box::new(move |_| {
                let mut worst = 0.0f64;
                for &b in &betas {
                    let s = Schedule::heating(b)?;
                    let a = action(&gibbs_curve(full.as_ref(), &s, 41)?)?.action;
                    let c = action(&gibbs_curve(reduced.as_ref(), &s, 41)?)?.action;
                    worst = worst.max(rel_gap(a, c));
                }
                Ok((worst <= 1e-7, format!("max relative action gap {worst:.2e}")))
            }),
        ),
    ]
}

fn symmetry(args: &VerifyArgs) -> CliResult<Vec<(&'static str, CheckFn<'static>)>> {
    match args.model {
        Model::Ising => {
            let full = ising::full_model::<f64>(args.n)?;
            let proj = ising::magnetization_projection(args.n)?.compose(&ising::folding_projection(args.n)?)?;
            let reduced = ProjectedIsing::<f64>::new(args.n, true)?;
            Ok(projection_checks(full, reduced, proj, vec![0.0, 0.5, 1.0, 2.0]))
        }
        Model::Potts => {
            if args.q < 2 || args.n < args.q {
                return Err(CliError(format!("symmetry suite needs q >= 2 and n >= q, got n = {}, q = {}", args.n, args.q)));
            }
            let full = FullPotts::<f64>::new(args.n, args.q)?;
            let proj = potts::magnetization_projection(args.n, args.q)?.compose(&potts::sorting_projection(args.n, args.q)?)?;
            let reduced = ProjectedPotts::<f64>::new(args.n, args.q, true)?;
            let q = args.q as f64;
            Ok(projection_checks(full, reduced, proj, vec![0.5, q / 2.0, q]))
        }
    }
}

fn landscape() -> Checks {
    vec![
        (
            "ising-shape",
            Box::new(|_| {
                let mut failures = 0;
                for n in 1..=60 {
                    for k in 1..=25 {
                        failures += usize::from(!ising::landscape_classify(n, 0.1 * k as f64)?.holds);
                    }
                }
                Ok((failures == 0, format!("{failures}/1500 (n, beta) pairs off the predicted shape")))
            }),
        ),
        (
            "potts-diagonal-and-paths",
            Box::new(|_| {
                let (mut unimodal, mut paths) = (0, 0);
                for (n, q) in [(8usize, 3usize), (6, 4)] {
                    let qf = q as f64;
                    for beta in [qf / 2.0, qf / 2.0 + 0.25, qf / 2.0 + 0.5, qf, 2.0 * qf] {
                        unimodal += usize::from(!potts::is_unimodal(&potts::diagonal_profile(n, q, beta)));
                        let mode = potts::diagonal_point(n, q, potts::diagonal_mode(n, q, beta));
                        for m in sorted_states(n, q) {
                            let path = potts::potts_path(n, q, beta, &m)?;
                            let end = path.last().cloned().unwrap_or_else(|| m.clone());
                            if path.len() > 2 * n || path_log_dip(n, beta, &m, &path) < -(qf - 1.0) - 1e-12 || end != mode {
                                paths += 1;
                            }
                        }
                    }
                }
                Ok((unimodal == 0 && paths == 0, format!("{unimodal} non-unimodal diagonals, {paths} path violations")))
            }),
        ),
    ]
}

fn greedy_flux(k: usize) -> Checks {
    vec![(
        "plan-and-balance",
        Box::new(move |rng| {
            let mut failures = 0;
            for i in 0..k {
                let n = rng.gen_range(2..=30);
                let d = rate(rng, n);
                let (flux, plan) = if i % 2 == 0 {
                    potts::greedy_flux(&d, Arc::new(StateGraph::complete(n)), |x, y| Ok(vec![x, y]))?
                } else {
                    let g = graph(rng, n, 0.15);
                    let paths = bfs_paths(&g);
                    potts::greedy_flux(&d, g, |x, y| {
                        let p = paths[&(x.min(y), x.max(y))].clone();
                        Ok(if x < y { p } else { p.into_iter().rev().collect() })
                    })?
                };
                let div = divergence(&flux);
                let balanced = d.iter().zip(div.iter()).all(|(a, b)| (a + b).abs() <= 1e-12);
                failures += usize::from(!plan.check(d.as_slice()).all() || !balanced);
            }
            Ok((failures == 0, format!("{failures}/{k} plans fail a check")))
        }),
    )]
}

fn suites(args: &VerifyArgs) -> CliResult<Vec<(&'static str, Checks)>> {
    let k = args.instances;
    let all = args.suite == Suite::All;
    let mut out = Vec::new();
    if all || args.suite == Suite::MetricAxioms {
        out.push(("metric-axioms", metric_axioms(k)));
    }
    if all || args.suite == Suite::Duality {
        out.push(("duality", duality(k)));
    }
    if all || args.suite == Suite::TransportInequalities {
        out.push(("transport-inequalities", transport_inequalities(k)));
    }
    if all || args.suite == Suite::Girsanov {
        out.push(("girsanov", girsanov(k)));
    }
    if all || args.suite == Suite::Symmetry {
        out.push(("symmetry", symmetry(args)?));
    }
    if all || args.suite == Suite::Landscape {
        out.push(("landscape", landscape()));
    }
    if all || args.suite == Suite::GreedyFlux {
        out.push(("greedy-flux", greedy_flux(k)));
    }
    Ok(out)
}

/// FNV-1a of `suite/name`: a stream id that does not depend on which suites run.
fn stream_id(suite: &str, name: &str) -> u64 {
    format!("{suite}/{name}").bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn run(args: &VerifyArgs) -> CliResult<Outcome> {
    if args.instances == 0 {
        return Err(CliError("--instances must be at least 1".into()));
    }
    let mut checks = Vec::new();
    for (suite, list) in suites(args)? {
        for (name, f) in list {
            let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
            rng.set_stream(stream_id(suite, name));
            let start = Instant::now();
            let (pass, detail) = f(&mut rng)?;
            let secs = start.elapsed().as_secs_f64();
            println!("{} {suite}/{name}: {detail} ({secs:.3}s)", if pass { "PASS" } else { "FAIL" });
            checks.push(Check { suite, name, pass, detail });
        }
    }
    let pass = checks.iter().all(|c| c.pass);
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| format!("{}/{}", c.suite, c.name)).collect();
    if let Some(path) = &args.output {
        write_json(path, &Report { schema: "dotanneal.verify.v1", seed: args.seed, instances: args.instances, pass, checks })?;
    }
    Ok(if pass { Outcome::Pass } else { Outcome::Violated(format!("failed checks: {}", failed.join(", "))) })
}
