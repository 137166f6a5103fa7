use std::path::Path;

use dotanneal::annealing::{
    run_sampler, stability_window, verify_error_bound, AnnealConfig, AnnealingProblem, BoundDecomposition, Horizon, TransitionMatrix,
};
use dotanneal::combinatorics::{compositions, ln_factorials};
use dotanneal::gibbs::gibbs_curve;
use dotanneal::ising::{self, ProjectedIsing, FULL_SPACE_MAX_SITES};
use dotanneal::potts::pipeline::{init_measure_folded, init_measure_full, initial_beta, sorted_states};
use dotanneal::potts::{self, FullPotts, ProjectedPotts};
use dotanneal::transport::action as curve_action;
use dotanneal::{Error, GibbsModel, ProbVector, Schedule};
use rand::Rng;
use serde::Serialize;

use crate::args::{check_eps, check_grid, ActionArgs, AnnealArgs, Format, HorizonRule, LandscapeArgs, Mode, Model, Slice, Space};
use crate::output::{resolve, write_csv, write_json};
use crate::{CliError, CliResult, Outcome};

#[derive(Serialize)]
struct ActionNode {
    s: f64,
    beta: f64,
    metric_derivative_sq: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    constructive_cost: Option<f64>,
}

#[derive(Serialize)]
struct ActionBound {
    kind: &'static str,
    value: f64,
}

#[derive(Serialize)]
struct ActionOutput {
    schema: &'static str,
    model: Model,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<usize>,
    beta_start: f64,
    beta_end: f64,
    grid_nodes: usize,
    rule: &'static str,
    action: f64,
    error_estimate: f64,
    nodes: Vec<ActionNode>,
    bound: ActionBound,
    within_bound: bool,
}

pub fn action(args: &ActionArgs, out_dir: &Path) -> CliResult<Outcome> {
    let m = &args.model;
    m.validate()?;
    check_grid(args.grid)?;
    let out = match m.model {
        Model::Ising => {
            let schedule = Schedule::heating(m.beta)?;
            let folded = ProjectedIsing::<f64>::new(m.n, true)?;
            let report = curve_action(&gibbs_curve(&folded, &schedule, args.grid)?)?;
            let bound = (m.n as f64).powi(5) * m.beta * m.beta / 16.0;
            let nodes = report
                .grid
                .iter()
                .zip(&report.samples)
                .map(|(&s, &v)| ActionNode { s, beta: schedule.beta(s), metric_derivative_sq: v, constructive_cost: None })
                .collect();
            ActionOutput {
                schema: "dotanneal.action.v1",
                model: Model::Ising,
                n: m.n,
                q: None,
                beta_start: 0.0,
                beta_end: m.beta,
                grid_nodes: args.grid,
                rule: report.rule,
                action: report.action,
                error_estimate: report.error_estimate,
                nodes,
                within_bound: report.action <= bound,
                bound: ActionBound { kind: "n^5 beta^2 / 16", value: bound },
            }
        }
        Model::Potts => {
            check_eps(args.eps)?;
            let start = args.beta_start.unwrap_or_else(|| initial_beta(m.n, m.q, args.eps));
            let min = m.q as f64 / 2.0;
            if let Some(&beta) = [m.beta, start].iter().find(|&&b| b < min) {
                return Err(Error::PreconditionBeta { beta, min }.into());
            }
            let schedule = Schedule::linear(start, m.beta)?;
            let r = potts::potts_action(m.n, m.q, &schedule, args.grid)?;
            let nodes = r
                .exact
                .grid
                .iter()
                .zip(r.exact.samples.iter().zip(&r.constructive.samples))
                .map(|(&s, (&v, &c))| ActionNode { s, beta: schedule.beta(s), metric_derivative_sq: v, constructive_cost: Some(c) })
                .collect();
            ActionOutput {
                schema: "dotanneal.action.v1",
                model: Model::Potts,
                n: m.n,
                q: Some(m.q),
                beta_start: start,
                beta_end: m.beta,
                grid_nodes: args.grid,
                rule: r.exact.rule,
                action: r.exact.action,
                error_estimate: r.exact.error_estimate,
                nodes,
                within_bound: r.nodewise_ordered && r.derivative_bound_holds && r.exact.action <= r.constructive.action,
                bound: ActionBound { kind: "constructive flux cost", value: r.constructive.action },
            }
        }
    };
    let path = resolve(args.output.as_deref(), out_dir, "action.json");
    write_json(&path, &out)?;
    println!("action {:.6e} (bound {:.6e}, {}) -> {}", out.action, out.bound.value, out.bound.kind, path.display());
    Ok(if out.within_bound {
        Outcome::Pass
    } else {
        Outcome::Violated(format!("action {:e} exceeds {} = {:e}", out.action, out.bound.kind, out.bound.value))
    })
}

/// Runner, action model, schedule and initial law of one annealing setup.
struct Setup {
    runner: Box<dyn GibbsModel<f64>>,
    action_model: Box<dyn GibbsModel<f64>>,
    schedule: Schedule<f64>,
    initial: ProbVector<f64>,
    space: &'static str,
}

fn setup(args: &AnnealArgs) -> CliResult<Setup> {
    let m = &args.model;
    let full = match args.space {
        Space::Full => true,
        Space::Projected => false,
        Space::Auto => m.model == Model::Ising && m.n <= FULL_SPACE_MAX_SITES,
    };
    match m.model {
        Model::Ising => {
            let schedule = Schedule::heating(m.beta)?;
            let folded = ProjectedIsing::<f64>::new(m.n, true)?;
            let (runner, initial, space): (Box<dyn GibbsModel<f64>>, _, _) = if full {
                (Box::new(ising::full_model::<f64>(m.n)?), ProbVector::uniform(1 << m.n), "full")
            } else {
                // The folded pushforward of the uniform law is the folded law at β = 0.
                let initial = folded.distribution(0.0)?;
                (Box::new(folded.clone()), initial, "projected")
            };
            Ok(Setup { runner, action_model: Box::new(folded), schedule, initial, space })
        }
        Model::Potts => {
            let min = m.q as f64 / 2.0;
            if m.beta < min {
                return Err(Error::PreconditionBeta { beta: m.beta, min }.into());
            }
            let schedule = Schedule::linear(initial_beta(m.n, m.q, args.eps), m.beta)?;
            let folded = ProjectedPotts::<f64>::new(m.n, m.q, true)?;
            let (runner, initial, space): (Box<dyn GibbsModel<f64>>, _, _) = if full {
                (Box::new(FullPotts::<f64>::new(m.n, m.q)?), init_measure_full(m.n, m.q, args.eps)?, "full")
            } else {
                (Box::new(folded.clone()), init_measure_folded(m.n, m.q, args.eps)?, "projected")
            };
            Ok(Setup { runner, action_model: Box::new(folded), schedule, initial, space })
        }
    }
}

#[derive(Serialize)]
struct ExactRow<'a> {
    state: usize,
    label: &'a str,
    probability: f64,
    target: f64,
}

#[derive(Serialize)]
struct SampleRow<'a> {
    state: usize,
    label: &'a str,
    count: u64,
    frequency: f64,
}

#[derive(Serialize)]
struct AnnealHeader {
    schema: &'static str,
    mode: Mode,
    model: Model,
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<usize>,
    space: &'static str,
    states: usize,
    beta_start: f64,
    beta_end: f64,
    eps: f64,
    action: f64,
    horizon: f64,
    layers: usize,
}

#[derive(Serialize)]
struct ExactOutput<'a> {
    #[serde(flatten)]
    header: AnnealHeader,
    kl: f64,
    kl0: f64,
    delta: f64,
    decomposition: BoundDecomposition,
    pass: bool,
    bound_holds: bool,
    marginal: Vec<ExactRow<'a>>,
}

#[derive(Serialize)]
struct SampleOutput<'a> {
    #[serde(flatten)]
    header: AnnealHeader,
    seed: u64,
    replicates: usize,
    max_jumps: Option<u64>,
    truncation_probability: Option<f64>,
    total_jumps: u64,
    counts: Vec<SampleRow<'a>>,
}

pub fn anneal(args: &AnnealArgs, out_dir: &Path) -> CliResult<Outcome> {
    let m = &args.model;
    m.validate()?;
    check_eps(args.eps)?;
    check_grid(args.grid)?;
    if args.replicates == 0 {
        return Err(CliError("--replicates must be at least 1".into()));
    }
    if args.layers == Some(0) {
        return Err(CliError("--layers must be at least 1".into()));
    }
    if let Some(t) = args.horizon {
        if !(t.is_finite() && t >= 0.0) {
            return Err(CliError(format!("--horizon {t} must be finite and >= 0")));
        }
    }
    let st = setup(args)?;
    let act = curve_action(&gibbs_curve(st.action_model.as_ref(), &st.schedule, args.grid)?)?.action;
    let lipschitz = st.runner.rate_log_lipschitz();
    let max_beta_prime = st.schedule.max_abs_beta_prime(1025);
    let stability_layers =
        |t: f64| stability_window(args.eps, lipschitz, max_beta_prime, t).map_or(1, |eta| (1.0 / eta).ceil().max(1.0) as usize);
    let (horizon, rule_layers) = match (args.horizon, args.horizon_rule) {
        (Some(t), _) => (t, stability_layers(t)),
        (None, HorizonRule::ClosedForm) => {
            if m.model != Model::Ising {
                return Err(CliError("--horizon-rule closed-form applies to the Ising model only".into()));
            }
            ising::closed_form_schedule(m.n, m.beta, args.eps)
        }
        (None, HorizonRule::Action) => {
            let t = 2.0 * act / args.eps;
            (t, stability_layers(t))
        }
    };
    let layers = args.layers.unwrap_or(rule_layers);
    let labels = st.runner.graph().labels().to_vec();
    let header = AnnealHeader {
        schema: "dotanneal.anneal.v1",
        mode: args.mode,
        model: m.model,
        n: m.n,
        q: (m.model == Model::Potts).then_some(m.q),
        space: st.space,
        states: labels.len(),
        beta_start: st.schedule.start(),
        beta_end: st.schedule.end(),
        eps: args.eps,
        action: act,
        horizon,
        layers,
    };
    let ext = if args.format == Format::Json { "json" } else { "csv" };
    let path = resolve(args.output.as_deref(), out_dir, &format!("anneal.{ext}"));
    match args.mode {
        Mode::Exact => {
            let r = verify_error_bound(&AnnealingProblem {
                runner: st.runner.as_ref(),
                action_model: st.action_model.as_ref(),
                schedule: st.schedule.clone(),
                initial: st.initial.clone(),
                eps: args.eps,
                horizon: Horizon::Fixed { horizon, layers },
                grid_nodes: args.grid,
            })?;
            let target = st.runner.distribution(st.schedule.end())?;
            let rows: Vec<ExactRow> = r
                .marginal
                .iter()
                .zip(target.iter())
                .enumerate()
                .map(|(i, (&p, &t))| ExactRow { state: i, label: &labels[i], probability: p, target: t })
                .collect();
            let out = ExactOutput {
                header,
                kl: r.kl,
                kl0: r.kl0,
                delta: r.delta,
                decomposition: r.decomposition,
                pass: r.pass,
                bound_holds: r.bound_holds,
                marginal: rows,
            };
            match args.format {
                Format::Json => write_json(&path, &out)?,
                Format::Csv => write_csv(&path, &out.marginal)?,
            }
            println!(
                "exact: T = {horizon}, N = {layers}, KL = {:.6e} (eps {}, bound {:.6e}) -> {}",
                r.kl,
                args.eps,
                r.decomposition.total,
                path.display()
            );
            Ok(if r.bound_holds {
                Outcome::Pass
            } else {
                Outcome::Violated(format!("final KL {:e} exceeds the decomposition {:e}", r.kl, r.decomposition.total))
            })
        }
        Mode::Sample => {
            let config = AnnealConfig {
                seed: args.seed,
                replicates: args.replicates,
                max_jumps: args.max_jumps,
                ..AnnealConfig::new(horizon, layers)?
            };
            let mut cdf: Vec<f64> = st
                .initial
                .iter()
                .scan(0.0, |acc, &p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect();
            let last = cdf.len() - 1;
            cdf[last] = f64::INFINITY;
            let runner = st.runner.as_ref();
            let schedule = &st.schedule;
            let r = run_sampler(
                |s| TransitionMatrix::from_kernel(runner.kernel(schedule.beta(s))?),
                &config,
                |rng| {
                    let u: f64 = rng.gen();
                    cdf.partition_point(|&c| c <= u).min(last)
                },
            )?;
            let mut counts = vec![0u64; labels.len()];
            for &x in &r.final_states {
                counts[x] += 1;
            }
            let total = args.replicates as f64;
            let rows: Vec<SampleRow> = counts
                .iter()
                .enumerate()
                .map(|(i, &c)| SampleRow { state: i, label: &labels[i], count: c, frequency: c as f64 / total })
                .collect();
            let out = SampleOutput {
                header,
                seed: args.seed,
                replicates: args.replicates,
                max_jumps: args.max_jumps,
                truncation_probability: r.truncation_probability,
                total_jumps: r.total_jumps,
                counts: rows,
            };
            match args.format {
                Format::Json => write_json(&path, &out)?,
                Format::Csv => write_csv(&path, &out.counts)?,
            }
            println!("sample: T = {horizon}, N = {layers}, {} replicates, {} jumps -> {}", args.replicates, r.total_jumps, path.display());
            Ok(Outcome::Pass)
        }
    }
}

#[derive(Serialize)]
struct IsingRow {
    m: i64,
    probability: f64,
    log_probability: f64,
}

#[derive(Serialize)]
struct PottsRow {
    k: usize,
    magnetization: String,
    orbit_size: u128,
    log_weight: f64,
    probability: f64,
}

fn label(m: &[usize]) -> String {
    let parts: Vec<String> = m.iter().map(usize::to_string).collect();
    parts.join(";")
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = v.clone().fold(f64::NEG_INFINITY, f64::max);
    max + v.map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn landscape(args: &LandscapeArgs, out_dir: &Path) -> CliResult<Outcome> {
    let m = &args.model;
    m.validate()?;
    let path = resolve(args.output.as_deref(), out_dir, "landscape.csv");
    match m.model {
        Model::Ising => {
            let chain = ProjectedIsing::<f64>::new(m.n, args.folded)?;
            let pi = chain.distribution(m.beta)?;
            let rows: Vec<IsingRow> =
                chain.states().iter().zip(pi.iter()).map(|(&s, &p)| IsingRow { m: s, probability: p, log_probability: p.ln() }).collect();
            write_csv(&path, &rows)?;
            let r = ising::landscape_classify(m.n, m.beta)?;
            println!("ising folded shape {:?}, mode |m| = {} -> {}", r.shape, r.mode, path.display());
        }
        Model::Potts => {
            let table = ln_factorials(m.n);
            let lw = |v: &[usize]| potts::paths::log_weight(&table, v, m.beta);
            let all = compositions(m.n, m.q);
            let log_z = log_sum_exp(all.iter().map(|v| lw(v)));
            let rows: Vec<PottsRow> = match args.slice {
                Slice::Diagonal => (0..=m.n / m.q)
                    .map(|k| {
                        let v = potts::diagonal_point(m.n, m.q, k);
                        let w = lw(&v);
                        PottsRow { k, magnetization: label(&v), orbit_size: 1, log_weight: w, probability: (w - log_z).exp() }
                    })
                    .collect(),
                Slice::Sorted => sorted_states(m.n, m.q)
                    .iter()
                    .enumerate()
                    .map(|(k, v)| {
                        let w = lw(v);
                        let orbit = potts::orbit_size(v);
                        PottsRow {
                            k,
                            magnetization: label(v),
                            orbit_size: orbit,
                            log_weight: w,
                            probability: orbit as f64 * (w - log_z).exp(),
                        }
                    })
                    .collect(),
            };
            write_csv(&path, &rows)?;
            let profile = potts::diagonal_profile(m.n, m.q, m.beta);
            println!(
                "potts diagonal mode k = {}, unimodal {} -> {}",
                potts::diagonal_mode(m.n, m.q, m.beta),
                potts::is_unimodal(&profile),
                path.display()
            );
        }
    }
    Ok(Outcome::Pass)
}
