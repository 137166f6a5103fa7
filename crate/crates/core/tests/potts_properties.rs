mod common;

use std::sync::Arc;

use dotanneal::combinatorics::compositions;
use dotanneal::gibbs::GibbsModel;
use dotanneal::graph::divergence;
use dotanneal::ising::{self, ProjectedIsing};
use dotanneal::markov::bfs_paths;
use dotanneal::potts::pipeline::{initial_beta, sorted_states};
use dotanneal::potts::{self, FullPotts, PottsHorizon, PottsModel, ProjectedPotts};
use dotanneal::{Error, Schedule};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

/// Conditioning the magnetization law on every count except colors `a` and `b` leaves the
/// projected Ising law with `N = m_a + m_b` spins at inverse temperature `Nβ/n`.
#[test]
fn two_color_conditionals_are_ising() {
    let (n, q, beta) = (8usize, 3usize, 1.7f64);
    let chain = ProjectedPotts::<f64>::new(n, q, false).unwrap();
    let pi = chain.distribution(beta).unwrap();
    let mut checked = 0;
    for (a, b) in [(0usize, 1usize), (0, 2), (1, 2)] {
        let c = 3 - a - b;
        for rest in 0..=n {
            let spins = n - rest;
            if spins == 0 {
                continue;
            }
            let ising_chain = ProjectedIsing::<f64>::new(spins, false).unwrap();
            let target = ising_chain.distribution(beta * spins as f64 / n as f64).unwrap();
            let mut cond = Vec::new();
            for k in 0..=spins {
                let mut m = vec![0; q];
                m[a] = k;
                m[b] = spins - k;
                m[c] = rest;
                cond.push((2 * k as i64 - spins as i64, pi[chain.index_of(&m).unwrap()]));
            }
            let z: f64 = cond.iter().map(|x| x.1).sum();
            for (mag, w) in cond {
                let idx = ising_chain.states().iter().position(|&s| s == mag).unwrap();
                assert!((w / z - target[idx]).abs() <= 1e-12, "a={a} b={b} rest={rest} mag={mag}");
                checked += 1;
            }
        }
    }
    assert!(checked > 0);
}

#[test]
fn sizes_match_binomial() {
    for (n, q) in [(4usize, 2usize), (6, 3), (8, 3), (6, 4), (10, 5)] {
        let model = PottsModel::new(n, q).unwrap();
        let unfolded = ProjectedPotts::<f64>::new(n, q, false).unwrap();
        let folded = ProjectedPotts::<f64>::new(n, q, true).unwrap();
        assert_eq!(unfolded.states().len() as u128, model.projected_size().unwrap());
        assert_eq!(unfolded.states().len(), compositions(n, q).len());
        assert!(folded.states().len() <= unfolded.states().len());
        assert_eq!(folded.states().len(), sorted_states(n, q).len());
    }
}

#[test]
fn color_permutations_leave_the_law_unchanged() {
    let chain = ProjectedPotts::<f64>::new(7, 3, false).unwrap();
    for beta in [0.0, 1.5, 4.0] {
        let pi = chain.distribution(beta).unwrap();
        for m in chain.states() {
            let mut p = m.clone();
            p.rotate_left(1);
            assert_eq!(pi[chain.index_of(m).unwrap()], pi[chain.index_of(&p).unwrap()]);
            let mut r = m.clone();
            r.reverse();
            assert_eq!(pi[chain.index_of(m).unwrap()], pi[chain.index_of(&r).unwrap()]);
        }
    }
}

#[test]
fn two_colors_reduce_to_ising() {
    for n in [2usize, 4, 7] {
        for beta in [0.0f64, 0.8, 2.0] {
            let p = potts::potts_distribution(n, 2, beta).unwrap();
            let i = ising::ising_distribution(n, beta).unwrap();
            for (a, b) in p.iter().zip(i.iter()) {
                assert!((a - b).abs() <= 1e-14 * b.max(1e-300));
            }
            let block = potts::block_glauber_kernel(&p, n, 2).unwrap();
            let glauber = ising::glauber_kernel(&i).unwrap();
            for (a, b) in block.forward().iter().chain(block.backward()).zip(glauber.forward().iter().chain(glauber.backward())) {
                assert!((a - b).abs() <= 1e-14);
            }
        }
    }
}

#[test]
fn uniform_law_gives_uniform_single_site_rates() {
    let k = potts::block_glauber_kernel(&dotanneal::ProbVector::<f64>::uniform(32), 5, 2).unwrap();
    assert!(k.forward().iter().chain(k.backward()).all(|&r| (r - 0.1).abs() < 1e-15));
}

#[test]
fn exact_action_is_below_constructive_bound() {
    let beta0 = initial_beta(5, 3, 0.5);
    let r = potts::potts_action(5, 3, &Schedule::linear(beta0, 1.5).unwrap(), 101).unwrap();
    assert!(r.nodewise_ordered && r.derivative_bound_holds);
    assert!(r.exact.action <= r.constructive.action);
}

#[test]
fn actions_below_the_spinodal_are_rejected() {
    let r = potts::potts_action(5, 3, &Schedule::linear(3.0, 1.0).unwrap(), 11);
    assert!(matches!(r, Err(Error::PreconditionBeta { .. })));
    let r = potts::potts_pipeline(5, 3, 1.2, 0.5, PottsHorizon::ActionBased, 11, false);
    assert!(matches!(r, Err(Error::PreconditionBeta { .. })));
}

#[test]
fn constant_curve_keeps_initialization_error() {
    let beta0 = initial_beta(4, 3, 0.5);
    let r = potts::potts_pipeline(4, 3, beta0, 0.5, PottsHorizon::ActionBased, 21, true).unwrap();
    assert_eq!(r.action.exact.action, 0.0);
    let full = r.full.unwrap();
    assert!((full.kl - r.init.kl).abs() <= 1e-12);
    assert!((r.projected.kl - r.init.kl).abs() <= 1e-12);
}

#[test]
fn full_and_sorted_runs_agree() {
    let r = potts::potts_pipeline(4, 3, 1.5, 0.5, PottsHorizon::Fixed { horizon: 5.0, layers: 200 }, 51, true).unwrap();
    let full = r.full.unwrap();
    assert!((full.kl - r.projected.kl).abs() <= 1e-10 * full.kl.max(1e-12), "{} vs {}", full.kl, r.projected.kl);
}

#[test]
fn block_kernel_is_log_lipschitz_in_beta() {
    let full = FullPotts::<f64>::new(4, 3).unwrap();
    let (b, d) = (2.0, 0.05);
    let k0 = full.kernel(b).unwrap();
    let k1 = full.kernel(b + d).unwrap();
    let allowance = (full.rate_log_lipschitz() * d).exp() - 1.0;
    for (a, c) in k0.forward().iter().chain(k0.backward()).zip(k1.forward().iter().chain(k1.backward())) {
        assert!((c / a - 1.0).abs() <= allowance + 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn diagonal_is_unimodal_past_the_spinodal(q in 2usize..6, n_extra in 0usize..40, excess in 0.0f64..4.0) {
        let n = q + n_extra;
        let beta = q as f64 / 2.0 + excess;
        prop_assert!(potts::is_unimodal(&potts::diagonal_profile(n, q, beta)));
    }

    #[test]
    fn greedy_plans_satisfy_all_checks(seed in any::<u64>(), n in 2usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected_graph(&mut rng, n, 0.15);
        let paths = bfs_paths(&g);
        let d = random_rate(&mut rng, n);
        let (flux, plan) = potts::greedy_flux(&d, Arc::clone(&g), |x, y| {
            let p = paths[&(x.min(y), x.max(y))].clone();
            Ok(if x < y { p } else { p.into_iter().rev().collect() })
        })
        .unwrap();
        prop_assert!(plan.check(d.as_slice()).all());
        for (a, b) in d.iter().zip(divergence(&flux).iter()) {
            prop_assert!((a + b).abs() <= 1e-12);
        }
    }

    #[test]
    fn constructed_paths_meet_their_guarantees(q in 2usize..5, n_extra in 0usize..10, excess in 0.0f64..3.0) {
        let n = q + n_extra;
        let beta = q as f64 / 2.0 + excess;
        let mode = potts::diagonal_point(n, q, potts::diagonal_mode(n, q, beta));
        for m in sorted_states(n, q) {
            let path = potts::potts_path(n, q, beta, &m).unwrap();
            prop_assert!(path.len() <= 2 * n);
            prop_assert!(potts::paths::path_log_dip(n, beta, &m, &path) >= -((q - 1) as f64) - 1e-12);
            prop_assert_eq!(path.last().cloned().unwrap_or_else(|| m.clone()), mode.clone());
        }
    }
}
