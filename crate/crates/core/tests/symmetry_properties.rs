mod common;

use dotanneal::gibbs::{gibbs_curve, GibbsModel};
use dotanneal::ising::{self, ProjectedIsing};
use dotanneal::markov::RateKernel;
use dotanneal::potts::{self, FullPotts, ProjectedPotts};
use dotanneal::symmetry::{compare_metric_derivative, ChainInstance, Projection};
use dotanneal::transport::action;
use dotanneal::{Error, ProbVector, Schedule};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn full_and_projected_actions<M: GibbsModel<f64>, P: GibbsModel<f64>>(full: &M, reduced: &P, schedule: &Schedule<f64>) -> (f64, f64) {
    let a = action(&gibbs_curve(full, schedule, 41).unwrap()).unwrap().action;
    let b = action(&gibbs_curve(reduced, schedule, 41).unwrap()).unwrap().action;
    (a, b)
}

#[test]
fn ising_action_is_invariant_under_projection() {
    for n in [3, 5, 7] {
        let full = ising::full_model::<f64>(n).unwrap();
        for beta in [0.5, 1.0, 2.0] {
            let s = Schedule::heating(beta).unwrap();
            let (a, b) = full_and_projected_actions(&full, &ProjectedIsing::<f64>::new(n, false).unwrap(), &s);
            let (_, c) = full_and_projected_actions(&full, &ProjectedIsing::<f64>::new(n, true).unwrap(), &s);
            assert!(relative_gap(a, b) <= 1e-7 && relative_gap(a, c) <= 1e-7, "n={n} beta={beta}: {a} {b} {c}");
        }
    }
}

#[test]
fn potts_action_is_invariant_under_projection() {
    let full = FullPotts::<f64>::new(4, 3).unwrap();
    for s in [Schedule::heating(1.0).unwrap(), Schedule::linear(3.0, 1.5).unwrap()] {
        let (a, b) = full_and_projected_actions(&full, &ProjectedPotts::<f64>::new(4, 3, false).unwrap(), &s);
        let (_, c) = full_and_projected_actions(&full, &ProjectedPotts::<f64>::new(4, 3, true).unwrap(), &s);
        assert!(relative_gap(a, b) <= 1e-7 && relative_gap(a, c) <= 1e-7, "{a} {b} {c}");
    }
}

#[test]
fn model_projections_pass_the_symmetry_check() {
    let full = ising::full_model::<f64>(5).unwrap();
    let proj = ising::magnetization_projection(5).unwrap();
    for beta in [0.0, 0.7, 3.0] {
        assert!(proj.verify_symmetry(&full.distribution(beta).unwrap(), &full.kernel(beta).unwrap()).pass);
    }
    let full = FullPotts::<f64>::new(4, 3).unwrap();
    let proj = potts::magnetization_projection(4, 3).unwrap().compose(&potts::sorting_projection(4, 3).unwrap()).unwrap();
    assert!(proj.verify_symmetry(&full.distribution(1.5).unwrap(), &full.kernel(1.5).unwrap()).pass);
}

#[test]
fn doubled_site_rate_breaks_symmetry() {
    let full = ising::full_model::<f64>(3).unwrap();
    let pi = full.distribution(0.5).unwrap();
    let base = full.kernel(0.5).unwrap();
    // Site 0 flips twice as fast as the others.
    let biased =
        RateKernel::from_fn(base.graph().clone(), |x, y| if (x ^ y) == 1 { 2.0 * base.rate(x, y) } else { base.rate(x, y) }).unwrap();
    let proj = ising::magnetization_projection(3).unwrap();
    let report = proj.verify_symmetry(&pi, &biased);
    assert!(!report.pass && report.kernel_fiber.is_some());
    let inst = ChainInstance {
        measure: pi.clone(),
        rate: full.gibbs_rate(0.5, 1.0).unwrap(),
        capacity: dotanneal::markov::capacity_from_kernel(&biased, &pi).unwrap(),
    };
    let projected = inst.project(&proj).unwrap();
    assert!(matches!(compare_metric_derivative(&proj, &inst, &projected), Err(Error::SymmetryViolated(_))));
}

#[test]
fn identity_projection_has_zero_gap() {
    let full = ising::full_model::<f64>(3).unwrap();
    let inst = ChainInstance {
        measure: full.distribution(1.0).unwrap(),
        rate: full.gibbs_rate(1.0, 1.0).unwrap(),
        capacity: full.capacity(1.0).unwrap(),
    };
    let id = Projection::identity(full.graph().clone());
    assert_eq!(compare_metric_derivative(&id, &inst, &inst).unwrap().relative_gap, 0.0);
}

#[test]
fn small_pushforwards() {
    let mag = ising::magnetization_projection(2).unwrap();
    let pushed = mag.project_measure(&ProbVector::<f64>::uniform(4)).unwrap();
    assert_eq!(pushed.as_slice(), &[0.25, 0.5, 0.25]);
    let sort = potts::magnetization_projection(2, 2).unwrap().compose(&potts::sorting_projection(2, 2).unwrap()).unwrap();
    let pushed = sort.project_measure(&ProbVector::<f64>::uniform(4)).unwrap();
    let mut v = pushed.into_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(v, vec![0.5, 0.5]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pushforward_commutes_with_mixtures(seed in any::<u64>(), t in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let proj = ising::magnetization_projection(4).unwrap();
        let mu = random_measure(&mut rng, 16);
        let nu = random_measure(&mut rng, 16);
        let lhs = proj.project_measure(&mu.mix(&nu, t).unwrap()).unwrap();
        let rhs = proj.project_measure(&mu).unwrap().mix(&proj.project_measure(&nu).unwrap(), t).unwrap();
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn composition_matches_sequential_projection(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let first = potts::magnetization_projection(4, 3).unwrap();
        let second = potts::sorting_projection(4, 3).unwrap();
        let both = first.compose(&second).unwrap();
        let full = FullPotts::<f64>::new(4, 3).unwrap();
        let mu = random_measure(&mut rng, 81);
        let cap = random_capacity(&mut rng, full.graph().clone());
        let seq = second.project_measure(&first.project_measure(&mu).unwrap()).unwrap();
        let direct = both.project_measure(&mu).unwrap();
        for (a, b) in seq.iter().zip(direct.iter()) {
            prop_assert!((a - b).abs() <= 1e-15);
        }
        let seq_c = second.project_capacity(&first.project_capacity(&cap).unwrap()).unwrap();
        let direct_c = both.project_capacity(&cap).unwrap();
        for (a, b) in seq_c.weights().iter().zip(direct_c.weights()) {
            prop_assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
        }
    }
}
