mod common;

use std::sync::Arc;

use dotanneal::gibbs::{gibbs_curve, reference_kernel_at, GibbsModel};
use dotanneal::girsanov::{edge_kl_cost, path_kl, psi, reference_kernel, reference_multipliers};
use dotanneal::ising::ProjectedIsing;
use dotanneal::markov::{evolve_fokker_planck, kl, RateKernel};
use dotanneal::quadrature::UniformGrid;
use dotanneal::transport::{action, metric_derivative_sq};
use dotanneal::{Schedule, StateGraph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

fn random_kernel(rng: &mut ChaCha8Rng, g: &Arc<StateGraph>) -> RateKernel<f64> {
    let m = g.num_edges();
    RateKernel::new(g.clone(), (0..m).map(|_| rng.gen_range(0.2..2.0)).collect(), (0..m).map(|_| rng.gen_range(0.2..2.0)).collect())
        .unwrap()
}

#[test]
fn edge_cost_is_below_quadratic_on_log_grid() {
    for i in 0..=180 {
        let rho = 10f64.powf(-6.0 + 9.0 * i as f64 / 180.0);
        let cost = edge_kl_cost(rho);
        assert!(cost >= 0.0 && cost <= rho * rho / 4.0 * (1.0 + 1e-12), "rho={rho}: {cost}");
        assert_eq!(edge_kl_cost(-rho), cost);
    }
}

#[test]
fn multipliers_match_closed_form() {
    for rho in [1e-8, 0.3, 2.0, 50.0, 1e4] {
        let (up, down) = reference_multipliers(rho);
        let root = (1.0f64 + rho * rho / 4.0).sqrt();
        assert!((up - (root + rho / 2.0)).abs() <= 1e-12 * up);
        assert!((up * down - 1.0).abs() <= 1e-12);
        assert!((up - down - rho).abs() <= 1e-12 * up);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn psi_is_nonnegative_with_root_at_one(r in 0.0f64..50.0) {
        prop_assert!(psi(r).unwrap() >= 0.0);
        prop_assert!(psi(1.0f64).unwrap().abs() < 1e-15);
    }

    #[test]
    fn data_processing(seed in any::<u64>(), n in 2usize..6, t_end in 0.2f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected_graph(&mut rng, n, 0.4);
        let p = random_kernel(&mut rng, &g);
        let q = random_kernel(&mut rng, &g);
        let mu0 = random_measure(&mut rng, n);
        let nu0 = random_measure(&mut rng, n);
        let init = kl(mu0.as_slice(), nu0.as_slice()).unwrap();
        let report = path_kl(
            |_| Ok(p.clone()),
            |_| Ok(q.clone()),
            |t| Ok(evolve_fokker_planck(&mu0, &[(t, p.clone())])?.marginal),
            init,
            UniformGrid::new(0.0, t_end, 201).unwrap(),
        )
        .unwrap();
        let mu_t = evolve_fokker_planck(&mu0, &[(t_end, p.clone())]).unwrap().marginal;
        let nu_t = evolve_fokker_planck(&nu0, &[(t_end, q.clone())]).unwrap().marginal;
        let end = kl(mu_t.as_slice(), nu_t.as_slice()).unwrap();
        prop_assert!(end <= report.value + 1e-9);
    }

    #[test]
    fn reference_kernel_carries_the_flux(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_connected_graph(&mut rng, n, 0.3);
        let cap = random_capacity(&mut rng, g);
        let pi = random_measure(&mut rng, n);
        let p = RateKernel::from_capacity(&cap, &pi).unwrap();
        let rate = random_rate(&mut rng, n);
        let md = metric_derivative_sq(&cap, &rate, &pi).unwrap();
        let q = reference_kernel(&p, &cap, &md.flux).unwrap();
        // Under π, the net flow of q across every edge equals the optimal flux.
        for (e, &(a, b)) in cap.graph().edges().iter().enumerate() {
            let net = pi[a] * q.rate(a, b) - pi[b] * q.rate(b, a);
            prop_assert!((net - md.flux.values()[e]).abs() <= 1e-10 * (1.0 + md.flux.values()[e].abs()));
        }
        // Hence π q reproduces the prescribed mass rate.
        let flow = q.left_apply(pi.as_slice());
        for (a, b) in flow.iter().zip(rate.iter()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }
}

#[test]
fn reference_path_kl_is_below_quarter_action() {
    let model = ProjectedIsing::<f64>::new(6, true).unwrap();
    let schedule = Schedule::heating(1.5).unwrap();
    let a = action(&gibbs_curve(&model, &schedule, 201).unwrap()).unwrap().action;
    for horizon in [0.5, 2.0, 10.0] {
        let report = path_kl(
            |t| reference_kernel_at(&model, &schedule, horizon, t),
            |t| model.kernel(schedule.beta(t / horizon)),
            |t| model.distribution(schedule.beta(t / horizon)),
            0.0,
            UniformGrid::new(0.0, horizon, 401).unwrap(),
        )
        .unwrap();
        let bound = a / (4.0 * horizon);
        assert!(report.value <= bound * (1.0 + 1e-6) + report.error_estimate.abs(), "T={horizon}: {} vs {bound}", report.value);
        assert!(report.value > 0.0);
    }
}
