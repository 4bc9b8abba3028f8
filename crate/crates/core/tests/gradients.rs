#[path = "common/fd.rs"]
mod fd;

use coalition_nash::game::generator::random_coupled_toy;
use coalition_nash::game::{Cost, SmoothCost};
use fd::{fd_pseudogradient, rel_err};
use coalition_nash::usv::{agent_cost, build_confrontation_game, reference_confrontation};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn toy_pseudogradient_matches_differences() {
    for seed in 0..3 {
        let (game, _) = random_coupled_toy(seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let x = DVector::from_fn(game.dim(), |_, _| rng.random_range(-10.0..10.0));
            let err = rel_err(&fd_pseudogradient(&game, &x), &game.pseudogradient(&x).unwrap());
            assert!(err <= 1e-5, "{err}");
        }
    }
}

#[test]
fn confrontation_pseudogradient_matches_differences() {
    let game = build_confrontation_game(&reference_confrontation()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let x = DVector::from_fn(game.dim(), |k, _| {
            if k % 3 == 2 {
                rng.random_range(-4.0..4.0)
            } else {
                rng.random_range(-1000.0..1000.0)
            }
        });
        let err = rel_err(&fd_pseudogradient(&game, &x), &game.pseudogradient(&x).unwrap());
        assert!(err <= 1e-5, "{err}");
    }
}

#[test]
fn assembled_costs_match_direct_task_sums() {
    let config = reference_confrontation();
    let game = build_confrontation_game(&config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let x = DVector::from_fn(game.dim(), |_, _| rng.random_range(-800.0..800.0));
        for p in 0..game.num_agents() {
            let (s, k) = game.agent_id(p);
            let direct = agent_cost(s, k, &x, &config).unwrap();
            let assembled = game.agent(p).cost.value(&x).unwrap();
            assert!((direct - assembled).abs() <= 1e-9 * direct.abs().max(1.0), "agent {p}");
        }
    }
}

proptest! {
    #[test]
    fn smooth_cost_gradient_matches_differences(a in 0.5..3.0f64, b in -2.0..2.0f64, x0 in -2.0..2.0f64, x1 in -2.0..2.0f64) {
        // A non-quadratic cost exercises the numerical-gradient path.
        let cost = Cost::Smooth(SmoothCost::new(2, "logsumexp", std::sync::Arc::new(move |x: &DVector<f64>| {
            (a * x[0]).exp().ln_1p() + b * x[0] * x[1] + x[1].powi(4)
        })));
        let x = DVector::from_vec(vec![x0, x1]);
        let g = cost.gradient(&x).unwrap();
        let sig = 1.0 / (1.0 + (-a * x0).exp());
        let exact = DVector::from_vec(vec![a * sig + b * x1, b * x0 + 4.0 * x1.powi(3)]);
        prop_assert!(rel_err(&g, &exact) <= 1e-5);
    }
}
