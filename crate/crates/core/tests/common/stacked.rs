//! Dense stacked Kronecker-product evaluation of the seeker vector field.

use std::sync::Arc;

use coalition_nash::game::{project_nonneg, CoalitionGame};
use coalition_nash::graph::{build_selectors, CommTopology};
use coalition_nash::seeker::{seeker_rhs, GainConfig, SeekerLayout, SeekerState};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn eye(k: usize) -> DMatrix<f64> {
    DMatrix::identity(k, k)
}

fn stack(parts: impl IntoIterator<Item = DVector<f64>>) -> DVector<f64> {
    let v: Vec<f64> = parts.into_iter().flat_map(|p| p.iter().copied().collect::<Vec<_>>()).collect();
    DVector::from_vec(v)
}

fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Per-agent vectors in the stacked order, pulled out of a state.
struct Stacked {
    eta: DVector<f64>,
    theta: DVector<f64>,
    omega: DVector<f64>,
    /// Per coalition.
    lambda: Vec<DVector<f64>>,
    rho: Vec<DVector<f64>>,
    xi: Vec<DVector<f64>>,
    zeta: Vec<DVector<f64>>,
    /// Full views `s = col(chi_1, .., chi_n)`.
    s: DVector<f64>,
    /// `xi_{p,p}`: the entry tracking the agent's own coordinates.
    xi_own: DVector<f64>,
}

fn gather(state: &SeekerState, game: &CoalitionGame) -> Stacked {
    let n = game.num_agents();
    let own = |p: usize| game.agent_id(p).1;
    let per_coalition = |f: &dyn Fn(usize) -> DVector<f64>| {
        (0..game.num_coalitions())
            .map(|i| stack(game.coalition_agents(i).map(f)))
            .collect::<Vec<_>>()
    };
    Stacked {
        eta: stack((0..n).map(|p| state.eta(p).into_owned())),
        theta: stack((0..n).map(|p| state.theta(p).into_owned())),
        omega: stack((0..n).map(|p| state.omega(p).into_owned())),
        lambda: per_coalition(&|p| state.lambda(p).into_owned()),
        rho: per_coalition(&|p| state.rho(p).into_owned()),
        xi: per_coalition(&|p| stack((0..game.coalition_size(game.coalition_of(p))).map(|k| state.xi(p, k).into_owned()))),
        zeta: per_coalition(&|p| stack((0..game.coalition_size(game.coalition_of(p))).map(|k| state.zeta(p, k).into_owned()))),
        s: stack((0..n).map(|p| state.chi(p))),
        xi_own: stack((0..n).map(|p| state.xi(p, own(p)).into_owned())),
    }
}

/// Largest relative deviation between the per-agent field and the dense
/// stacked evaluation at one random state.
pub fn stacked_deviation(game: &CoalitionGame, topo: &CommTopology, seed: u64, scale: f64) -> f64 {
    let gains = GainConfig::default();
    let layout = Arc::new(SeekerLayout::new(game));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = DVector::from_fn(layout.len(), |_, _| rng.random_range(-scale..scale));
    let state = SeekerState::from_vec(layout.clone(), data).unwrap();
    let d = seeker_rhs(&state, game, topo, &gains).unwrap();
    let (x, dx) = (gather(&state, game), gather(&d, game));

    let n = game.num_agents();
    let r = game.action_dim();
    let (alpha, beta, kappa) = (gains.alpha, gains.beta, gains.kappa);
    let b = block_diag(&game.agents().iter().map(|a| a.local.matrix.clone()).collect::<Vec<_>>());
    let bb = stack(game.agents().iter().map(|a| a.local.bound.clone()));
    let w = project_nonneg(&(&x.omega + &b * &x.eta - &bb));
    let mut worst = 0.0f64;
    let mut close = |a: &DVector<f64>, e: &DVector<f64>| {
        worst = worst.max((a - e).amax() / (1.0 + e.amax()));
    };

    // Auxiliary primal dynamics.
    let mut g_t_lambda = Vec::new();
    for i in 0..game.num_coalitions() {
        let m = game.coalition_size(i);
        let pi = game.coupling_rows(i);
        let gi = block_diag(&game.coalition_agents(i).map(|p| game.agent(p).coupling.matrix.clone()).collect::<Vec<_>>());
        let lam_plus = project_nonneg(&x.lambda[i]);
        g_t_lambda.push(gi.transpose() * &lam_plus);

        // Multipliers with dual consensus.
        let li = topo.intra_laplacian(i).kronecker(&eye(pi));
        let gbar = stack(game.coalition_agents(i).map(|p| game.agent(p).coupling.bound.clone()));
        let eta_i = x.eta.rows(game.coalition_range(i).start, m * r).into_owned();
        let d_lambda = -&x.lambda[i] + &lam_plus + &gi * &eta_i - gbar - &li * &x.rho[i] - &li * &lam_plus;
        close(&dx.lambda[i], &d_lambda);
        close(&dx.rho[i], &(&li * &lam_plus));

        // Gradient tracking.
        let lt = topo.intra_laplacian(i).kronecker(&eye(m * r));
        let grads = stack(game.coalition_agents(i).map(|p| game.own_coalition_gradient(p, &state.chi(p)).unwrap()));
        let d_xi = -(&x.xi[i] + &lt * &x.xi[i] + &lt * &x.zeta[i] - grads) * beta;
        close(&dx.xi[i], &d_xi);
        close(&dx.zeta[i], &(&lt * &x.xi[i] * beta));
    }
    let d_theta = -&x.theta * alpha - (&x.xi_own + stack(g_t_lambda) + b.transpose() * &w);
    close(&dx.eta, &x.theta);
    close(&dx.theta, &d_theta);
    close(&dx.omega, &(&b * &x.theta - &x.omega + &w));

    // Estimation: Xi ds = -kappa Xi (Lbar (x) I_{nr}) s, and Theta s = eta.
    let sel = build_selectors(n, r).unwrap();
    let lbar = topo.global_laplacian().kronecker(&eye(n * r));
    close(&(&sel.theta * &x.s), &x.eta);
    let expected = -(&sel.xi * &lbar * &x.s) * kappa;
    close(&(&sel.xi * &dx.s), &expected);
    worst
}
