//! Random strongly monotone quadratic test games.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{solve_ne_oracle, Affine, AgentSpec, CoalitionGame, Cost, OracleSolution, QuadraticCost};
use crate::graph::CommTopology;
use crate::Result;

/// Box half-width, kept inactive at the generated equilibrium.
const BOX: f64 = 10.0;

fn random_spd(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let q = a.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(dim, |_, _| rng.random_range(lo..hi)));
    &q * d * q.transpose()
}

fn random_sym(rng: &mut ChaCha8Rng, dim: usize, amp: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-amp..amp));
    (&a + a.transpose()) * 0.5
}

/// A game with two coalitions of two scalar agents, strongly monotone
/// pseudogradient, and one coupling budget per coalition that is active
/// at the equilibrium with multiplier above 0.05. Returns the game and its
/// certified equilibrium.
///
/// Deterministic in `seed`; internally rejects and redraws candidates
/// until all properties hold.
pub fn random_coupled_toy(seed: u64) -> Result<(CoalitionGame, OracleSolution)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        if let Some(found) = toy_candidate(&mut rng)? {
            return Ok(found);
        }
    }
}

fn toy_candidate(rng: &mut ChaCha8Rng) -> Result<Option<(CoalitionGame, OracleSolution)>> {
    let sizes = [2usize, 2];
    let n = 4;
    // Per agent Hessian; coalition averages of the own blocks are SPD.
    let mut hs: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut qs: Vec<DVector<f64>> = Vec::with_capacity(n);
    for i in 0..2 {
        let own = i * 2..i * 2 + 2;
        let other = (1 - i) * 2..(1 - i) * 2 + 2;
        let mean = random_spd(rng, 2, 1.0, 3.0);
        let spread = random_sym(rng, 2, 0.5);
        for j in 0..2 {
            let mut h = DMatrix::zeros(n, n);
            let sign = if j == 0 { 1.0 } else { -1.0 };
            h.view_mut((own.start, own.start), (2, 2)).copy_from(&(&mean + &spread * sign));
            let cross = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-0.3..0.3));
            h.view_mut((own.start, other.start), (2, 2)).copy_from(&cross);
            h.view_mut((other.start, own.start), (2, 2)).copy_from(&cross.transpose());
            h.view_mut((other.start, other.start), (2, 2))
                .copy_from(&(DMatrix::identity(2, 2) * 0.5));
            hs.push(h);
            qs.push(DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0)));
        }
    }

    let build = |budgets: [f64; 2]| -> Result<CoalitionGame> {
        let agents = (0..n)
            .map(|p| {
                Ok(AgentSpec {
                    cost: Cost::Quadratic(QuadraticCost::new(hs[p].clone(), qs[p].clone(), 0.0)?),
                    local: Affine::new(
                        DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
                        DVector::from_vec(vec![BOX, BOX]),
                    )?,
                    coupling: Affine::new(
                        DMatrix::from_element(1, 1, 1.0),
                        DVector::from_element(1, budgets[p / 2] / 2.0),
                    )?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        CoalitionGame::new(1, sizes.to_vec(), agents)
    };

    // Unconstrained equilibrium from the linear pseudogradient.
    let probe = build([0.0, 0.0])?;
    let jac = probe.pseudogradient_jacobian(&DVector::zeros(n))?;
    let sym = (&jac + jac.transpose()) * 0.5;
    if sym.symmetric_eigenvalues().min() < 0.5 {
        return Ok(None);
    }
    let offset = probe.pseudogradient(&DVector::zeros(n))?;
    let Some(free) = jac.clone().lu().solve(&(-offset)) else {
        return Ok(None);
    };
    let deltas = [rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)];
    let budgets = [free[0] + free[1] - deltas[0], free[2] + free[3] - deltas[1]];
    let game = build(budgets)?;
    let sol = solve_ne_oracle(&game, 1e-10, 2_000_000)?;
    let active = (0..2).all(|i| sol.lambda[2 * i][0] > 0.05);
    let inside = sol.x.iter().all(|v| v.abs() < BOX - 1.0);
    Ok((active && inside).then_some((game, sol)))
}

/// Intra-coalition edge and a directed ring over the four agents.
pub fn toy_topology() -> Result<CommTopology> {
    CommTopology::from_edges(&[2, 2], &[vec![(0, 1)], vec![(0, 1)]], &[(0, 1), (1, 2), (2, 3), (3, 0)])
}
