//! Load-time checks of the standing assumptions on a game: strict
//! feasibility, strong convexity of each coalition in its own block,
//! strong monotonicity and a Lipschitz estimate of the pseudogradient.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::CoalitionGame;
use crate::Result;

/// Margin below which a coalition is reported as lacking a Slater point.
pub const SLATER_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct GameReport {
    /// Per coalition: smallest row-normalized slack at the best point found.
    pub slater_margins: Vec<f64>,
    /// Per coalition: smallest eigenvalue of the own-block Hessian of `J_i`.
    pub convexity: Vec<f64>,
    /// Smallest eigenvalue of the symmetric part of the pseudogradient Jacobian.
    pub monotonicity: f64,
    pub lipschitz: f64,
}

impl GameReport {
    pub fn slater_ok(&self) -> bool {
        self.slater_margins.iter().all(|&m| m > SLATER_THRESHOLD)
    }

    pub fn convex_ok(&self) -> bool {
        self.convexity.iter().all(|&h| h > 0.0)
    }

    pub fn monotone_ok(&self) -> bool {
        self.monotonicity > 0.0
    }
}

pub fn validate_game(game: &CoalitionGame) -> Result<GameReport> {
    Ok(GameReport {
        slater_margins: (0..game.num_coalitions()).map(|i| slater_margin(game, i)).collect(),
        convexity: convexity_margins(game)?,
        monotonicity: monotonicity_margin(game)?,
        lipschitz: lipschitz_estimate(game, 64, 0)?,
    })
}

/// Origin plus uniform samples in `[-1, 1]^d`; quadratic games only need
/// the origin since their Jacobian is constant.
fn probe_points(game: &CoalitionGame) -> Vec<DVector<f64>> {
    let mut pts = vec![DVector::zeros(game.dim())];
    if !game.is_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..8 {
            pts.push(DVector::from_fn(game.dim(), |_, _| rng.random_range(-1.0..1.0)));
        }
    }
    pts
}

fn sym_min_eig(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::INFINITY;
    }
    ((m + m.transpose()) * 0.5).symmetric_eigenvalues().min()
}

pub fn convexity_margins(game: &CoalitionGame) -> Result<Vec<f64>> {
    let mut out = vec![f64::INFINITY; game.num_coalitions()];
    for x in probe_points(game) {
        let jac = game.pseudogradient_jacobian(&x)?;
        for (i, slot) in out.iter_mut().enumerate() {
            let range = game.coalition_range(i);
            let block = jac.view((range.start, range.start), (range.len(), range.len())).into_owned();
            *slot = slot.min(sym_min_eig(&block));
        }
    }
    Ok(out)
}

pub fn monotonicity_margin(game: &CoalitionGame) -> Result<f64> {
    let mut out = f64::INFINITY;
    for x in probe_points(game) {
        out = out.min(sym_min_eig(&game.pseudogradient_jacobian(&x)?));
    }
    Ok(out)
}

/// `max |F(x) - F(y)| / |x - y|` over random pairs in `[-1, 1]^d`.
pub fn lipschitz_estimate(game: &CoalitionGame, samples: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = game.dim();
    let mut best: f64 = 0.0;
    for _ in 0..samples {
        let x = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let num = (game.pseudogradient(&x)? - game.pseudogradient(&y)?).norm();
        let den = (&x - &y).norm();
        if den > 0.0 {
            best = best.max(num / den);
        }
    }
    Ok(best)
}

/// Searches for a strictly feasible point of coalition `i`'s constraints
/// and returns its smallest row-normalized slack. Positive means the point
/// is strictly feasible; the value is a certified lower bound on the best
/// achievable margin.
///
/// The search is gradient ascent on a log-sum-exp smoothing of the
/// minimum slack with a shrinking temperature.
pub fn slater_margin(game: &CoalitionGame, i: usize) -> f64 {
    let r = game.action_dim();
    let agents = game.coalition_agents(i);
    let d = agents.len() * r;

    // Rows over the coalition block: (normal, bound, scale).
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let p_i = game.coupling_rows(i);
    for k in 0..p_i {
        let mut a = DVector::zeros(d);
        let mut v = 0.0;
        for (slot, p) in agents.clone().enumerate() {
            let c = &game.agent(p).coupling;
            for col in 0..r {
                a[slot * r + col] = c.matrix[(k, col)];
            }
            v += c.bound[k];
        }
        rows.push((a, v));
    }
    for (slot, p) in agents.clone().enumerate() {
        let l = &game.agent(p).local;
        for k in 0..l.rows() {
            let mut a = DVector::zeros(d);
            for col in 0..r {
                a[slot * r + col] = l.matrix[(k, col)];
            }
            rows.push((a, l.bound[k]));
        }
    }
    if rows.is_empty() {
        return f64::INFINITY;
    }
    let rows: Vec<(DVector<f64>, f64)> = rows
        .into_iter()
        .map(|(a, v)| {
            let nrm = a.norm();
            if nrm > 0.0 {
                (a / nrm, v / nrm)
            } else {
                (a, v)
            }
        })
        .collect();

    let slacks = |x: &DVector<f64>| -> Vec<f64> { rows.iter().map(|(a, v)| v - a.dot(x)).collect() };
    let min_slack = |x: &DVector<f64>| slacks(x).into_iter().fold(f64::INFINITY, f64::min);

    let scale = rows.iter().map(|(_, v)| v.abs()).fold(1.0, f64::max);
    let mut x = DVector::zeros(d);
    let mut best = min_slack(&x);
    let mut tau = scale;
    for _ in 0..8 {
        for _ in 0..400 {
            let s = slacks(&x);
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            let weights: Vec<f64> = s.iter().map(|&v| (-(v - lo) / tau).exp()).collect();
            let total: f64 = weights.iter().sum();
            let mut grad = DVector::zeros(d);
            for ((a, _), w) in rows.iter().zip(&weights) {
                grad -= a * (w / total);
            }
            if grad.norm() == 0.0 {
                break;
            }
            x += grad * tau;
            best = best.max(min_slack(&x));
        }
        tau *= 0.25;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{Affine, AgentSpec, Cost, QuadraticCost};

    fn box_agent(n: usize, k: usize, upper: f64, budget: f64) -> AgentSpec {
        let mut h = DMatrix::zeros(n, n);
        h[(k, k)] = 1.0;
        AgentSpec {
            cost: Cost::Quadratic(QuadraticCost::new(h, DVector::zeros(n), 0.0).unwrap()),
            local: Affine::new(
                DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
                DVector::from_vec(vec![upper, upper]),
            )
            .unwrap(),
            coupling: Affine::new(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, budget)).unwrap(),
        }
    }

    #[test]
    fn feasible_budget_has_margin() {
        let g = CoalitionGame::new(1, vec![2], vec![box_agent(2, 0, 1.0, 0.0), box_agent(2, 1, 1.0, 0.0)]).unwrap();
        let m = slater_margin(&g, 0);
        // Best point is x = (-a, -a) balancing box slack 1 - a against
        // budget slack 2a / sqrt(2): a = 1 / (1 + sqrt 2).
        let want = 1.0 - 1.0 / (1.0 + 2f64.sqrt());
        assert!(m > SLATER_THRESHOLD && m <= want + 1e-9, "{m} vs {want}");
        assert!(m > 0.95 * want);
    }

    #[test]
    fn infeasible_budget_has_no_margin() {
        let g = CoalitionGame::new(1, vec![2], vec![box_agent(2, 0, 1.0, -1.5), box_agent(2, 1, 1.0, -1.5)]).unwrap();
        assert!(slater_margin(&g, 0) < 0.0);
    }

    #[test]
    fn identity_costs_are_convex_and_monotone() {
        let g = CoalitionGame::new(1, vec![2], vec![box_agent(2, 0, 1.0, 0.0), box_agent(2, 1, 1.0, 0.0)]).unwrap();
        let rep = validate_game(&g).unwrap();
        // J_1 = x_1^2 / 2, J_2 = x_2^2 / 2, averaged: Hessian I / 2.
        assert!((rep.convexity[0] - 0.5).abs() < 1e-12);
        assert!((rep.monotonicity - 0.5).abs() < 1e-12);
        assert!(rep.lipschitz <= 0.5 + 1e-12);
    }
}
