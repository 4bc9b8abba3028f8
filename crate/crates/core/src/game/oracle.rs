//! Centralized reference solver.
//!
//! Extragradient iteration on the monotone operator
//! `T(x, mu, nu) = (F(x) + G^T mu + B^T nu, -(G x - g), -(B x - b))` with
//! the multipliers projected onto the nonnegative orthant. `mu` is shared
//! by all members of a coalition, `nu` is per agent.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::validate::lipschitz_estimate;
use super::{kkt_certificate, project_nonneg, CoalitionGame, KktCertificate};
use crate::{Error, Result};

const CHECK_EVERY: usize = 25;

#[derive(Debug, Clone, Serialize)]
pub struct OracleSolution {
    pub x: DVector<f64>,
    /// Per agent; members of one coalition carry the same vector.
    pub lambda: Vec<DVector<f64>>,
    pub omega: Vec<DVector<f64>>,
    pub certificate: KktCertificate,
    pub iterations: usize,
}

#[derive(Clone)]
struct Point {
    x: DVector<f64>,
    mu: Vec<DVector<f64>>,
    nu: Vec<DVector<f64>>,
}

impl Point {
    fn zeros(game: &CoalitionGame) -> Self {
        Self {
            x: DVector::zeros(game.dim()),
            mu: (0..game.num_coalitions())
                .map(|i| DVector::zeros(game.coupling_rows(i)))
                .collect(),
            nu: game.agents().iter().map(|a| DVector::zeros(a.local.rows())).collect(),
        }
    }

    /// `P(self - tau * dir)`.
    fn stepped(&self, dir: &Point, tau: f64) -> Point {
        Point {
            x: &self.x - &dir.x * tau,
            mu: self
                .mu
                .iter()
                .zip(&dir.mu)
                .map(|(m, d)| project_nonneg(&(m - d * tau)))
                .collect(),
            nu: self
                .nu
                .iter()
                .zip(&dir.nu)
                .map(|(m, d)| project_nonneg(&(m - d * tau)))
                .collect(),
        }
    }
}

fn operator(game: &CoalitionGame, w: &Point) -> Result<Point> {
    let r = game.action_dim();
    let mut x = game.pseudogradient(&w.x)?;
    let mut nu = Vec::with_capacity(game.num_agents());
    for p in 0..game.num_agents() {
        let a = game.agent(p);
        let i = game.coalition_of(p);
        let mut block = x.rows_mut(p * r, r);
        block += a.coupling.matrix.transpose() * &w.mu[i] + a.local.matrix.transpose() * &w.nu[p];
        nu.push(-game.local_residual(p, &w.x));
    }
    let mu = (0..game.num_coalitions())
        .map(|i| -game.coupling_residual(i, &w.x))
        .collect();
    Ok(Point { x, mu, nu })
}

/// Stacked constraint matrix, coupling rows first.
fn constraint_matrix(game: &CoalitionGame) -> DMatrix<f64> {
    let r = game.action_dim();
    let coupling: usize = (0..game.num_coalitions()).map(|i| game.coupling_rows(i)).sum();
    let local: usize = game.agents().iter().map(|a| a.local.rows()).sum();
    let mut k = DMatrix::zeros(coupling + local, game.dim());
    let mut row = 0;
    for i in 0..game.num_coalitions() {
        let p_i = game.coupling_rows(i);
        for p in game.coalition_agents(i) {
            k.view_mut((row, p * r), (p_i, r)).copy_from(&game.agent(p).coupling.matrix);
        }
        row += p_i;
    }
    for p in 0..game.num_agents() {
        let b = &game.agent(p).local.matrix;
        k.view_mut((row, p * r), (b.nrows(), r)).copy_from(b);
        row += b.nrows();
    }
    k
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn certify(game: &CoalitionGame, w: &Point, iterations: usize) -> Result<OracleSolution> {
    let lambda: Vec<_> = (0..game.num_agents())
        .map(|p| w.mu[game.coalition_of(p)].clone())
        .collect();
    let certificate = kkt_certificate(game, &w.x, &lambda, &w.nu)?;
    Ok(OracleSolution {
        x: w.x.clone(),
        lambda,
        omega: w.nu.clone(),
        certificate,
        iterations,
    })
}

/// Returns the first checked iterate whose certificate residuals are all
/// at most `tol`.
pub fn solve_ne_oracle(game: &CoalitionGame, tol: f64, max_iter: usize) -> Result<OracleSolution> {
    let ell = if game.is_quadratic() {
        spectral_norm(&game.pseudogradient_jacobian(&DVector::zeros(game.dim()))?)
    } else {
        lipschitz_estimate(game, 64, 0)?
    };
    let k_norm = spectral_norm(&constraint_matrix(game));
    let tau = 0.9 / (ell + k_norm + k_norm * k_norm).max(f64::MIN_POSITIVE);

    let mut w = Point::zeros(game);
    let mut best = certify(game, &w, 0)?;
    if best.certificate.within(tol) {
        return Ok(best);
    }
    for it in 1..=max_iter {
        let half = w.stepped(&operator(game, &w)?, tau);
        w = w.stepped(&operator(game, &half)?, tau);
        if it % CHECK_EVERY == 0 || it == max_iter {
            if !w.x.iter().all(|v| v.is_finite()) {
                return Err(Error::Numerical(format!("reference solver diverged at iteration {it}")));
            }
            let sol = certify(game, &w, it)?;
            if sol.certificate.within(tol) {
                return Ok(sol);
            }
            if sol.certificate.max_residual() < best.certificate.max_residual() {
                best = sol;
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        best_residual: best.certificate.max_residual(),
        best: Box::new(best),
    })
}
