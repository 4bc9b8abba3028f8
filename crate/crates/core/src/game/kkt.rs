//! Residuals of the first-order equilibrium conditions.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{project_nonneg, project_nonpos, CoalitionGame};
use crate::{Error, Result};

/// Every field is a nonnegative residual; all zero certifies a Nash
/// equilibrium with the supplied multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktCertificate {
    /// Per agent: `|grad_{x_ij} J_i + G_ij^T P+(lambda_ij) + B_ij^T omega_ij|`.
    pub stationarity: Vec<f64>,
    /// Per coalition: `|P+(sum_j G_ij x_ij - g_ij)|`.
    pub coupling_feasibility: Vec<f64>,
    /// Per agent: `|P+(B_ij x_ij - b_ij)|`.
    pub local_feasibility: Vec<f64>,
    /// Per coalition: worst member's `|P+(lambda_ij) . (sum_j G x - g)|`.
    pub coupling_slackness: Vec<f64>,
    /// Per agent: `|omega_ij . (B_ij x_ij - b_ij)|`.
    pub local_slackness: Vec<f64>,
    /// Per agent: `|P-(omega_ij)|`.
    pub local_dual_feasibility: Vec<f64>,
}

impl KktCertificate {
    pub fn max_residual(&self) -> f64 {
        [
            &self.stationarity,
            &self.coupling_feasibility,
            &self.local_feasibility,
            &self.coupling_slackness,
            &self.local_slackness,
            &self.local_dual_feasibility,
        ]
        .iter()
        .flat_map(|v| v.iter().copied())
        .fold(0.0, f64::max)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }

    /// Coupling feasibility and slackness of agent `p`'s coalition.
    pub fn agent_coupling(&self, game: &CoalitionGame, p: usize) -> f64 {
        let i = game.coalition_of(p);
        self.coupling_feasibility[i].max(self.coupling_slackness[i])
    }

    /// Local feasibility, slackness and dual sign of agent `p`.
    pub fn agent_local(&self, p: usize) -> f64 {
        self.local_feasibility[p]
            .max(self.local_slackness[p])
            .max(self.local_dual_feasibility[p])
    }
}

pub fn kkt_certificate(
    game: &CoalitionGame,
    x: &DVector<f64>,
    lambda: &[DVector<f64>],
    omega: &[DVector<f64>],
) -> Result<KktCertificate> {
    let n = game.num_agents();
    let r = game.action_dim();
    if x.len() != game.dim() || lambda.len() != n || omega.len() != n {
        return Err(Error::Dimension(format!(
            "certificate needs {} actions and {n} multiplier pairs, got {}, {} and {}",
            game.dim(),
            x.len(),
            lambda.len(),
            omega.len()
        )));
    }
    for p in 0..n {
        let a = game.agent(p);
        if lambda[p].len() != a.coupling.rows() || omega[p].len() != a.local.rows() {
            return Err(Error::Dimension(format!(
                "agent {}: multipliers have {} and {} entries, constraints have {} and {} rows",
                p + 1,
                lambda[p].len(),
                omega[p].len(),
                a.coupling.rows(),
                a.local.rows()
            )));
        }
    }

    let f = game.pseudogradient(x)?;
    let mut stationarity = Vec::with_capacity(n);
    let mut local_feasibility = Vec::with_capacity(n);
    let mut local_slackness = Vec::with_capacity(n);
    let mut local_dual_feasibility = Vec::with_capacity(n);
    for p in 0..n {
        let a = game.agent(p);
        let grad = f.rows(p * r, r)
            + a.coupling.matrix.transpose() * project_nonneg(&lambda[p])
            + a.local.matrix.transpose() * &omega[p];
        stationarity.push(grad.norm());
        let res = game.local_residual(p, x);
        local_feasibility.push(project_nonneg(&res).norm());
        local_slackness.push(omega[p].component_mul(&res).norm());
        local_dual_feasibility.push(project_nonpos(&omega[p]).norm());
    }

    let mut coupling_feasibility = Vec::with_capacity(game.num_coalitions());
    let mut coupling_slackness = Vec::with_capacity(game.num_coalitions());
    for i in 0..game.num_coalitions() {
        let res = game.coupling_residual(i, x);
        coupling_feasibility.push(project_nonneg(&res).norm());
        let worst = game
            .coalition_agents(i)
            .map(|p| project_nonneg(&lambda[p]).component_mul(&res).norm())
            .fold(0.0, f64::max);
        coupling_slackness.push(worst);
    }

    Ok(KktCertificate {
        stationarity,
        coupling_feasibility,
        local_feasibility,
        coupling_slackness,
        local_slackness,
        local_dual_feasibility,
    })
}
