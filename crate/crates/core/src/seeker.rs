//! Decision-layer dynamics.
//!
//! Every agent `p = (i, j)` runs
//!
//! * a damped second-order primal flow on an auxiliary reference `eta`
//!   with velocity `theta`,
//! * a projected multiplier flow for its box constraints (`omega`) and for
//!   the coalition budget (`lambda`, kept in consensus through `rho`),
//! * dynamic average tracking (`xi`, `zeta`) of the coalition gradient
//!   `grad_{x_ik} J_i` for every coalition mate `k`,
//! * leader-following estimation `s` of every other agent's `eta` over the
//!   global directed graph.
//!
//! Gradients are always evaluated at the agent's own view `chi_p`: its own
//! `eta_p` and its estimates of everyone else.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::game::validate::GameReport;
use crate::game::{project_nonneg, CoalitionGame};
use crate::graph::{build_u_basis, estimation_symmetric_min_eig, CommTopology};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub kappa: f64,
    /// Treat violated sufficient gain bounds as a validation failure
    /// rather than a warning.
    pub strict: bool,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self {
            alpha: 3.0,
            beta: 13.0,
            gamma: 3.0,
            kappa: 19.0,
            strict: false,
        }
    }
}

impl GainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("kappa", self.kappa),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("gain {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Sufficient gain thresholds from the convergence analysis. `None` where a
/// threshold is undefined because its premise fails (for instance a
/// pseudogradient that is not strongly monotone).
#[derive(Debug, Clone, Serialize)]
pub struct GainBounds {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub kappa: Option<f64>,
    pub gamma: f64,
    pub notes: Vec<String>,
}

impl GainBounds {
    pub fn violations(&self, gains: &GainConfig) -> Vec<String> {
        let mut out = self.notes.clone();
        let mut check = |name: &str, bound: Option<f64>, v: f64| {
            if let Some(b) = bound {
                if v <= b {
                    out.push(format!("{name} = {v} does not exceed sufficient bound {b:.4}"));
                }
            }
        };
        check("alpha", self.alpha, gains.alpha);
        check("beta", self.beta, gains.beta);
        check("kappa", self.kappa, gains.kappa);
        check("gamma", Some(self.gamma), gains.gamma);
        out
    }
}

/// Lyapunov solution `P M + M^T P = -I` for a Hurwitz `M`, by vectorization.
fn lyapunov_identity(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let d = m.nrows();
    let eye = DMatrix::<f64>::identity(d, d);
    let a = eye.kronecker(&m.transpose()) + m.transpose().kronecker(&eye);
    let rhs = -DVector::from_column_slice(eye.as_slice());
    let sol = a.lu().solve(&rhs)?;
    let p = DMatrix::from_column_slice(d, d, sol.as_slice());
    Some((&p + p.transpose()) * 0.5)
}

/// Reduced gradient-tracking matrix of one coalition,
/// `[[-I - L, -L U], [U^T L, 0]]`; the full one is this Kronecker `I_{r m}`.
pub fn tracking_matrix(laplacian: &DMatrix<f64>) -> DMatrix<f64> {
    let m = laplacian.nrows();
    let u = build_u_basis(m);
    let d = m + u.ncols();
    let mut out = DMatrix::zeros(d, d);
    out.view_mut((0, 0), (m, m))
        .copy_from(&(-DMatrix::identity(m, m) - laplacian));
    if u.ncols() > 0 {
        out.view_mut((0, m), (m, u.ncols())).copy_from(&(-(laplacian * &u)));
        out.view_mut((m, 0), (u.ncols(), m)).copy_from(&(u.transpose() * laplacian));
    }
    out
}

pub fn theorem_gain_bounds(game: &CoalitionGame, topology: &CommTopology, report: &GameReport) -> GainBounds {
    let mut notes = Vec::new();
    let n = game.num_agents() as f64;
    let ell = report.lipschitz;
    let hbar = report.monotonicity;
    let b_norm = game
        .agents()
        .iter()
        .map(|a| {
            if a.local.rows() == 0 {
                0.0
            } else {
                a.local.matrix.clone().svd(false, false).singular_values.max()
            }
        })
        .fold(0.0, f64::max);

    let mut c_p: Option<f64> = Some(0.0);
    for i in 0..topology.num_coalitions() {
        let m = tracking_matrix(topology.intra_laplacian(i));
        match lyapunov_identity(&m) {
            Some(p) if p.symmetric_eigenvalues().min() > 0.0 => {
                c_p = c_p.map(|c| c.max(p.symmetric_eigenvalues().max()));
            }
            _ => {
                notes.push(format!("coalition {} tracking matrix is not Hurwitz", i + 1));
                c_p = None;
            }
        }
    }
    let lambda_l = estimation_symmetric_min_eig(topology);

    let (alpha, beta, kappa) = if hbar > 0.0 {
        let alpha = 2.0 + b_norm * b_norm + 2.0 * ell * ell / hbar + n / 2.0;
        let beta = c_p.map(|c| ell * c + 8.0 * ell * ell * c * c / hbar + 1.0 / hbar + 0.5);
        let kappa = match c_p {
            Some(c) if lambda_l > 0.0 => Some(2.0 / lambda_l * (0.5 + ell * c + ell * ell / hbar + ell * ell / 2.0)),
            Some(_) => {
                notes.push(format!(
                    "estimation matrix symmetric part is not positive definite (min eigenvalue {lambda_l:.4})"
                ));
                None
            }
            None => None,
        };
        (Some(alpha), beta, kappa)
    } else {
        notes.push(format!("pseudogradient is not strongly monotone (margin {hbar:.4})"));
        (None, None, None)
    };
    GainBounds {
        alpha,
        beta,
        kappa,
        gamma: 0.25,
        notes,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct AgentSlots {
    coalition: usize,
    member: usize,
    eta: usize,
    theta: usize,
    omega: Range<usize>,
    lambda: Range<usize>,
    rho: Range<usize>,
    xi: Range<usize>,
    zeta: Range<usize>,
    s: Range<usize>,
}

/// Offsets of every agent's sub-states inside the flat state vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeekerLayout {
    r: usize,
    n: usize,
    slots: Vec<AgentSlots>,
    len: usize,
}

impl SeekerLayout {
    pub fn new(game: &CoalitionGame) -> Self {
        let r = game.action_dim();
        let n = game.num_agents();
        let mut off = 0;
        let mut take = |len: usize| {
            let range = off..off + len;
            off += len;
            range
        };
        let mut slots = Vec::with_capacity(n);
        for p in 0..n {
            let (i, j) = game.agent_id(p);
            let m = game.coalition_size(i);
            let pi = game.coupling_rows(i);
            let eta = take(r).start;
            let theta = take(r).start;
            slots.push(AgentSlots {
                coalition: i,
                member: j,
                eta,
                theta,
                omega: take(game.agent(p).local.rows()),
                lambda: take(pi),
                rho: take(pi),
                xi: take(m * r),
                zeta: take(m * r),
                s: take((n - 1) * r),
            });
        }
        Self { r, n, slots, len: off }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_agents(&self) -> usize {
        self.n
    }

    pub fn action_dim(&self) -> usize {
        self.r
    }

    pub fn eta(&self, p: usize) -> Range<usize> {
        let s = self.slots[p].eta;
        s..s + self.r
    }

    pub fn theta(&self, p: usize) -> Range<usize> {
        let s = self.slots[p].theta;
        s..s + self.r
    }

    pub fn omega(&self, p: usize) -> Range<usize> {
        self.slots[p].omega.clone()
    }

    pub fn lambda(&self, p: usize) -> Range<usize> {
        self.slots[p].lambda.clone()
    }

    pub fn rho(&self, p: usize) -> Range<usize> {
        self.slots[p].rho.clone()
    }

    /// `xi_{p,k}` for coalition member `k` (coalition-local index).
    pub fn xi(&self, p: usize, k: usize) -> Range<usize> {
        let s = self.slots[p].xi.start + k * self.r;
        s..s + self.r
    }

    pub fn zeta(&self, p: usize, k: usize) -> Range<usize> {
        let s = self.slots[p].zeta.start + k * self.r;
        s..s + self.r
    }

    pub fn xi_all(&self, p: usize) -> Range<usize> {
        self.slots[p].xi.clone()
    }

    pub fn zeta_all(&self, p: usize) -> Range<usize> {
        self.slots[p].zeta.clone()
    }

    pub fn estimates(&self, p: usize) -> Range<usize> {
        self.slots[p].s.clone()
    }

    /// Position of agent `l`'s estimate inside agent `p`'s estimate block;
    /// `None` for `l == p`, whose value is `eta_p` itself.
    pub fn estimate_slot(&self, p: usize, l: usize) -> Option<usize> {
        match l.cmp(&p) {
            std::cmp::Ordering::Less => Some(l),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(l - 1),
        }
    }

    /// Coordinates of `p`'s estimate of agent `l`.
    pub fn estimate(&self, p: usize, l: usize) -> Option<Range<usize>> {
        self.estimate_slot(p, l).map(|k| {
            let s = self.slots[p].s.start + k * self.r;
            s..s + self.r
        })
    }

    /// `s_{p,l}`: `eta_p` when `l == p`, the estimate otherwise.
    pub fn view_of(&self, p: usize, l: usize) -> Range<usize> {
        self.estimate(p, l).unwrap_or_else(|| self.eta(p))
    }

    /// Owning agent and field name of a flat index.
    pub fn locate(&self, idx: usize) -> Option<(usize, &'static str)> {
        (0..self.n).find_map(|p| {
            let s = &self.slots[p];
            let fields: [(&'static str, Range<usize>); 8] = [
                ("eta", self.eta(p)),
                ("theta", self.theta(p)),
                ("omega", s.omega.clone()),
                ("lambda", s.lambda.clone()),
                ("rho", s.rho.clone()),
                ("xi", s.xi.clone()),
                ("zeta", s.zeta.clone()),
                ("s", s.s.clone()),
            ];
            fields.into_iter().find(|(_, r)| r.contains(&idx)).map(|(f, _)| (p, f))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeekerState {
    layout: Arc<SeekerLayout>,
    data: DVector<f64>,
}

impl SeekerState {
    pub fn zeros(layout: Arc<SeekerLayout>) -> Self {
        let data = DVector::zeros(layout.len());
        Self { layout, data }
    }

    pub fn from_vec(layout: Arc<SeekerLayout>, data: DVector<f64>) -> Result<Self> {
        if data.len() != layout.len() {
            return Err(Error::Dimension(format!(
                "seeker state has {} entries, layout needs {}",
                data.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, data })
    }

    pub fn layout(&self) -> &Arc<SeekerLayout> {
        &self.layout
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn as_vector_mut(&mut self) -> &mut DVector<f64> {
        &mut self.data
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.data
    }

    pub fn slice(&self, range: Range<usize>) -> DVectorView<'_, f64> {
        self.data.rows(range.start, range.len())
    }

    pub fn set(&mut self, range: Range<usize>, v: &DVector<f64>) {
        self.data.rows_mut(range.start, range.len()).copy_from(v);
    }

    pub fn eta(&self, p: usize) -> DVectorView<'_, f64> {
        self.slice(self.layout.eta(p))
    }

    pub fn theta(&self, p: usize) -> DVectorView<'_, f64> {
        self.slice(self.layout.theta(p))
    }

    pub fn omega(&self, p: usize) -> DVectorView<'_, f64> {
        self.slice(self.layout.omega(p))
    }

    pub fn lambda(&self, p: usize) -> DVectorView<'_, f64> {
        self.slice(self.layout.lambda(p))
    }

    pub fn rho(&self, p: usize) -> DVectorView<'_, f64> {
        self.slice(self.layout.rho(p))
    }

    pub fn xi(&self, p: usize, k: usize) -> DVectorView<'_, f64> {
        self.slice(self.layout.xi(p, k))
    }

    pub fn zeta(&self, p: usize, k: usize) -> DVectorView<'_, f64> {
        self.slice(self.layout.zeta(p, k))
    }

    /// Stacked `eta` of all agents.
    pub fn eta_all(&self) -> DVector<f64> {
        let r = self.layout.r;
        let mut out = DVector::zeros(self.layout.n * r);
        for p in 0..self.layout.n {
            out.rows_mut(p * r, r).copy_from(&self.eta(p));
        }
        out
    }

    /// Agent `p`'s view of the full action profile.
    pub fn chi(&self, p: usize) -> DVector<f64> {
        let r = self.layout.r;
        let mut out = DVector::zeros(self.layout.n * r);
        for l in 0..self.layout.n {
            out.rows_mut(l * r, r).copy_from(&self.slice(self.layout.view_of(p, l)));
        }
        out
    }

    /// `P+(lambda_p)` for each agent.
    pub fn lambda_plus(&self) -> Vec<DVector<f64>> {
        (0..self.layout.n)
            .map(|p| project_nonneg(&self.lambda(p).into_owned()))
            .collect()
    }

    pub fn omega_all(&self) -> Vec<DVector<f64>> {
        (0..self.layout.n).map(|p| self.omega(p).into_owned()).collect()
    }
}

fn check_state(state: &SeekerState, game: &CoalitionGame) -> Result<()> {
    if state.layout.len() != state.data.len() || state.layout.n != game.num_agents() {
        return Err(Error::Dimension("seeker state does not match the game".into()));
    }
    Ok(())
}

/// `d eta = theta`,
/// `d theta = -alpha theta - (xi_pp + G^T P+(lambda) + B^T P+(omega + B eta - b))`.
pub fn auxiliary_rhs(state: &SeekerState, game: &CoalitionGame, gains: &GainConfig, out: &mut SeekerState) -> Result<()> {
    check_state(state, game)?;
    let lay = &state.layout;
    for p in 0..lay.n {
        let a = game.agent(p);
        let theta = state.theta(p).into_owned();
        let eta = state.eta(p).into_owned();
        let j = lay.slots[p].member;
        let lam = project_nonneg(&state.lambda(p).into_owned());
        let w = project_nonneg(&(state.omega(p) + &a.local.matrix * &eta - &a.local.bound));
        let drive = state.xi(p, j) + a.coupling.matrix.transpose() * lam + a.local.matrix.transpose() * w;
        out.set(lay.eta(p), &theta);
        out.set(lay.theta(p), &(-&theta * gains.alpha - drive));
    }
    Ok(())
}

/// Projected multiplier flows with dual consensus inside each coalition.
pub fn multiplier_rhs(state: &SeekerState, game: &CoalitionGame, topology: &CommTopology, out: &mut SeekerState) -> Result<()> {
    check_state(state, game)?;
    let lay = &state.layout;
    let lam_plus = state.lambda_plus();
    for p in 0..lay.n {
        let a = game.agent(p);
        let (i, j) = (lay.slots[p].coalition, lay.slots[p].member);
        let eta = state.eta(p).into_owned();
        let omega = state.omega(p).into_owned();
        let theta = state.theta(p).into_owned();
        let d_omega = &a.local.matrix * &theta - &omega
            + project_nonneg(&(&omega + &a.local.matrix * &eta - &a.local.bound));
        out.set(lay.omega(p), &d_omega);

        let pi = game.coupling_rows(i);
        let mut rho_diff = DVector::zeros(pi);
        let mut lam_diff = DVector::zeros(pi);
        let base = game.coalition_agents(i).start;
        for &k in topology.intra_neighbors(i, j) {
            let q = base + k;
            rho_diff += state.rho(p) - state.rho(q);
            lam_diff += &lam_plus[p] - &lam_plus[q];
        }
        let lambda = state.lambda(p).into_owned();
        let d_lambda = -&lambda + &lam_plus[p] + &a.coupling.matrix * &eta - &a.coupling.bound - rho_diff - &lam_diff;
        out.set(lay.lambda(p), &d_lambda);
        out.set(lay.rho(p), &lam_diff);
    }
    Ok(())
}

/// Dynamic average tracking of the coalition gradient.
pub fn gradient_tracking_rhs(
    state: &SeekerState,
    game: &CoalitionGame,
    topology: &CommTopology,
    gains: &GainConfig,
    out: &mut SeekerState,
) -> Result<()> {
    check_state(state, game)?;
    let lay = &state.layout;
    for p in 0..lay.n {
        let (i, j) = (lay.slots[p].coalition, lay.slots[p].member);
        let grad = game.own_coalition_gradient(p, &state.chi(p))?;
        let xi = state.slice(lay.xi_all(p)).into_owned();
        let mut xi_diff = DVector::zeros(xi.len());
        let mut zeta_diff = DVector::zeros(xi.len());
        let base = game.coalition_agents(i).start;
        for &k in topology.intra_neighbors(i, j) {
            let q = base + k;
            xi_diff += &xi - state.slice(lay.xi_all(q));
            zeta_diff += state.slice(lay.zeta_all(p)) - state.slice(lay.zeta_all(q));
        }
        let d_xi = -(&xi + &xi_diff + zeta_diff - grad) * gains.beta;
        out.set(lay.xi_all(p), &d_xi);
        out.set(lay.zeta_all(p), &(xi_diff * gains.beta));
    }
    Ok(())
}

/// Leader-following estimation of every other agent's `eta`.
pub fn action_estimate_rhs(state: &SeekerState, topology: &CommTopology, gains: &GainConfig, out: &mut SeekerState) -> Result<()> {
    let lay = &state.layout;
    if topology.num_agents() != lay.n {
        return Err(Error::Dimension("topology does not match the seeker state".into()));
    }
    let r = lay.r;
    for p in 0..lay.n {
        let mut d = DVector::zeros((lay.n - 1) * r);
        for &l in topology.global_in_neighbors(p) {
            for q in (0..lay.n).filter(|&q| q != p) {
                let slot = lay.estimate_slot(p, q).expect("q != p");
                let mine = state.slice(lay.estimate(p, q).expect("q != p"));
                let theirs = state.slice(lay.view_of(l, q));
                let mut block = d.rows_mut(slot * r, r);
                block += mine - theirs;
            }
        }
        out.set(lay.estimates(p), &(d * -gains.kappa));
    }
    Ok(())
}

/// The full decision-layer vector field.
pub fn seeker_rhs(state: &SeekerState, game: &CoalitionGame, topology: &CommTopology, gains: &GainConfig) -> Result<SeekerState> {
    let mut out = SeekerState::zeros(state.layout.clone());
    auxiliary_rhs(state, game, gains, &mut out)?;
    multiplier_rhs(state, game, topology, &mut out)?;
    gradient_tracking_rhs(state, game, topology, gains, &mut out)?;
    action_estimate_rhs(state, topology, gains, &mut out)?;
    Ok(out)
}
