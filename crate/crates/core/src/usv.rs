//! Surface-vehicle swarm confrontation.
//!
//! Vehicle model: `xdot = Psi(phi) nu`, `M nudot + Pi(nu) nu + Phi nu = tau + d`
//! with `x = (X, Y, phi)` in the world frame and `nu = (surge, sway, yaw rate)`
//! in the body frame. Rewritten in world coordinates it is an
//! Euler-Lagrange system with `E = Psi M Psi^T`,
//! `C = Psi (Pi(nu) - theta M S) Psi^T` and `D = Psi Phi Psi^T`, where
//! `Psi^T Psi_dot = theta S`.
//!
//! Two swarms (red, blue) each split into intrusive and defensive
//! vehicles. Costs are weighted sums of quadratic task terms, so the
//! confrontation is a quadratic coalition game over `(X, Y, phi)` per
//! vehicle.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::game::{Affine, AgentSpec, CoalitionGame, Cost, QuadraticCost};
use crate::graph::CommTopology;
use crate::plant::{deg, ElModel, PlantState};
use crate::{Error, Result};

/// Hydrodynamic and rigid-body parameters. The ten hydrodynamic
/// coefficients are unknown to the controller; mass, CoG offset and yaw
/// inertia are known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsvParams {
    pub mass: f64,
    pub x_g: f64,
    pub i_z: f64,
    pub x_rho: f64,
    pub y_delta: f64,
    pub y_theta: f64,
    pub n_delta: f64,
    pub n_theta: f64,
    pub x_rho_dot: f64,
    pub y_delta_dot: f64,
    pub y_theta_dot: f64,
    pub n_delta_dot: f64,
    pub n_theta_dot: f64,
}

impl Default for UsvParams {
    fn default() -> Self {
        Self {
            mass: 23.8,
            x_g: 0.046,
            i_z: 1.76,
            x_rho: -0.723,
            y_delta: -0.861,
            y_theta: 0.108,
            n_delta: 0.105,
            n_theta: 1.9,
            x_rho_dot: -2.0,
            y_delta_dot: -10.0,
            y_theta_dot: 0.0,
            n_delta_dot: 0.0,
            n_theta_dot: -1.0,
        }
    }
}

impl UsvParams {
    /// Unknown parameter vector in regressor column order.
    pub fn mu(&self) -> DVector<f64> {
        DVector::from_vec(vec![
            self.x_rho,
            self.y_delta,
            self.y_theta,
            self.n_delta,
            self.n_theta,
            self.x_rho_dot,
            self.y_delta_dot,
            self.y_theta_dot,
            self.n_delta_dot,
            self.n_theta_dot,
        ])
    }

    pub fn mass_matrix(&self) -> Matrix3<f64> {
        let m = self.mass;
        Matrix3::new(
            m - self.x_rho_dot,
            0.0,
            0.0,
            0.0,
            m - self.y_delta_dot,
            m * self.x_g - self.y_theta_dot,
            0.0,
            m * self.x_g - self.n_delta_dot,
            self.i_z - self.n_theta_dot,
        )
    }

    pub fn damping_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            -self.x_rho,
            0.0,
            0.0,
            0.0,
            -self.y_delta,
            -self.y_theta,
            0.0,
            -self.n_delta,
            -self.n_theta,
        )
    }

    /// Body-frame Coriolis-centripetal matrix `Pi(nu)`.
    pub fn coriolis_body(&self, nu: &Vector3<f64>) -> Matrix3<f64> {
        let m = self.mass;
        let c = -(m - self.y_delta_dot) * nu[1] - (m * self.x_g - self.y_theta_dot) * nu[2];
        let a = (m - self.x_rho_dot) * nu[0];
        Matrix3::new(0.0, 0.0, c, 0.0, 0.0, a, -c, -a, 0.0)
    }

    /// Requires a symmetric positive definite mass matrix, which needs
    /// `y_theta_dot == n_delta_dot`.
    pub fn validate(&self) -> Result<()> {
        if self.y_theta_dot != self.n_delta_dot {
            return Err(Error::Config(format!(
                "y_theta_dot ({}) must equal n_delta_dot ({}) for a symmetric mass matrix",
                self.y_theta_dot, self.n_delta_dot
            )));
        }
        let m = self.mass_matrix();
        if m.cholesky().is_none() {
            return Err(Error::Config("USV mass matrix is not positive definite".into()));
        }
        Ok(())
    }
}

pub fn rotation(phi: f64) -> Matrix3<f64> {
    let (s, c) = phi.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// `Psi^T Psi_dot / theta`.
fn skew_s() -> Matrix3<f64> {
    Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
}

fn v3(v: &DVector<f64>) -> Vector3<f64> {
    Vector3::new(v[0], v[1], v[2])
}

fn dyn3(m: Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

/// World-frame `(E, C, D)` at heading `phi` and world velocity `xdot`.
pub fn usv_el_matrices(params: &UsvParams, phi: f64, xdot: &Vector3<f64>) -> (Matrix3<f64>, Matrix3<f64>, Matrix3<f64>) {
    let psi = rotation(phi);
    let nu = psi.transpose() * xdot;
    let m = params.mass_matrix();
    let e = psi * m * psi.transpose();
    let c = psi * (params.coriolis_body(&nu) - m * skew_s() * nu[2]) * psi.transpose();
    let d = psi * params.damping_matrix() * psi.transpose();
    (e, c, d)
}

/// `(Y, offset)` with `E yhat + C ytilde + D ytilde = Y mu + offset`.
pub fn usv_regressor(
    params: &UsvParams,
    phi: f64,
    xdot: &Vector3<f64>,
    yhat: &Vector3<f64>,
    ytilde: &Vector3<f64>,
) -> (DMatrix<f64>, Vector3<f64>) {
    let psi = rotation(phi);
    let nu = psi.transpose() * xdot;
    let (rho, delta, theta) = (nu[0], nu[1], nu[2]);
    let a = psi.transpose() * yhat;
    let b = psi.transpose() * ytilde;
    let w = a - skew_s() * b * theta;

    #[rustfmt::skip]
    let body = DMatrix::from_row_slice(3, 10, &[
        -b[0], 0.0,   0.0,   0.0,   0.0,   -w[0],      delta * b[2],  theta * b[2],  0.0,   0.0,
        0.0,   -b[1], -b[2], 0.0,   0.0,   -rho * b[2], -w[1],        -w[2],         0.0,   0.0,
        0.0,   0.0,   0.0,   -b[1], -b[2], rho * b[1],  -delta * b[0], -theta * b[0], -w[1], -w[2],
    ]);
    let m = params.mass;
    let ck = -m * delta - m * params.x_g * theta;
    let offset_body = Vector3::new(
        m * w[0] + ck * b[2],
        m * w[1] + m * params.x_g * w[2] + m * rho * b[2],
        m * params.x_g * w[1] + params.i_z * w[2] - ck * b[0] - m * rho * b[1],
    );
    (dyn3(psi) * body, psi * offset_body)
}

/// Body-frame input realizing a world-frame force: `tau = Psi^T u`.
pub fn usv_controller(phi: f64, u_world: &Vector3<f64>) -> Vector3<f64> {
    rotation(phi).transpose() * u_world
}

#[derive(Debug, Clone, PartialEq)]
pub struct UsvModel {
    params: UsvParams,
}

impl UsvModel {
    pub fn new(params: UsvParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &UsvParams {
        &self.params
    }
}

impl ElModel for UsvModel {
    fn name(&self) -> &str {
        "usv"
    }

    fn dof(&self) -> usize {
        3
    }

    fn param_count(&self) -> usize {
        10
    }

    fn inertia(&self, x: &DVector<f64>) -> DMatrix<f64> {
        dyn3(usv_el_matrices(&self.params, x[2], &Vector3::zeros()).0)
    }

    fn coriolis(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> DMatrix<f64> {
        dyn3(usv_el_matrices(&self.params, x[2], &v3(xdot)).1)
    }

    fn bias(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let d = usv_el_matrices(&self.params, x[2], &Vector3::zeros()).2;
        DVector::from_column_slice((d * v3(v)).as_slice())
    }

    fn regressor(&self, x: &DVector<f64>, xdot: &DVector<f64>, yhat: &DVector<f64>, ytilde: &DVector<f64>) -> DMatrix<f64> {
        usv_regressor(&self.params, x[2], &v3(xdot), &v3(yhat), &v3(ytilde)).0
    }

    fn known_offset(&self, x: &DVector<f64>, xdot: &DVector<f64>, yhat: &DVector<f64>, ytilde: &DVector<f64>) -> DVector<f64> {
        let o = usv_regressor(&self.params, x[2], &v3(xdot), &v3(yhat), &v3(ytilde)).1;
        DVector::from_column_slice(o.as_slice())
    }

    fn true_params(&self) -> DVector<f64> {
        self.params.mu()
    }

    fn to_actuator(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_column_slice(usv_controller(x[2], &v3(u)).as_slice())
    }

    fn to_world(&self, x: &DVector<f64>, tau: &DVector<f64>) -> DVector<f64> {
        DVector::from_column_slice((rotation(x[2]) * v3(tau)).as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupplyLines {
    pub red: f64,
    pub blue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Intrusive,
    Defensive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsvAgent {
    pub role: Role,
    pub initial_position: [f64; 2],
    /// Degrees; the swarm default applies when absent.
    #[serde(default)]
    pub initial_heading_deg: Option<f64>,
    /// Supply distance contributed to the coalition budget (m).
    pub supply_distance: f64,
    /// Offset from the formation center of the agent's role group (m).
    pub formation_offset: [f64; 2],
    /// Desired attack heading for intrusive agents (degrees).
    #[serde(default)]
    pub attack_angle_deg: Option<f64>,
    /// 1-based index of the opposing intrusive agent a defender counters.
    #[serde(default)]
    pub intercept: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Swarm {
    pub command_center: [f64; 2],
    /// Weights of deter, avoid, pincer, formation.
    pub intrusive_weights: [f64; 4],
    /// Weights of counter, close, orient, formation, center.
    pub defensive_weights: [f64; 5],
    #[serde(default)]
    pub default_heading_deg: f64,
    pub agents: Vec<UsvAgent>,
}

impl Swarm {
    pub fn intrusive_count(&self) -> usize {
        self.agents.iter().filter(|a| a.role == Role::Intrusive).count()
    }

    pub fn defensive_count(&self) -> usize {
        self.agents.len() - self.intrusive_count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BattlefieldConfig {
    pub bounds: Bounds,
    pub supply_lines: SupplyLines,
    pub red: Swarm,
    pub blue: Swarm,
}

/// Swarm index: 0 for red, 1 for blue.
pub const RED: usize = 0;
pub const BLUE: usize = 1;

impl BattlefieldConfig {
    pub fn swarm(&self, s: usize) -> &Swarm {
        if s == RED {
            &self.red
        } else {
            &self.blue
        }
    }

    pub fn opponent(s: usize) -> usize {
        1 - s
    }

    pub fn num_agents(&self) -> usize {
        self.red.agents.len() + self.blue.agents.len()
    }

    /// Global agent index of member `k` of swarm `s`.
    pub fn global(&self, s: usize, k: usize) -> usize {
        if s == RED {
            k
        } else {
            self.red.agents.len() + k
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.bounds;
        if !(b.x_min < b.x_max && b.y_min < b.y_max) {
            return Err(Error::Config("battlefield bounds must satisfy min < max".into()));
        }
        for s in [RED, BLUE] {
            let name = if s == RED { "red" } else { "blue" };
            let sw = self.swarm(s);
            if sw.agents.is_empty() {
                return Err(Error::Config(format!("{name} swarm has no agents")));
            }
            let opp = self.swarm(Self::opponent(s));
            let m_iv = sw.intrusive_count();
            if sw.agents[..m_iv].iter().any(|a| a.role != Role::Intrusive) {
                return Err(Error::Config(format!("{name} swarm must list intrusive agents first")));
            }
            let weights = sw.intrusive_weights.iter().chain(&sw.defensive_weights);
            if weights.clone().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::Config(format!("{name} swarm weights must be finite and nonnegative")));
            }
            for (k, a) in sw.agents.iter().enumerate() {
                let who = format!("{name} agent {}", k + 1);
                match a.role {
                    Role::Intrusive => {
                        if a.attack_angle_deg.is_none() {
                            return Err(Error::Config(format!("{who}: intrusive agents need attack_angle_deg")));
                        }
                        if a.intercept.is_some() {
                            return Err(Error::Config(format!("{who}: intrusive agents have no intercept target")));
                        }
                    }
                    Role::Defensive => match a.intercept {
                        Some(l) if l >= 1 && l <= opp.intrusive_count() => {}
                        Some(l) => {
                            return Err(Error::Config(format!(
                                "{who}: intercept {l} is not an opposing intrusive agent (1..={})",
                                opp.intrusive_count()
                            )))
                        }
                        None => return Err(Error::Config(format!("{who}: defensive agents need an intercept"))),
                    },
                }
                let all = a.initial_position.iter().chain(&a.formation_offset).chain(std::iter::once(&a.supply_distance));
                if all.clone().any(|v| !v.is_finite()) {
                    return Err(Error::Config(format!("{who}: non-finite geometry")));
                }
            }
        }
        Ok(())
    }

    /// Initial `(X, Y, phi)` of every vehicle in global order.
    pub fn initial_poses(&self) -> Vec<DVector<f64>> {
        [RED, BLUE]
            .iter()
            .flat_map(|&s| {
                let sw = self.swarm(s);
                sw.agents.iter().map(move |a| {
                    let h = a.initial_heading_deg.unwrap_or(sw.default_heading_deg);
                    DVector::from_vec(vec![a.initial_position[0], a.initial_position[1], deg(h)])
                })
            })
            .collect()
    }

    pub fn initial_plant_states(&self) -> Vec<PlantState> {
        self.initial_poses().into_iter().map(|x| PlantState::at_rest(x, 10)).collect()
    }

    /// Stacked initial `(X, Y, phi)`.
    pub fn initial_action(&self) -> DVector<f64> {
        let poses = self.initial_poses();
        let mut out = DVector::zeros(3 * poses.len());
        for (p, x) in poses.iter().enumerate() {
            out.rows_mut(3 * p, 3).copy_from(x);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    /// Reach the opposing command center.
    IvDeter,
    /// Keep away from every opposing vehicle (enters with a minus sign).
    IvAvoid,
    /// Hold the assigned attack heading.
    IvPincer,
    /// Hold the formation offset from the intrusive group's center.
    IvFormation,
    /// Sit at half the displacement from the own command center to the
    /// assigned attacker.
    DfCounter,
    /// Close the distance to the assigned attacker.
    DfClose,
    /// Head opposite to the assigned attacker.
    DfOrient,
    /// Hold the formation offset from the defensive group's center.
    DfFormation,
    /// Center the defensive group on the own command center.
    DfCenter,
}

impl TaskKind {
    pub const INTRUSIVE: [TaskKind; 4] = [TaskKind::IvDeter, TaskKind::IvAvoid, TaskKind::IvPincer, TaskKind::IvFormation];
    pub const DEFENSIVE: [TaskKind; 5] = [
        TaskKind::DfCounter,
        TaskKind::DfClose,
        TaskKind::DfOrient,
        TaskKind::DfFormation,
        TaskKind::DfCenter,
    ];

    pub fn role(&self) -> Role {
        if Self::INTRUSIVE.contains(self) {
            Role::Intrusive
        } else {
            Role::Defensive
        }
    }
}

fn pos(x: &DVector<f64>, p: usize) -> [f64; 2] {
    [x[3 * p], x[3 * p + 1]]
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn group_mean(config: &BattlefieldConfig, s: usize, role: Role, x: &DVector<f64>) -> [f64; 2] {
    let sw = config.swarm(s);
    let members: Vec<usize> = (0..sw.agents.len()).filter(|&k| sw.agents[k].role == role).collect();
    let mut m = [0.0, 0.0];
    for &k in &members {
        let p = pos(x, config.global(s, k));
        m[0] += p[0];
        m[1] += p[1];
    }
    let c = members.len() as f64;
    [m[0] / c, m[1] / c]
}

/// Unweighted task term for member `k` of swarm `s`, evaluated directly
/// from positions and headings.
pub fn task_cost(kind: TaskKind, s: usize, k: usize, x: &DVector<f64>, config: &BattlefieldConfig) -> Result<f64> {
    let sw = config.swarm(s);
    let agent = sw
        .agents
        .get(k)
        .ok_or_else(|| Error::Lookup(format!("swarm {} has no agent {}", s + 1, k + 1)))?;
    if agent.role != kind.role() {
        return Err(Error::Config(format!(
            "task {kind:?} does not apply to a {:?} agent",
            agent.role
        )));
    }
    if x.len() != 3 * config.num_agents() {
        return Err(Error::Dimension(format!("expected {} coordinates", 3 * config.num_agents())));
    }
    let opp = BattlefieldConfig::opponent(s);
    let me = config.global(s, k);
    let p = pos(x, me);
    let heading = x[3 * me + 2];
    let target = || {
        let l = agent.intercept.expect("validated") - 1;
        config.global(opp, l)
    };
    let own_center = sw.command_center;
    Ok(match kind {
        TaskKind::IvDeter => dist2(p, config.swarm(opp).command_center),
        TaskKind::IvAvoid => -(0..config.swarm(opp).agents.len())
            .map(|q| dist2(p, pos(x, config.global(opp, q))))
            .sum::<f64>(),
        TaskKind::IvPincer => (heading - deg(agent.attack_angle_deg.unwrap_or(0.0))).powi(2),
        TaskKind::IvFormation | TaskKind::DfFormation => {
            let m = group_mean(config, s, agent.role, x);
            let d = agent.formation_offset;
            dist2(p, [m[0] + d[0], m[1] + d[1]])
        }
        TaskKind::DfCounter => {
            let a = pos(x, target());
            dist2(p, [0.5 * (a[0] - own_center[0]), 0.5 * (a[1] - own_center[1])])
        }
        TaskKind::DfClose => dist2(p, pos(x, target())),
        TaskKind::DfOrient => (heading + x[3 * target() + 2]).powi(2),
        TaskKind::DfCenter => dist2(group_mean(config, s, Role::Defensive, x), own_center),
    })
}

/// Weighted cost of member `k` of swarm `s` by direct summation of tasks.
pub fn agent_cost(s: usize, k: usize, x: &DVector<f64>, config: &BattlefieldConfig) -> Result<f64> {
    let sw = config.swarm(s);
    let mut total = 0.0;
    match sw.agents[k].role {
        Role::Intrusive => {
            for (w, t) in sw.intrusive_weights.iter().zip(TaskKind::INTRUSIVE) {
                total += w * task_cost(t, s, k, x, config)?;
            }
        }
        Role::Defensive => {
            for (w, t) in sw.defensive_weights.iter().zip(TaskKind::DEFENSIVE) {
                total += w * task_cost(t, s, k, x, config)?;
            }
        }
    }
    Ok(total)
}

/// Accumulates `w |A x - c|^2` as `1/2 x^T H x + q^T x + c0`.
struct LeastSquares {
    h: DMatrix<f64>,
    q: DVector<f64>,
    c: f64,
}

impl LeastSquares {
    fn new(dim: usize) -> Self {
        Self {
            h: DMatrix::zeros(dim, dim),
            q: DVector::zeros(dim),
            c: 0.0,
        }
    }

    /// One residual `sum coef_i x[idx_i] - target`, weighted by `w`.
    fn add(&mut self, w: f64, coefs: &[(usize, f64)], target: f64) {
        for &(i, a) in coefs {
            for &(j, b) in coefs {
                self.h[(i, j)] += 2.0 * w * a * b;
            }
            self.q[i] -= 2.0 * w * a * target;
        }
        self.c += w * target * target;
    }

    fn finish(self) -> Result<QuadraticCost> {
        QuadraticCost::new(self.h, self.q, self.c)
    }
}

fn group_members(config: &BattlefieldConfig, s: usize, role: Role) -> Vec<usize> {
    let sw = config.swarm(s);
    (0..sw.agents.len())
        .filter(|&k| sw.agents[k].role == role)
        .map(|k| config.global(s, k))
        .collect()
}

/// Residual coefficients of `p_me - mean(group) - offset` along axis `ax`.
fn formation_row(me: usize, group: &[usize], ax: usize) -> Vec<(usize, f64)> {
    let inv = 1.0 / group.len() as f64;
    let mut row = vec![(3 * me + ax, 1.0)];
    for &q in group {
        row.push((3 * q + ax, -inv));
    }
    row
}

fn add_task(ls: &mut LeastSquares, w: f64, kind: TaskKind, s: usize, k: usize, config: &BattlefieldConfig) {
    if w == 0.0 {
        return;
    }
    let sw = config.swarm(s);
    let agent = &sw.agents[k];
    let opp = BattlefieldConfig::opponent(s);
    let me = config.global(s, k);
    let target = || config.global(opp, agent.intercept.expect("validated") - 1);
    match kind {
        TaskKind::IvDeter => {
            let c = config.swarm(opp).command_center;
            for ax in 0..2 {
                ls.add(w, &[(3 * me + ax, 1.0)], c[ax]);
            }
        }
        TaskKind::IvAvoid => {
            for q in 0..config.swarm(opp).agents.len() {
                let other = config.global(opp, q);
                for ax in 0..2 {
                    ls.add(-w, &[(3 * me + ax, 1.0), (3 * other + ax, -1.0)], 0.0);
                }
            }
        }
        TaskKind::IvPincer => {
            ls.add(w, &[(3 * me + 2, 1.0)], deg(agent.attack_angle_deg.unwrap_or(0.0)));
        }
        TaskKind::IvFormation | TaskKind::DfFormation => {
            let group = group_members(config, s, agent.role);
            for ax in 0..2 {
                ls.add(w, &formation_row(me, &group, ax), agent.formation_offset[ax]);
            }
        }
        TaskKind::DfCounter => {
            let l = target();
            let c = sw.command_center;
            for ax in 0..2 {
                ls.add(w, &[(3 * me + ax, 1.0), (3 * l + ax, -0.5)], -0.5 * c[ax]);
            }
        }
        TaskKind::DfClose => {
            let l = target();
            for ax in 0..2 {
                ls.add(w, &[(3 * me + ax, 1.0), (3 * l + ax, -1.0)], 0.0);
            }
        }
        TaskKind::DfOrient => {
            ls.add(w, &[(3 * me + 2, 1.0), (3 * target() + 2, 1.0)], 0.0);
        }
        TaskKind::DfCenter => {
            let group = group_members(config, s, Role::Defensive);
            let inv = 1.0 / group.len() as f64;
            for ax in 0..2 {
                let row: Vec<_> = group.iter().map(|&q| (3 * q + ax, inv)).collect();
                ls.add(w, &row, sw.command_center[ax]);
            }
        }
    }
}

/// Local box rows `[1,0,0; 0,1,0; -1,0,0; 0,-1,0]`.
pub fn box_constraint(bounds: &Bounds) -> Affine {
    Affine {
        matrix: DMatrix::from_row_slice(4, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0]),
        bound: DVector::from_vec(vec![bounds.x_max, bounds.y_max, -bounds.x_min, -bounds.y_min]),
    }
}

/// Supply-line budget row for one vehicle.
pub fn supply_constraint(config: &BattlefieldConfig, s: usize, supply_distance: f64) -> Affine {
    if s == RED {
        Affine {
            matrix: DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]),
            bound: DVector::from_element(1, supply_distance + config.supply_lines.red),
        }
    } else {
        Affine {
            matrix: DMatrix::from_row_slice(1, 3, &[-1.0, 0.0, 0.0]),
            bound: DVector::from_element(1, supply_distance - config.supply_lines.blue),
        }
    }
}

/// Red is coalition 1, blue coalition 2; actions are `(X, Y, phi)`.
pub fn build_confrontation_game(config: &BattlefieldConfig) -> Result<CoalitionGame> {
    config.validate()?;
    let n = config.num_agents();
    let dim = 3 * n;
    let mut agents = Vec::with_capacity(n);
    for s in [RED, BLUE] {
        let sw = config.swarm(s);
        for (k, a) in sw.agents.iter().enumerate() {
            let mut ls = LeastSquares::new(dim);
            match a.role {
                Role::Intrusive => {
                    for (w, t) in sw.intrusive_weights.iter().zip(TaskKind::INTRUSIVE) {
                        add_task(&mut ls, *w, t, s, k, config);
                    }
                }
                Role::Defensive => {
                    for (w, t) in sw.defensive_weights.iter().zip(TaskKind::DEFENSIVE) {
                        add_task(&mut ls, *w, t, s, k, config);
                    }
                }
            }
            agents.push(AgentSpec {
                cost: Cost::Quadratic(ls.finish()?),
                local: box_constraint(&config.bounds),
                coupling: supply_constraint(config, s, a.supply_distance),
            });
        }
    }
    CoalitionGame::new(3, vec![config.red.agents.len(), config.blue.agents.len()], agents)
}

/// Six red and six blue vehicles on a 2 km square: red holds the left edge,
/// blue the right, each command center on its own supply line.
pub fn reference_confrontation() -> BattlefieldConfig {
    let iv = |pos: [f64; 2], g: f64, angle: f64, dy: f64| UsvAgent {
        role: Role::Intrusive,
        initial_position: pos,
        initial_heading_deg: None,
        supply_distance: g,
        formation_offset: [0.0, dy],
        attack_angle_deg: Some(angle),
        intercept: None,
    };
    let df = |pos: [f64; 2], g: f64, target: usize, dy: f64| UsvAgent {
        role: Role::Defensive,
        initial_position: pos,
        initial_heading_deg: None,
        supply_distance: g,
        formation_offset: [0.0, dy],
        attack_angle_deg: None,
        intercept: Some(target),
    };
    BattlefieldConfig {
        bounds: Bounds {
            x_min: -1000.0,
            x_max: 1000.0,
            y_min: -1000.0,
            y_max: 1000.0,
        },
        supply_lines: SupplyLines {
            red: -1000.0,
            blue: 1000.0,
        },
        red: Swarm {
            command_center: [-1000.0, 0.0],
            intrusive_weights: [0.01, 5.0, 1.0, 20.0],
            defensive_weights: [2.0, 1.0, 30.0, 5.0, 1.0],
            default_heading_deg: 0.0,
            agents: vec![
                iv([-500.0, -300.0], 500.0, 120.0, 100.0),
                iv([-500.0, -500.0], 500.0, 60.0, -100.0),
                df([-500.0, 500.0], 300.0, 1, 150.0),
                df([-500.0, 300.0], 300.0, 2, 50.0),
                df([-500.0, 100.0], 400.0, 3, -50.0),
                df([-500.0, -100.0], 500.0, 3, -150.0),
            ],
        },
        blue: Swarm {
            command_center: [1000.0, 0.0],
            intrusive_weights: [0.01, 5.0, 1.0, 0.4],
            defensive_weights: [2.0, 5.0, 10.0, 1.0, 3.0],
            default_heading_deg: 180.0,
            agents: vec![
                iv([500.0, -100.0], 500.0, 225.0, 100.0),
                iv([500.0, -300.0], 500.0, 270.0, 0.0),
                iv([500.0, -500.0], 500.0, 315.0, -10.0),
                df([500.0, 500.0], 300.0, 1, 100.0),
                df([500.0, 300.0], 300.0, 1, 0.0),
                df([500.0, 100.0], 400.0, 2, -100.0),
            ],
        },
    }
}

/// 1-based edges of the reference communication graphs: undirected
/// intra-swarm graphs, then the directed global graph over agents numbered
/// red 1..6, blue 7..12.
pub type EdgeLists = (Vec<Vec<(usize, usize)>>, Vec<(usize, usize)>);

pub fn reference_edges() -> EdgeLists {
    let red = vec![(1, 2), (1, 6), (2, 3), (3, 6), (3, 4), (4, 5), (5, 6)];
    let blue = vec![(1, 2), (1, 4), (1, 6), (2, 3), (3, 4), (4, 5), (5, 6)];
    let mut global: Vec<(usize, usize)> = (1..6).map(|k| (k, k + 1)).collect();
    global.extend((7..12).map(|k| (k, k + 1)));
    global.extend([(12, 1), (6, 7), (12, 3), (10, 5)]);
    (vec![red, blue], global)
}

pub fn reference_topology() -> Result<CommTopology> {
    let (intra, global) = reference_edges();
    let zero = |e: &[(usize, usize)]| e.iter().map(|&(a, b)| (a - 1, b - 1)).collect::<Vec<_>>();
    CommTopology::from_edges(&[6, 6], &intra.iter().map(|e| zero(e)).collect::<Vec<_>>(), &zero(&global))
}

pub fn usv_models(config: &BattlefieldConfig, params: UsvParams) -> Result<Vec<Arc<dyn ElModel>>> {
    let model: Arc<dyn ElModel> = Arc::new(UsvModel::new(params)?);
    Ok(vec![model; config.num_agents()])
}
