//! Fixed-step simulation of the coupled decision and physical layers.
//!
//! The flat state is `[seeker | plant_1 | ... | plant_n]`; the plant blocks
//! are absent for a decision-layer-only run, whose output is then `eta`.

mod integrate;
mod log;

use std::ops::Range;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use integrate::{integrate_step, Integrator};
pub use log::{read_log, sidecar_path, write_log, AgentRecord, Record, TrajectoryLog};

use crate::game::{kkt_certificate, project_nonneg, CoalitionGame, KktCertificate};
use crate::graph::CommTopology;
use crate::plant::{closed_loop_rhs, tracking_error, Disturbance, ElModel, PlantState, SignMode};
use crate::seeker::{seeker_rhs, GainConfig, SeekerLayout, SeekerState};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub step_size: f64,
    pub horizon: f64,
    pub integrator: Integrator,
    /// Steps between log records.
    pub log_stride: usize,
    /// Simulated time over which the derivative must stay below
    /// `tolerance` for an early stop.
    pub convergence_window: f64,
    pub tolerance: f64,
    pub early_stop: bool,
    pub sign_mode: SignMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-3,
            horizon: 200.0,
            integrator: Integrator::Rk4,
            log_stride: 100,
            convergence_window: 1.0,
            tolerance: 1e-6,
            early_stop: true,
            sign_mode: SignMode::Exact,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Config(format!("step_size must be positive, got {}", self.step_size)));
        }
        if !(self.horizon >= self.step_size) {
            return Err(Error::Config(format!(
                "horizon {} is shorter than step_size {}",
                self.horizon, self.step_size
            )));
        }
        if self.log_stride == 0 {
            return Err(Error::Config("log_stride must be at least 1".into()));
        }
        if !(self.convergence_window >= 0.0 && self.tolerance >= 0.0) {
            return Err(Error::Config("convergence window and tolerance must be nonnegative".into()));
        }
        if let SignMode::BoundaryLayer(s) = self.sign_mode {
            if !(s > 0.0) {
                return Err(Error::Config(format!("boundary layer width must be positive, got {s}")));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step_size).round() as usize
    }
}

/// Physical layer: one model, disturbance and initial state per agent.
#[derive(Debug, Clone)]
pub struct PlantLayer {
    pub models: Vec<Arc<dyn ElModel>>,
    pub disturbances: Vec<Disturbance>,
    pub initial: Vec<PlantState>,
}

#[derive(Debug, Clone)]
pub struct System {
    pub game: CoalitionGame,
    pub topology: CommTopology,
    pub gains: GainConfig,
    plants: Option<PlantLayer>,
    layout: Arc<SeekerLayout>,
    plant_blocks: Vec<Range<usize>>,
    initial_seeker: Option<DVector<f64>>,
}

impl System {
    pub fn new(game: CoalitionGame, topology: CommTopology, gains: GainConfig, plants: Option<PlantLayer>) -> Result<Self> {
        gains.validate()?;
        if topology.coalition_sizes() != game.coalition_sizes() {
            return Err(Error::Dimension("topology coalition sizes differ from the game's".into()));
        }
        let layout = Arc::new(SeekerLayout::new(&game));
        let mut plant_blocks = Vec::new();
        if let Some(pl) = &plants {
            let n = game.num_agents();
            if pl.models.len() != n || pl.disturbances.len() != n || pl.initial.len() != n {
                return Err(Error::Dimension(format!("plant layer must describe all {n} agents")));
            }
            let mut off = layout.len();
            for p in 0..n {
                let (m, s) = (&pl.models[p], &pl.initial[p]);
                if m.dof() != game.action_dim() || s.x.len() != m.dof() || s.mu_hat.len() != m.param_count() {
                    return Err(Error::Dimension(format!(
                        "agent {}: plant `{}` does not match action dimension {}",
                        p + 1,
                        m.name(),
                        game.action_dim()
                    )));
                }
                pl.disturbances[p].validate(m.dof())?;
                plant_blocks.push(off..off + s.len());
                off += s.len();
            }
        }
        Ok(Self {
            game,
            topology,
            gains,
            plants,
            layout,
            plant_blocks,
            initial_seeker: None,
        })
    }

    /// Overrides the all-zero initial decision-layer state.
    pub fn with_initial_seeker(mut self, v: DVector<f64>) -> Result<Self> {
        if v.len() != self.layout.len() {
            return Err(Error::Dimension(format!(
                "initial seeker state has {} entries, expected {}",
                v.len(),
                self.layout.len()
            )));
        }
        self.initial_seeker = Some(v);
        Ok(self)
    }

    pub fn layout(&self) -> &Arc<SeekerLayout> {
        &self.layout
    }

    pub fn plants(&self) -> Option<&PlantLayer> {
        self.plants.as_ref()
    }

    pub fn state_len(&self) -> usize {
        self.plant_blocks.last().map_or(self.layout.len(), |r| r.end)
    }

    pub fn initial_state(&self) -> DVector<f64> {
        let mut y = DVector::zeros(self.state_len());
        if let Some(s) = &self.initial_seeker {
            y.rows_mut(0, s.len()).copy_from(s);
        }
        if let Some(pl) = &self.plants {
            for (s, r) in pl.initial.iter().zip(&self.plant_blocks) {
                s.write_to(&mut y.as_mut_slice()[r.clone()]);
            }
        }
        y
    }

    pub fn seeker(&self, y: &DVector<f64>) -> SeekerState {
        SeekerState::from_vec(self.layout.clone(), y.rows(0, self.layout.len()).into_owned())
            .expect("layout length matches")
    }

    pub fn plant(&self, y: &DVector<f64>, p: usize) -> Option<PlantState> {
        let pl = self.plants.as_ref()?;
        let r = self.game.action_dim();
        Some(PlantState::read_from(
            &y.as_slice()[self.plant_blocks[p].clone()],
            r,
            pl.models[p].param_count(),
        ))
    }

    /// Physical positions with a plant layer, `eta` otherwise.
    pub fn output(&self, y: &DVector<f64>) -> DVector<f64> {
        let seeker = self.seeker(y);
        match &self.plants {
            None => seeker.eta_all(),
            Some(_) => {
                let r = self.game.action_dim();
                let mut x = DVector::zeros(self.game.dim());
                for p in 0..self.game.num_agents() {
                    x.rows_mut(p * r, r).copy_from(&self.plant(y, p).expect("plant layer").x);
                }
                x
            }
        }
    }

    pub fn derivative(&self, t: f64, y: &DVector<f64>, sign: SignMode) -> Result<DVector<f64>> {
        self.check_finite(t, y)?;
        let seeker = self.seeker(y);
        let ds = seeker_rhs(&seeker, &self.game, &self.topology, &self.gains)?;
        let mut out = DVector::zeros(y.len());
        out.rows_mut(0, self.layout.len()).copy_from(ds.as_vector());
        if let Some(pl) = &self.plants {
            for p in 0..self.game.num_agents() {
                let state = self.plant(y, p).expect("plant layer");
                let cl = closed_loop_rhs(
                    &state,
                    pl.models[p].as_ref(),
                    &pl.disturbances[p].eval(t),
                    &seeker.eta(p).into_owned(),
                    &seeker.theta(p).into_owned(),
                    &ds.theta(p).into_owned(),
                    self.gains.gamma,
                    sign,
                )?;
                cl.derivative.write_to(&mut out.as_mut_slice()[self.plant_blocks[p].clone()]);
            }
        }
        Ok(out)
    }

    /// Divergence error naming the first non-finite entry, if any.
    pub fn check_finite(&self, t: f64, y: &DVector<f64>) -> Result<()> {
        match y.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(idx) => {
                let (agent, field) = self.locate(idx);
                Err(Error::Divergence {
                    time: t,
                    agent: agent + 1,
                    field,
                    partial: Box::default(),
                })
            }
        }
    }

    /// Owning agent (0-based) and field of a flat state index.
    pub fn locate(&self, idx: usize) -> (usize, String) {
        if let Some((p, f)) = self.layout.locate(idx) {
            return (p, f.to_string());
        }
        let r = self.game.action_dim();
        for (p, b) in self.plant_blocks.iter().enumerate() {
            if b.contains(&idx) {
                let k = idx - b.start;
                let v = self.plants.as_ref().expect("plant layer").models[p].param_count();
                let field = match k {
                    k if k < r => "x",
                    k if k < 2 * r => "xdot",
                    k if k < 2 * r + v => "mu_hat",
                    k if k == 2 * r + v => "d_hat",
                    _ => "x_ref",
                };
                return (p, field.to_string());
            }
        }
        (0, "unknown".into())
    }

    /// Multipliers implied by a state: `P+(lambda)` for the budgets and
    /// `P+(omega + B eta - b)` for the local rows.
    pub fn multipliers(&self, y: &DVector<f64>) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let s = self.seeker(y);
        let omega = (0..self.game.num_agents())
            .map(|p| {
                let a = self.game.agent(p);
                project_nonneg(&(s.omega(p) + &a.local.matrix * s.eta(p) - &a.local.bound))
            })
            .collect();
        (s.lambda_plus(), omega)
    }

    pub fn certificate(&self, y: &DVector<f64>) -> Result<KktCertificate> {
        let (lam, om) = self.multipliers(y);
        kkt_certificate(&self.game, &self.output(y), &lam, &om)
    }

    fn record(&self, t: f64, y: &DVector<f64>, reference: Option<&DVector<f64>>) -> Result<Record> {
        let seeker = self.seeker(y);
        let cert = self.certificate(y)?;
        let (lam, om) = self.multipliers(y);
        let mut agents = Vec::with_capacity(self.game.num_agents());
        for p in 0..self.game.num_agents() {
            let eta = seeker.eta(p).into_owned();
            let theta = seeker.theta(p).into_owned();
            let (x, xdot, e_norm, d_hat) = match self.plant(y, p) {
                Some(ps) => {
                    let (e, _) = tracking_error(&ps, &eta, &theta);
                    (ps.x.clone(), ps.xdot.clone(), e.norm(), ps.d_hat)
                }
                None => (eta.clone(), theta.clone(), 0.0, 0.0),
            };
            agents.push(AgentRecord {
                x: log::dvec(&x),
                xdot: log::dvec(&xdot),
                eta: log::dvec(&eta),
                theta: log::dvec(&theta),
                e_norm,
                lambda_plus: log::dvec(&lam[p]),
                omega: log::dvec(&om[p]),
                d_hat,
                kkt_stationarity: cert.stationarity[p],
                kkt_coupling: cert.agent_coupling(&self.game, p),
                kkt_local: cert.agent_local(p),
            });
        }
        let gap = reference.map(|r| (self.output(y) - r).norm());
        Ok(Record { t, agents, gap })
    }
}

/// One integrator step; non-finite results become a divergence error
/// naming the first offending agent (1-based) and field.
pub fn step(system: &System, t: f64, y: &DVector<f64>, config: &SimConfig) -> Result<DVector<f64>> {
    Ok(step_with_rate(system, t, y, config)?.0)
}

fn step_with_rate(system: &System, t: f64, y: &DVector<f64>, config: &SimConfig) -> Result<(DVector<f64>, DVector<f64>)> {
    let f = |t: f64, y: &DVector<f64>| system.derivative(t, y, config.sign_mode);
    let (next, rate) = integrate_step(f, t, y, config.step_size, config.integrator)?;
    system.check_finite(t + config.step_size, &next)?;
    Ok((next, rate))
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: TrajectoryLog,
    pub final_time: f64,
    pub final_state: DVector<f64>,
    pub certificate: KktCertificate,
    /// True when the convergence window fired before the horizon.
    pub converged_early: bool,
    /// Max-norm of the derivative at the last step taken.
    pub final_rate: f64,
}

impl RunOutcome {
    pub fn gap(&self) -> Option<f64> {
        self.log.last().and_then(|r| r.gap)
    }
}

pub fn run(system: &System, config: &SimConfig, reference: Option<&DVector<f64>>) -> Result<RunOutcome> {
    run_from(system, config, system.initial_state(), reference)
}

pub fn run_from(system: &System, config: &SimConfig, y0: DVector<f64>, reference: Option<&DVector<f64>>) -> Result<RunOutcome> {
    config.validate()?;
    if y0.len() != system.state_len() {
        return Err(Error::Dimension(format!(
            "initial state has {} entries, expected {}",
            y0.len(),
            system.state_len()
        )));
    }
    if let Some(r) = reference {
        if r.len() != system.game.dim() {
            return Err(Error::Dimension("reference equilibrium has the wrong dimension".into()));
        }
    }
    let h = config.step_size;
    let steps = config.steps();
    let window = (config.convergence_window / h).ceil().max(1.0) as usize;
    let mut log = TrajectoryLog::new(system.game.action_dim(), Some(config.clone()));
    let mut y = y0;
    let mut quiet = 0usize;
    let mut converged_early = false;
    let mut final_rate = f64::INFINITY;
    let mut k = 0;
    while k < steps {
        let t = k as f64 * h;
        if k % config.log_stride == 0 {
            log.records.push(system.record(t, &y, reference)?);
        }
        let (next, rate) = match step_with_rate(system, t, &y, config) {
            Ok(v) => v,
            Err(Error::Divergence { time, agent, field, .. }) => {
                return Err(Error::Divergence {
                    time,
                    agent,
                    field,
                    partial: Box::new(log),
                })
            }
            Err(e) => return Err(e),
        };
        final_rate = rate.amax();
        y = next;
        k += 1;
        quiet = if final_rate < config.tolerance { quiet + 1 } else { 0 };
        if config.early_stop && quiet >= window {
            converged_early = true;
            break;
        }
    }
    let final_time = k as f64 * h;
    if log.last().is_none_or(|r| r.t != final_time) {
        log.records.push(system.record(final_time, &y, reference)?);
    }
    let certificate = system.certificate(&y)?;
    log.certificate = Some(certificate.clone());
    Ok(RunOutcome {
        log,
        final_time,
        final_state: y,
        certificate,
        converged_early,
        final_rate,
    })
}
