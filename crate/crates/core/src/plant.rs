//! Euler-Lagrange physical layer.
//!
//! Each agent is a mechanical system
//! `E(x) xdd + C(x, xd) xd + D = A(x) (tau + d(t))`
//! with unknown parameters `mu` entering linearly through a known
//! regressor. The tracking controller drives `x` onto the decision-layer
//! reference `eta` while adapting `mu_hat` and a scalar disturbance-bound
//! estimate `d_hat`.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub trait ElModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// Generalized coordinates, equal to the action dimension.
    fn dof(&self) -> usize;

    fn param_count(&self) -> usize;

    fn inertia(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn coriolis(&self, x: &DVector<f64>, xdot: &DVector<f64>) -> DMatrix<f64>;

    /// The `D` term with `v` the velocity-like argument: a constant
    /// gravity-type vector for generic models, `D(x) v` for damping-type
    /// models such as the surface vehicle.
    fn bias(&self, x: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;

    /// `Y` with `E yhat + C ytilde + D(ytilde) = Y mu + known_offset`.
    fn regressor(&self, x: &DVector<f64>, xdot: &DVector<f64>, yhat: &DVector<f64>, ytilde: &DVector<f64>) -> DMatrix<f64>;

    /// Part of the left-hand side that does not depend on `mu`.
    fn known_offset(&self, x: &DVector<f64>, _xdot: &DVector<f64>, _yhat: &DVector<f64>, _ytilde: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(x.len())
    }

    /// Parameters used by the simulated plant; never shown to the controller.
    fn true_params(&self) -> DVector<f64>;

    /// Actuator-frame input from a world-frame force.
    fn to_actuator(&self, _x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        u.clone()
    }

    /// World-frame generalized force from an actuator-frame input.
    fn to_world(&self, _x: &DVector<f64>, tau: &DVector<f64>) -> DVector<f64> {
        tau.clone()
    }
}

/// `m xdd + c = tau + d` in every coordinate, with `mu = [m, c_1..c_r]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitMass {
    dof: usize,
    mass: f64,
    offset: DVector<f64>,
}

impl UnitMass {
    pub fn new(dof: usize) -> Self {
        Self {
            dof,
            mass: 1.0,
            offset: DVector::zeros(dof),
        }
    }

    pub fn with_params(dof: usize, mass: f64, offset: DVector<f64>) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(Error::Config(format!("mass must be positive, got {mass}")));
        }
        if offset.len() != dof {
            return Err(Error::Dimension(format!("offset has {} entries, expected {dof}", offset.len())));
        }
        Ok(Self { dof, mass, offset })
    }
}

impl ElModel for UnitMass {
    fn name(&self) -> &str {
        "unit_mass"
    }

    fn dof(&self) -> usize {
        self.dof
    }

    fn param_count(&self) -> usize {
        1 + self.dof
    }

    fn inertia(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dof, self.dof) * self.mass
    }

    fn coriolis(&self, _x: &DVector<f64>, _xdot: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.dof, self.dof)
    }

    fn bias(&self, _x: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        self.offset.clone()
    }

    fn regressor(&self, _x: &DVector<f64>, _xdot: &DVector<f64>, yhat: &DVector<f64>, _ytilde: &DVector<f64>) -> DMatrix<f64> {
        let mut y = DMatrix::zeros(self.dof, 1 + self.dof);
        y.set_column(0, yhat);
        y.view_mut((0, 1), (self.dof, self.dof))
            .copy_from(&DMatrix::identity(self.dof, self.dof));
        y
    }

    fn true_params(&self) -> DVector<f64> {
        let mut mu = DVector::zeros(1 + self.dof);
        mu[0] = self.mass;
        mu.rows_mut(1, self.dof).copy_from(&self.offset);
        mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SignMode {
    /// Elementwise sign with `sgn(0) = 0`.
    #[default]
    Exact,
    /// `e / max(|e|, sigma)`.
    BoundaryLayer(f64),
}

impl SignMode {
    pub const DEFAULT_SIGMA: f64 = 1e-3;

    pub fn apply(&self, e: &DVector<f64>) -> DVector<f64> {
        match *self {
            SignMode::Exact => e.map(|v| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }),
            SignMode::BoundaryLayer(sigma) => e / e.norm().max(sigma),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceTerm {
    /// `amplitude * sin(frequency * t + phase)`, frequency in rad/s.
    Sine {
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `+amplitude` for the first half of each period, `-amplitude` after.
    Square { amplitude: f64, period: f64 },
    Constant { value: f64 },
}

impl DisturbanceTerm {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            DisturbanceTerm::Sine {
                amplitude,
                frequency,
                phase,
            } => amplitude * (frequency * t + phase).sin(),
            DisturbanceTerm::Square { amplitude, period } => {
                if (t / period).rem_euclid(1.0) < 0.5 {
                    amplitude
                } else {
                    -amplitude
                }
            }
            DisturbanceTerm::Constant { value } => value,
        }
    }

    /// Upper bound of `|term(t)|`.
    pub fn bound(&self) -> f64 {
        match *self {
            DisturbanceTerm::Sine { amplitude, .. } | DisturbanceTerm::Square { amplitude, .. } => amplitude.abs(),
            DisturbanceTerm::Constant { value } => value.abs(),
        }
    }
}

/// Sum of terms per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    pub channels: Vec<Vec<DisturbanceTerm>>,
}

impl Disturbance {
    pub fn none(dof: usize) -> Self {
        Self {
            channels: vec![Vec::new(); dof],
        }
    }

    /// `col{2 sin(0.5 t), 3 sin(0.3 t), 0.1 sin(0.1 t)}`.
    pub fn surface_vehicle_default() -> Self {
        let s = |amplitude, frequency| DisturbanceTerm::Sine {
            amplitude,
            frequency,
            phase: 0.0,
        };
        Self {
            channels: vec![vec![s(2.0, 0.5)], vec![s(3.0, 0.3)], vec![s(0.1, 0.1)]],
        }
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.channels.len(), self.channels.iter().map(|c| c.iter().map(|d| d.eval(t)).sum()))
    }

    pub fn bound(&self) -> f64 {
        self.channels
            .iter()
            .map(|c| c.iter().map(DisturbanceTerm::bound).sum::<f64>().powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn validate(&self, dof: usize) -> Result<()> {
        if self.channels.len() != dof {
            return Err(Error::Config(format!(
                "disturbance has {} channels, plant has {dof} coordinates",
                self.channels.len()
            )));
        }
        for t in self.channels.iter().flatten() {
            if let DisturbanceTerm::Square { period, .. } = t {
                if !(*period > 0.0) {
                    return Err(Error::Config(format!("square-wave period must be positive, got {period}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub x: DVector<f64>,
    pub xdot: DVector<f64>,
    pub mu_hat: DVector<f64>,
    pub d_hat: f64,
    pub x_ref: DVector<f64>,
}

impl PlantState {
    /// At rest at `x`, with zero estimates and the filtered reference on `x`.
    pub fn at_rest(x: DVector<f64>, params: usize) -> Self {
        let r = x.len();
        Self {
            x_ref: x.clone(),
            x,
            xdot: DVector::zeros(r),
            mu_hat: DVector::zeros(params),
            d_hat: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        3 * self.x.len() + self.mu_hat.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat layout `[x, xdot, mu_hat, d_hat, x_ref]`.
    pub fn write_to(&self, out: &mut [f64]) {
        let r = self.x.len();
        let v = self.mu_hat.len();
        out[..r].copy_from_slice(self.x.as_slice());
        out[r..2 * r].copy_from_slice(self.xdot.as_slice());
        out[2 * r..2 * r + v].copy_from_slice(self.mu_hat.as_slice());
        out[2 * r + v] = self.d_hat;
        out[2 * r + v + 1..3 * r + v + 1].copy_from_slice(self.x_ref.as_slice());
    }

    pub fn read_from(data: &[f64], r: usize, v: usize) -> Self {
        Self {
            x: DVector::from_column_slice(&data[..r]),
            xdot: DVector::from_column_slice(&data[r..2 * r]),
            mu_hat: DVector::from_column_slice(&data[2 * r..2 * r + v]),
            d_hat: data[2 * r + v],
            x_ref: DVector::from_column_slice(&data[2 * r + v + 1..3 * r + v + 1]),
        }
    }
}

/// `xref_dot = theta - (x - eta)` and `e = xdot - xref_dot`.
pub fn tracking_error(state: &PlantState, eta: &DVector<f64>, theta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let xref_dot = theta - (&state.x - eta);
    let e = &state.xdot - &xref_dot;
    (e, xref_dot)
}

/// World-frame force `Y mu_hat + offset - gamma e - sgn(e) d_hat`.
pub fn control_law(
    state: &PlantState,
    regressor: &DMatrix<f64>,
    offset: &DVector<f64>,
    e: &DVector<f64>,
    gamma: f64,
    sign: SignMode,
) -> DVector<f64> {
    regressor * &state.mu_hat + offset - e * gamma - sign.apply(e) * state.d_hat
}

/// `(d mu_hat, d d_hat) = (-Y^T e, e^T sgn(e))`.
pub fn adaptive_laws(regressor: &DMatrix<f64>, e: &DVector<f64>, sign: SignMode) -> (DVector<f64>, f64) {
    (-(regressor.transpose() * e), e.dot(&sign.apply(e)))
}

/// Acceleration `E^{-1}(A (tau + d) - C xdot - D(xdot))`.
pub fn plant_acceleration(
    model: &dyn ElModel,
    x: &DVector<f64>,
    xdot: &DVector<f64>,
    tau: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<DVector<f64>> {
    let force = model.to_world(x, &(tau + d)) - model.coriolis(x, xdot) * xdot - model.bias(x, xdot);
    let e = model.inertia(x);
    let chol = e
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("{} inertia is not positive definite", model.name())))?;
    Ok(chol.solve(&force))
}

/// Derivative of a plant under a given actuator input; `mu_hat`,
/// `d_hat` and `x_ref` rates are supplied by the controller.
pub fn plant_rhs(
    state: &PlantState,
    tau: &DVector<f64>,
    d: &DVector<f64>,
    model: &dyn ElModel,
    mu_hat_dot: DVector<f64>,
    d_hat_dot: f64,
    x_ref_dot: DVector<f64>,
) -> Result<PlantState> {
    Ok(PlantState {
        x: state.xdot.clone(),
        xdot: plant_acceleration(model, &state.x, &state.xdot, tau, d)?,
        mu_hat: mu_hat_dot,
        d_hat: d_hat_dot,
        x_ref: x_ref_dot,
    })
}

#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub derivative: PlantState,
    pub e: DVector<f64>,
    /// World-frame control force.
    pub u: DVector<f64>,
    /// Actuator-frame input.
    pub tau: DVector<f64>,
}

/// One agent's plant under the adaptive robust tracking controller.
/// `theta_dot` is the decision layer's current `d theta / dt`, which gives
/// the reference acceleration `theta_dot - (xdot - theta)`.
#[allow(clippy::too_many_arguments)]
pub fn closed_loop_rhs(
    state: &PlantState,
    model: &dyn ElModel,
    d: &DVector<f64>,
    eta: &DVector<f64>,
    theta: &DVector<f64>,
    theta_dot: &DVector<f64>,
    gamma: f64,
    sign: SignMode,
) -> Result<ClosedLoop> {
    let (e, xref_dot) = tracking_error(state, eta, theta);
    let xref_ddot = theta_dot - (&state.xdot - theta);
    let y = model.regressor(&state.x, &state.xdot, &xref_ddot, &xref_dot);
    let offset = model.known_offset(&state.x, &state.xdot, &xref_ddot, &xref_dot);
    let u = control_law(state, &y, &offset, &e, gamma, sign);
    let tau = model.to_actuator(&state.x, &u);
    let (mu_dot, d_dot) = adaptive_laws(&y, &e, sign);
    let derivative = plant_rhs(state, &tau, d, model, mu_dot, d_dot, xref_dot)?;
    Ok(ClosedLoop { derivative, e, u, tau })
}

/// Degrees to radians.
pub fn deg(v: f64) -> f64 {
    v * PI / 180.0
}
