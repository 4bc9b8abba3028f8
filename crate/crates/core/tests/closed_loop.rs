//! The adaptive tracking controller on its own, driven by prescribed
//! references instead of the decision layer.

use coalition_nash::plant::{closed_loop_rhs, Disturbance, DisturbanceTerm, ElModel, PlantState, SignMode, UnitMass};
use coalition_nash::sim::{integrate_step, Integrator};
use coalition_nash::usv::{UsvModel, UsvParams};
use nalgebra::DVector;

type Reference = dyn Fn(f64) -> (DVector<f64>, DVector<f64>, DVector<f64>);

/// Integrates one plant tracking `(eta, theta, theta_dot)(t)`; returns the
/// final state and the final tracking error norm.
fn track(
    model: &dyn ElModel,
    d: &Disturbance,
    reference: &Reference,
    start: PlantState,
    horizon: f64,
    h: f64,
    sign: SignMode,
) -> (PlantState, f64) {
    let r = model.dof();
    let v = model.param_count();
    let mut y = DVector::zeros(start.len());
    start.write_to(y.as_mut_slice());
    let f = |t: f64, y: &DVector<f64>| {
        let s = PlantState::read_from(y.as_slice(), r, v);
        let (eta, theta, theta_dot) = reference(t);
        let cl = closed_loop_rhs(&s, model, &d.eval(t), &eta, &theta, &theta_dot, 3.0, sign)?;
        let mut out = DVector::zeros(y.len());
        cl.derivative.write_to(out.as_mut_slice());
        Ok(out)
    };
    let steps = (horizon / h).round() as usize;
    for k in 0..steps {
        y = integrate_step(f, k as f64 * h, &y, h, Integrator::Rk4).unwrap().0;
    }
    let s = PlantState::read_from(y.as_slice(), r, v);
    let (eta, theta, _) = reference(horizon);
    let e = coalition_nash::plant::tracking_error(&s, &eta, &theta).0.norm();
    (s, e)
}

#[test]
fn unit_mass_rejects_constant_disturbance() {
    let model = UnitMass::new(2);
    let d = Disturbance {
        channels: vec![vec![DisturbanceTerm::Constant { value: 0.7 }], vec![DisturbanceTerm::Constant { value: -0.4 }]],
    };
    let target = DVector::from_vec(vec![1.0, -2.0]);
    let reference = move |_: f64| (target.clone(), DVector::zeros(2), DVector::zeros(2));
    let start = PlantState::at_rest(DVector::zeros(2), model.param_count());
    let (s, e) = track(&model, &d, &reference, start, 40.0, 1e-3, SignMode::Exact);
    assert!(e < 1e-3, "{e}");
    assert!((&s.x - DVector::from_vec(vec![1.0, -2.0])).amax() < 1e-3);
    // Finite, and at least the per-axis size of the disturbance that had
    // to be compensated early on.
    assert!(s.d_hat.is_finite() && s.d_hat > 0.4, "{}", s.d_hat);
}

#[test]
fn usv_tracks_a_slow_circle_under_sea_disturbance() {
    let model = UsvModel::new(UsvParams::default()).unwrap();
    let d = Disturbance::surface_vehicle_default();
    // Slow circle of radius 20 m with the heading following the tangent.
    let w = 0.05;
    let reference = move |t: f64| {
        let (s, c) = (w * t).sin_cos();
        let eta = DVector::from_vec(vec![20.0 * c, 20.0 * s, w * t + std::f64::consts::FRAC_PI_2]);
        let theta = DVector::from_vec(vec![-20.0 * w * s, 20.0 * w * c, w]);
        let theta_dot = DVector::from_vec(vec![-20.0 * w * w * c, -20.0 * w * w * s, 0.0]);
        (eta, theta, theta_dot)
    };
    let start = PlantState::at_rest(DVector::from_vec(vec![20.0, 0.0, std::f64::consts::FRAC_PI_2]), model.param_count());
    let (s, e) = track(&model, &d, &reference, start, 120.0, 1e-3, SignMode::BoundaryLayer(1e-3));
    let (eta, _, _) = reference(120.0);
    assert!(e < 1e-2, "{e}");
    assert!((&s.x - eta).amax() < 1e-2);
}
