use std::sync::Arc;

use coalition_nash::game::generator::{random_coupled_toy, toy_topology};
use coalition_nash::plant::{Disturbance, DisturbanceTerm, ElModel, PlantState, SignMode, UnitMass};
use coalition_nash::seeker::GainConfig;
use coalition_nash::sim::{read_log, run, write_log, Integrator, PlantLayer, SimConfig, System};
use nalgebra::DVector;

fn toy_system(plants: bool) -> (System, DVector<f64>) {
    let (game, sol) = random_coupled_toy(0).unwrap();
    let layer = plants.then(|| {
        let model: Arc<dyn ElModel> = Arc::new(UnitMass::new(1));
        let d = Disturbance {
            channels: vec![vec![
                DisturbanceTerm::Sine {
                    amplitude: 0.5,
                    frequency: 1.0,
                    phase: 0.0,
                },
                DisturbanceTerm::Square {
                    amplitude: 0.3,
                    period: 4.0,
                },
            ]],
        };
        PlantLayer {
            models: vec![model.clone(); 4],
            disturbances: vec![d; 4],
            initial: vec![PlantState::at_rest(DVector::zeros(1), model.param_count()); 4],
        }
    });
    let system = System::new(game, toy_topology().unwrap(), GainConfig::default(), layer).unwrap();
    (system, sol.x)
}

fn fixed(h: f64, horizon: f64, integrator: Integrator) -> SimConfig {
    SimConfig {
        step_size: h,
        horizon,
        integrator,
        early_stop: false,
        log_stride: 1_000_000,
        ..SimConfig::default()
    }
}

fn final_eta(system: &System, config: &SimConfig) -> DVector<f64> {
    let out = run(system, config, None).unwrap();
    system.seeker(&out.final_state).eta_all()
}

#[test]
fn step_halving_reduces_error() {
    let (system, _) = toy_system(false);
    let horizon = 4.0;
    let reference = final_eta(&system, &fixed(2.5e-4, horizon, Integrator::Rk4));
    let errors = |method, hs: &[f64]| -> Vec<f64> {
        hs.iter()
            .map(|&h| (final_eta(&system, &fixed(h, horizon, method)) - &reference).amax())
            .collect()
    };
    let euler = errors(Integrator::Euler, &[4e-3, 2e-3, 1e-3]);
    assert!(euler.windows(2).all(|w| w[1] < w[0]), "{euler:?}");
    // First order: halving the step roughly halves the error.
    for w in euler.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.6..2.5).contains(&ratio), "{euler:?}");
    }
    let rk4 = errors(Integrator::Rk4, &[2e-2, 1e-2, 5e-3]);
    assert!(rk4.windows(2).all(|w| w[1] < w[0]), "{rk4:?}");
    assert!(rk4[2] < euler[2], "{rk4:?} {euler:?}");
}

#[test]
fn reruns_are_byte_identical() {
    let (system, xs) = toy_system(true);
    let config = SimConfig {
        horizon: 3.0,
        log_stride: 50,
        ..SimConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for k in 0..2 {
        let path = dir.path().join(format!("run{k}.csv"));
        let out = run(&system, &config, Some(&xs)).unwrap();
        write_log(&out.log, &path).unwrap();
        texts.push((std::fs::read(&path).unwrap(), std::fs::read(path.with_extension("json")).unwrap()));
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn log_round_trips_through_csv() {
    let (system, xs) = toy_system(true);
    let config = SimConfig {
        horizon: 1.0,
        log_stride: 100,
        ..SimConfig::default()
    };
    let out = run(&system, &config, Some(&xs)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    write_log(&out.log, &path).unwrap();
    let back = read_log(&path).unwrap();
    assert_eq!(back.records.len(), out.log.records.len());
    for (a, b) in out.log.records.iter().zip(&back.records) {
        assert_eq!(a.t, b.t);
        for (x, y) in a.agents.iter().zip(&b.agents) {
            assert_eq!(x.x, y.x);
            assert_eq!(x.xdot, y.xdot);
            assert_eq!(x.eta, y.eta);
            assert_eq!(x.lambda_plus, y.lambda_plus);
            assert_eq!(x.d_hat, y.d_hat);
        }
    }
}

#[test]
fn early_stop_leaves_a_quiet_state() {
    let (system, _) = toy_system(false);
    let config = SimConfig::default();
    let out = run(&system, &config, None).unwrap();
    assert!(out.converged_early);
    assert!(out.final_time < config.horizon);
    // The derivative at the returned state, evaluated afresh.
    let rate = system
        .derivative(out.final_time, &out.final_state, config.sign_mode)
        .unwrap()
        .amax();
    assert!(rate < config.tolerance, "{rate}");
}

#[test]
fn disturbance_bound_estimate_is_nondecreasing() {
    let (system, _) = toy_system(true);
    for sign_mode in [SignMode::Exact, SignMode::BoundaryLayer(1e-3)] {
        let config = SimConfig {
            horizon: 10.0,
            log_stride: 10,
            sign_mode,
            ..SimConfig::default()
        };
        let out = run(&system, &config, None).unwrap();
        for p in 0..4 {
            let series: Vec<f64> = out.log.records.iter().map(|r| r.agents[p].d_hat).collect();
            assert!(series.windows(2).all(|w| w[1] >= w[0]), "agent {p}");
            assert!(series.last().unwrap() > &0.0);
        }
    }
}
