//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

#[path = "common/fd.rs"]
mod fd;
#[path = "common/stacked.rs"]
mod stacked;

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use coalition_nash::cli::Scenario;
use coalition_nash::game::generator::{random_coupled_toy, toy_topology};
use coalition_nash::game::{project_nonneg, CoalitionGame, KktCertificate};
use coalition_nash::graph::{build_selectors, estimation_symmetric_min_eig, CommTopology};
use coalition_nash::plant::{Disturbance, DisturbanceTerm, ElModel, PlantState, UnitMass};
use coalition_nash::seeker::GainConfig;
use coalition_nash::sim::{run, write_log, PlantLayer, RunOutcome, SimConfig, System};
use coalition_nash::usv::{build_confrontation_game, reference_confrontation, reference_topology, UsvModel, UsvParams};
use coalition_nash::Error;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 20;

struct Gate {
    failed: usize,
    total: usize,
}

impl Gate {
    fn report(&mut self, id: &str, ok: bool, detail: String) {
        self.total += 1;
        if !ok {
            self.failed += 1;
        }
        println!("{} [{id}] {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn disturbance() -> Disturbance {
    Disturbance {
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
    }
}

fn toy_system(game: CoalitionGame, plants: bool) -> System {
    let layer = plants.then(|| {
        let model: Arc<dyn ElModel> = Arc::new(UnitMass::new(1));
        PlantLayer {
            models: vec![model.clone(); 4],
            disturbances: vec![disturbance(); 4],
            initial: vec![PlantState::at_rest(DVector::zeros(1), model.param_count()); 4],
        }
    });
    System::new(game, toy_topology().unwrap(), GainConfig::default(), layer).unwrap()
}

/// Final-state diagnostics shared by criteria 3 to 6.
struct Final {
    kkt: KktCertificate,
    dual_spread: f64,
    tracking: f64,
    estimation: f64,
    e_norm: f64,
}

fn diagnose(system: &System, y: &DVector<f64>) -> Final {
    let game = &system.game;
    let s = system.seeker(y);
    let lam = s.lambda_plus();
    let mut dual_spread = 0.0f64;
    let mut tracking = 0.0f64;
    for i in 0..game.num_coalitions() {
        let members = game.coalition_agents(i);
        for p in members.clone() {
            for q in members.clone() {
                dual_spread = dual_spread.max((&lam[p] - &lam[q]).norm());
            }
        }
        // Coalition-average gradient at the frozen views.
        let m = members.len() as f64;
        let target = members
            .clone()
            .map(|p| game.own_coalition_gradient(p, &s.chi(p)).unwrap())
            .fold(DVector::zeros(game.coalition_size(i) * game.action_dim()), |a, g| a + g)
            / m;
        let r = game.action_dim();
        for p in members {
            for k in 0..game.coalition_size(i) {
                let want = target.rows(k * r, r);
                tracking = tracking.max((s.xi(p, k) - want).norm());
            }
        }
    }
    let eta = s.eta_all();
    let estimation = (0..game.num_agents())
        .map(|p| (s.chi(p) - &eta).norm_squared())
        .sum::<f64>()
        .sqrt();
    let e_norm = match system.plants() {
        None => 0.0,
        Some(_) => (0..game.num_agents())
            .map(|p| {
                let ps = system.plant(y, p).unwrap();
                coalition_nash::plant::tracking_error(&ps, &s.eta(p).into_owned(), &s.theta(p).into_owned())
                    .0
                    .norm_squared()
            })
            .sum::<f64>()
            .sqrt(),
    };
    Final {
        kkt: system.certificate(y).unwrap(),
        dual_spread,
        tracking,
        estimation,
        e_norm,
    }
}

struct SeedRun {
    gap: f64,
    secs: f64,
    fin: Final,
}

fn toy_runs(plants: bool) -> Vec<SeedRun> {
    let config = SimConfig {
        horizon: 200.0,
        step_size: 1e-3,
        ..SimConfig::default()
    };
    (0..SEEDS)
        .map(|seed| {
            let (game, sol) = random_coupled_toy(seed).unwrap();
            let system = toy_system(game, plants);
            let started = Instant::now();
            let out: RunOutcome = run(&system, &config, Some(&sol.x)).unwrap();
            let secs = started.elapsed().as_secs_f64();
            SeedRun {
                gap: out.gap().unwrap(),
                secs,
                fin: diagnose(&system, &out.final_state),
            }
        })
        .collect()
}

fn max_of(runs: &[SeedRun], f: impl Fn(&SeedRun) -> f64) -> f64 {
    runs.iter().map(f).fold(0.0, f64::max)
}

fn criteria_1_to_6(gate: &mut Gate) {
    let seeker = toy_runs(false);
    let full = toy_runs(true);

    let gap = max_of(&seeker, |r| r.gap);
    let secs = max_of(&seeker, |r| r.secs);
    let passed = seeker.iter().filter(|r| r.gap <= 1e-3 && r.secs <= 30.0).count();
    gate.report(
        "1",
        passed == SEEDS as usize,
        format!("toy seeker-only, {passed}/{SEEDS} seeds with |eta(T) - x*| <= 1e-3 in <= 30 s (max gap {gap:.2e}, max runtime {secs:.1} s)"),
    );

    let gap = max_of(&full, |r| r.gap);
    let e = max_of(&full, |r| r.fin.e_norm);
    let passed = full.iter().filter(|r| r.gap <= 1e-2 && r.fin.e_norm <= 1e-3).count();
    gate.report(
        "2",
        passed == SEEDS as usize,
        format!("toy with unit-mass plants, {passed}/{SEEDS} seeds with |x(T) - x*| <= 1e-2 and |e(T)| <= 1e-3 (max gap {gap:.2e}, max |e| {e:.2e})"),
    );

    let both = || seeker.iter().chain(&full);
    let kkt = both().map(|r| r.fin.kkt.max_residual()).fold(0.0, f64::max);
    gate.report("3", kkt <= 1e-3, format!("KKT residuals of all final states, max {kkt:.2e} (<= 1e-3)"));

    let spread = both().map(|r| r.fin.dual_spread).fold(0.0, f64::max);
    gate.report("4", spread <= 1e-3, format!("intra-coalition dual spread, max {spread:.2e} (<= 1e-3)"));

    let tracking = both().map(|r| r.fin.tracking).fold(0.0, f64::max);
    gate.report("5", tracking <= 1e-3, format!("gradient tracking error at frozen views, max {tracking:.2e} (<= 1e-3)"));

    let est = both().map(|r| r.fin.estimation).fold(0.0, f64::max);
    gate.report("6", est <= 1e-3, format!("|s(T) - 1 (x) eta(T)|, max {est:.2e} (<= 1e-3)"));
}

fn criterion_7(gate: &mut Gate) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/usv_confrontation.toml");
    let started = Instant::now();
    let scenario = Scenario::load(&path, &[]).unwrap();
    let mut notes = Vec::new();
    let reference = match scenario.oracle() {
        Ok(sol) => Some(sol.x),
        Err(Error::NonConvergence {
            iterations,
            best_residual,
            ..
        }) => {
            notes.push(format!("oracle failed after {iterations} iterations (residual {best_residual:.2e})"));
            None
        }
        Err(e) => {
            notes.push(format!("oracle failed: {e}"));
            None
        }
    };
    let game = &scenario.system.game;
    let ok = match run(&scenario.system, &scenario.file.sim, reference.as_ref()) {
        Ok(out) => {
            let x = scenario.system.output(&out.final_state);
            let bf = scenario.battlefield.as_ref().unwrap();
            let inside = (0..game.num_agents()).all(|p| {
                let (px, py) = (x[3 * p], x[3 * p + 1]);
                px > bf.bounds.x_min && px < bf.bounds.x_max && py > bf.bounds.y_min && py < bf.bounds.y_max
            });
            let coupling = (0..game.num_coalitions())
                .map(|i| game.coupling_residual(i, &x).max())
                .fold(f64::NEG_INFINITY, f64::max);
            let (_, omega) = scenario.system.multipliers(&out.final_state);
            let omega = omega.iter().map(|w| w.norm()).fold(0.0, f64::max);
            let gap = out.gap();
            let secs = started.elapsed().as_secs_f64();
            notes.push(format!(
                "bounds strict {inside}, coupling {coupling:.2e}, max |omega| {omega:.2e}, gap {gap:?}, runtime {secs:.0} s"
            ));
            inside && coupling <= 1e-6 && omega <= 1e-2 && gap.is_some_and(|g| g <= 0.1) && secs <= 600.0
        }
        Err(Error::Divergence { time, agent, field, .. }) => {
            notes.push(format!("run diverged at t = {time:.4} s (agent {agent}, {field})"));
            false
        }
        Err(e) => panic!("{e}"),
    };
    let report = coalition_nash::game::validate::validate_game(game).unwrap();
    notes.push(format!(
        "own-block convexity {:.3}, monotonicity {:.3}",
        report.convexity.iter().copied().fold(f64::INFINITY, f64::min),
        report.monotonicity
    ));
    gate.report("7", ok, format!("shipped 12-vessel confrontation: {}", notes.join("; ")));
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

fn criterion_8(gate: &mut Gate) {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut fails: Vec<String> = Vec::new();
    let mut check = |ok: bool, what: String| {
        if !ok {
            fails.push(what);
        }
    };

    // Projection onto the nonnegative orthant.
    let mut proj_ok = true;
    for _ in 0..1000 {
        let (a, b) = (random_vec(&mut rng, 6, 10.0), random_vec(&mut rng, 6, 10.0));
        let (pa, pb) = (project_nonneg(&a), project_nonneg(&b));
        let y = random_vec(&mut rng, 6, 10.0).abs();
        proj_ok &= project_nonneg(&pa) == pa
            && (&pa - &pb).norm() <= (&a - &b).norm() + 1e-12
            && (&a - &pa).dot(&(&pa - &y)) >= -1e-9;
    }
    check(proj_ok, "projection".into());

    // Selectors.
    let mut sel_ok = true;
    for n in 2..6 {
        for r in 1..4 {
            let s = build_selectors(n, r).unwrap();
            let eye = DMatrix::<f64>::identity(n * n * r, n * n * r);
            sel_ok &= s.theta.transpose() * &s.theta + s.xi.transpose() * &s.xi == eye
                && (&s.theta * s.xi.transpose()).amax() == 0.0;
        }
    }
    check(sel_ok, "selectors".into());

    // Laplacians and the estimation matrix.
    let topologies: [(&str, CommTopology); 2] =
        [("toy ring", toy_topology().unwrap()), ("confrontation", reference_topology().unwrap())];
    for (name, topo) in &topologies {
        for i in 0..topo.num_coalitions() {
            let l = topo.intra_laplacian(i);
            check(
                l.symmetric_eigenvalues().min() > -1e-12 && l.row_sum().amax() < 1e-14,
                format!("{name} Laplacian {}", i + 1),
            );
        }
        let eig = estimation_symmetric_min_eig(topo);
        check(eig > 0.0, format!("{name} estimation matrix not positive definite (min eigenvalue {eig:.4})"));
    }

    // Euler-Lagrange identities at 1000 random states.
    let models: Vec<Box<dyn ElModel>> =
        vec![Box::new(UnitMass::new(3)), Box::new(UsvModel::new(UsvParams::default()).unwrap())];
    for m in &models {
        let (mut regressor, mut skew) = (0.0f64, 0.0f64);
        for _ in 0..1000 {
            let (x, xd, yh, yt) = (
                random_vec(&mut rng, 3, 5.0),
                random_vec(&mut rng, 3, 5.0),
                random_vec(&mut rng, 3, 5.0),
                random_vec(&mut rng, 3, 5.0),
            );
            let lhs = m.inertia(&x) * &yh + m.coriolis(&x, &xd) * &yt + m.bias(&x, &yt);
            let rhs = m.regressor(&x, &xd, &yh, &yt) * m.true_params() + m.known_offset(&x, &xd, &yh, &yt);
            regressor = regressor.max((&lhs - &rhs).amax() / (1.0 + lhs.amax()));
            // dE/dt along xd by a five-point stencil.
            let h = 1e-4;
            let at = |k: f64| m.inertia(&(&x + &xd * (k * h)));
            let e_dot = (at(-2.0) - at(-1.0) * 8.0 + at(1.0) * 8.0 - at(2.0)) / (12.0 * h);
            let n = e_dot - m.coriolis(&x, &xd) * 2.0;
            skew = skew.max((&n + n.transpose()).amax());
        }
        check(regressor <= 1e-8, format!("{} regressor identity {regressor:.2e}", m.name()));
        check(skew <= 1e-8, format!("{} skew symmetry {skew:.2e}", m.name()));
    }

    // Per-agent against stacked right-hand sides.
    let usv = build_confrontation_game(&reference_confrontation()).unwrap();
    let usv_topo = reference_topology().unwrap();
    let mut dev = 0.0f64;
    for seed in 0..5 {
        let (game, _) = random_coupled_toy(seed).unwrap();
        dev = dev.max(stacked::stacked_deviation(&game, &toy_topology().unwrap(), seed, 3.0));
        dev = dev.max(stacked::stacked_deviation(&usv, &usv_topo, seed, 1.0));
    }
    check(dev <= 1e-10, format!("stacked form deviation {dev:.2e}"));

    // d_hat monotone and byte-identical reruns.
    let (game, sol) = random_coupled_toy(0).unwrap();
    let system = toy_system(game, true);
    let config = SimConfig {
        horizon: 5.0,
        log_stride: 10,
        ..SimConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for k in 0..2 {
        let out = run(&system, &config, Some(&sol.x)).unwrap();
        let monotone = (0..4).all(|p| out.log.records.windows(2).all(|w| w[1].agents[p].d_hat >= w[0].agents[p].d_hat));
        check(monotone, "d_hat not monotone".into());
        let path = dir.path().join(format!("run{k}.csv"));
        write_log(&out.log, &path).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    check(bytes[0] == bytes[1], "reruns differ".into());

    let secs = started.elapsed().as_secs_f64();
    check(secs < 60.0, format!("suite took {secs:.1} s"));
    let detail = if fails.is_empty() {
        format!("structural suites in {secs:.1} s")
    } else {
        format!("structural suites in {secs:.1} s; failing: {}", fails.join("; "))
    };
    gate.report("8", fails.is_empty(), detail);
}

fn criterion_9(gate: &mut Gate) {
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut games: Vec<(CoalitionGame, f64)> = (0..3).map(|s| (random_coupled_toy(s).unwrap().0, 10.0)).collect();
    games.push((build_confrontation_game(&reference_confrontation()).unwrap(), 1000.0));
    for (game, scale) in &games {
        for _ in 0..100 {
            let x = random_vec(&mut rng, game.dim(), *scale);
            let err = fd::rel_err(&fd::fd_pseudogradient(game, &x), &game.pseudogradient(&x).unwrap());
            worst = worst.max(err);
        }
    }
    gate.report(
        "9",
        worst <= 1e-5,
        format!("analytic vs central-difference pseudogradient, 100 points x {} scenarios, max relative error {worst:.2e} (<= 1e-5)", games.len()),
    );
}

fn main() {
    let mut gate = Gate { failed: 0, total: 0 };
    criteria_1_to_6(&mut gate);
    criterion_7(&mut gate);
    criterion_8(&mut gate);
    criterion_9(&mut gate);
    println!("acceptance: {} of {} criteria passed", gate.total - gate.failed, gate.total);
    if gate.failed > 0 {
        std::process::exit(1);
    }
}
