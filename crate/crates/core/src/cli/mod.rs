//! Command-line front end.
//!
//! Exit codes: 0 ok, 1 usage/parse/io, 2 validation failure, 3 divergence
//! or oracle non-convergence.

pub mod scenario;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::game::validate::validate_game;
use crate::game::{KktCertificate, OracleSolution};
use crate::graph::{check_connectivity, estimation_symmetric_min_eig};
use crate::seeker::{theorem_gain_bounds, GainConfig};
use crate::sim::{run, write_log, RunOutcome, TrajectoryLog};
use crate::{Error, Result};

pub use scenario::{default_out_root, read_scenario, Scenario, ScenarioFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

/// Most rows kept per agent in `plot_data.csv`.
const PLOT_POINTS: usize = 400;

#[derive(Debug, Parser)]
#[command(name = "coalition-nash", version, about = "Distributed Nash equilibrium seeking for coalition games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check graph connectivity, Slater points, convexity and gain bounds.
    Validate {
        scenario: PathBuf,
        /// Override a scenario value, e.g. `gains.alpha=5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Simulate a scenario and write its trajectory.
    Run {
        scenario: PathBuf,
        /// Output directory (default `$COALITION_NASH_OUT/<name>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace an existing output directory.
        #[arg(long)]
        force: bool,
        /// Solve the centralized reference first and report `|x - x*|`.
        #[arg(long)]
        oracle: bool,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Solve the game centrally and print the equilibrium.
    Oracle {
        scenario: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a cartesian grid of gains in parallel and tabulate the outcomes.
    Sweep {
        scenario: PathBuf,
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        beta: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        gamma: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        kappa: Vec<f64>,
        /// Summary CSV (default `$COALITION_NASH_OUT/<name>-sweep.csv`).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
        #[arg(long)]
        oracle: bool,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
}

/// Parses `args` (including the program name) and executes the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let result = match cli.command {
        Command::Validate { scenario, overrides } => cmd_validate(&resolve_path(&scenario), &overrides, out),
        Command::Run {
            scenario,
            out: dir,
            force,
            oracle,
            overrides,
        } => cmd_run(&resolve_path(&scenario), dir, force, oracle, &overrides, out, err),
        Command::Oracle { scenario, overrides } => cmd_oracle(&resolve_path(&scenario), &overrides, out),
        Command::Sweep {
            scenario,
            alpha,
            beta,
            gamma,
            kappa,
            out: file,
            force,
            oracle,
            overrides,
        } => {
            let grid = [alpha, beta, gamma, kappa];
            cmd_sweep(&resolve_path(&scenario), grid, file, force, oracle, &overrides, out)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Io { .. } => EXIT_USAGE,
        Error::Divergence { .. } | Error::NonConvergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_VALIDATION,
    }
}

/// Accepts scenario paths with the `.toml` extension left off.
fn resolve_path(p: &Path) -> PathBuf {
    if !p.exists() && p.extension().is_none() {
        let with = p.with_extension("toml");
        if with.exists() {
            return with;
        }
    }
    p.to_path_buf()
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn fmt_num(v: f64) -> String {
    let v = if v.abs() < 5e-10 { 0.0 } else { v };
    format!("{v:.9}")
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|&x| fmt_num(x)).collect();
    format!("[{}]", parts.join(", "))
}

fn cmd_validate(path: &Path, overrides: &[String], out: &mut dyn Write) -> Result<i32> {
    let file = read_scenario(path, overrides)?;
    let mut failed = false;
    let mut line = |out: &mut dyn Write, status: &str, check: &str, detail: String| -> Result<()> {
        failed |= status == "FAIL";
        writeln!(out, "{status:<4} {check}: {detail}").map_err(io_err(Path::new("<stdout>")))
    };

    match file.sim.validate() {
        Ok(()) => line(out, "PASS", "sim", "configuration is consistent".into())?,
        Err(e) => line(out, "FAIL", "sim", e.to_string())?,
    }
    let (game, battlefield) = match file.build_game() {
        Ok(g) => g,
        Err(e) => {
            line(out, "FAIL", "game", e.to_string())?;
            return Ok(EXIT_VALIDATION);
        }
    };
    line(
        out,
        "PASS",
        "game",
        format!(
            "{} coalitions, {} agents, action dimension {}",
            game.num_coalitions(),
            game.num_agents(),
            game.action_dim()
        ),
    )?;
    if let Some(b) = &battlefield {
        line(out, "PASS", "battlefield", format!("{} red and {} blue vessels", b.red.agents.len(), b.blue.agents.len()))?;
    }
    let topology = match file.topology.build(game.coalition_sizes()) {
        Ok(t) => t,
        Err(e) => {
            line(out, "FAIL", "topology", e.to_string())?;
            return Ok(EXIT_VALIDATION);
        }
    };
    let conn = check_connectivity(&topology);
    if conn.is_ok() {
        line(out, "PASS", "connectivity", "coalition graphs connected, global graph strongly connected".into())?;
    } else {
        line(out, "FAIL", "connectivity", conn.violations().join("; "))?;
    }

    let report = validate_game(&game)?;
    for (i, &m) in report.slater_margins.iter().enumerate() {
        let status = if m > crate::game::validate::SLATER_THRESHOLD { "PASS" } else { "FAIL" };
        line(out, status, "slater", format!("coalition {} margin {m:.6}", i + 1))?;
    }
    for (i, &h) in report.convexity.iter().enumerate() {
        let status = if h > 0.0 { "PASS" } else { "FAIL" };
        line(out, status, "convexity", format!("coalition {} own-block min eigenvalue {h:.6}", i + 1))?;
    }
    let status = if report.monotone_ok() { "PASS" } else { "WARN" };
    line(out, status, "monotonicity", format!("pseudogradient margin {:.6}", report.monotonicity))?;

    let lemma = estimation_symmetric_min_eig(&topology);
    let status = if lemma > 0.0 { "PASS" } else { "WARN" };
    line(out, status, "estimation", format!("symmetric part min eigenvalue {lemma:.6}"))?;

    let bounds = theorem_gain_bounds(&game, &topology, &report);
    let violations = bounds.violations(&file.gains);
    if violations.is_empty() {
        line(out, "PASS", "gains", "all sufficient bounds exceeded".into())?;
    } else {
        let status = if file.gains.strict { "FAIL" } else { "WARN" };
        line(out, status, "gains", violations.join("; "))?;
    }

    if let Err(e) = file.clone().resolve("scenario") {
        line(out, "FAIL", "plants", e.to_string())?;
    } else if file.plant_models.is_some() {
        line(out, "PASS", "plants", "plant layer matches the game".into())?;
    }
    Ok(if failed { EXIT_VALIDATION } else { EXIT_OK })
}

fn print_oracle(sol: &OracleSolution, game: &crate::game::CoalitionGame, out: &mut dyn Write) -> std::io::Result<()> {
    for p in 0..game.num_agents() {
        let (i, j) = game.agent_id(p);
        let x = sol.x.rows(game.action_range(p).start, game.action_dim()).into_owned();
        writeln!(out, "agent {} (coalition {}, member {})", p + 1, i + 1, j + 1)?;
        writeln!(out, "  x*     = {}", fmt_vec(&x))?;
        writeln!(out, "  lambda = {}", fmt_vec(&sol.lambda[p]))?;
        writeln!(out, "  omega  = {}", fmt_vec(&sol.omega[p]))?;
    }
    print_certificate(&sol.certificate, out)?;
    writeln!(out, "iterations: {}", sol.iterations)
}

fn print_certificate(c: &KktCertificate, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "kkt max residual: {:.3e}", c.max_residual())
}

fn cmd_oracle(path: &Path, overrides: &[String], out: &mut dyn Write) -> Result<i32> {
    let scenario = Scenario::load(path, overrides)?;
    match scenario.oracle() {
        Ok(sol) => {
            print_oracle(&sol, &scenario.system.game, out).map_err(io_err(Path::new("<stdout>")))?;
            Ok(EXIT_OK)
        }
        Err(Error::NonConvergence {
            iterations,
            best_residual,
            best,
        }) => {
            let w = |out: &mut dyn Write| -> std::io::Result<()> {
                writeln!(out, "oracle did not converge after {iterations} iterations")?;
                writeln!(out, "best max residual: {best_residual:.3e}")?;
                print_oracle(&best, &scenario.system.game, out)
            };
            w(out).map_err(io_err(Path::new("<stdout>")))?;
            Ok(EXIT_DIVERGENCE)
        }
        Err(e @ Error::Numerical(_)) => {
            writeln!(out, "oracle failed: {e}").map_err(io_err(Path::new("<stdout>")))?;
            Ok(EXIT_DIVERGENCE)
        }
        Err(e) => Err(e),
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    scenario: &'a str,
    status: &'a str,
    final_time: f64,
    converged_early: bool,
    final_rate: f64,
    gap: Option<f64>,
    certificate: Option<&'a KktCertificate>,
    divergence: Option<String>,
    oracle: Option<&'a OracleSolution>,
}

fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && !force {
        return Err(Error::Io {
            path: dir.to_path_buf(),
            source: std::io::Error::new(
                std::io::ErrorKind::AlreadyExists,
                "output directory exists (pass --force to replace it)",
            ),
        });
    }
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Downsampled `t, agent, x.., e_norm, gap, kkt_max` rows.
pub fn write_plot_data(log: &TrajectoryLog, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path)(e.into()))?;
    let r = log.action_dim;
    let mut header = vec!["t".to_string(), "agent".to_string()];
    header.extend((1..=r).map(|k| format!("x{k}")));
    header.extend(["e_norm", "gap", "kkt_max"].map(String::from));
    let csv_err = |e: csv::Error| io_err(path)(e.into());
    w.write_record(&header).map_err(csv_err)?;
    let n = log.records.len();
    let stride = n.div_ceil(PLOT_POINTS).max(1);
    let picks = (0..n).step_by(stride).chain((n > 0 && (n - 1) % stride != 0).then_some(n - 1));
    for k in picks {
        let rec = &log.records[k];
        for (p, a) in rec.agents.iter().enumerate() {
            let mut row = vec![format!("{:?}", rec.t), (p + 1).to_string()];
            row.extend(a.x.iter().map(|v| format!("{v:?}")));
            row.push(format!("{:?}", a.e_norm));
            row.push(rec.gap.map_or_else(String::new, |g| format!("{g:?}")));
            row.push(format!("{:?}", a.kkt_stationarity.max(a.kkt_coupling).max(a.kkt_local)));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(io_err(path))
}

fn write_summary(summary: &RunSummary<'_>, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| io_err(path)(e.into()))?;
    std::fs::write(path, text + "\n").map_err(io_err(path))
}

fn cmd_run(
    path: &Path,
    dir: Option<PathBuf>,
    force: bool,
    with_oracle: bool,
    overrides: &[String],
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<i32> {
    let scenario = Scenario::load(path, overrides)?;
    let dir = dir.unwrap_or_else(|| default_out_root().join(&scenario.name));
    prepare_dir(&dir, force)?;
    let stdout_err = io_err(Path::new("<stdout>"));

    let oracle = if with_oracle {
        match scenario.oracle() {
            Ok(sol) => Some(sol),
            Err(e @ (Error::NonConvergence { .. } | Error::Numerical(_))) => {
                writeln!(err, "warning: {e}; running without a reference").map_err(&stdout_err)?;
                None
            }
            Err(e) => return Err(e),
        }
    } else {
        None
    };

    let started = Instant::now();
    let outcome = run(&scenario.system, &scenario.file.sim, oracle.as_ref().map(|s| &s.x));
    let elapsed = started.elapsed().as_secs_f64();
    let csv = dir.join("trajectory.csv");
    let summary_path = dir.join("certificate.json");
    let code = match outcome {
        Ok(o) => {
            finish_run(&scenario, &o, oracle.as_ref(), &csv, &dir, out)?;
            EXIT_OK
        }
        Err(Error::Divergence {
            time,
            agent,
            field,
            partial,
        }) => {
            write_log(&partial, &csv)?;
            write_plot_data(&partial, &dir.join("plot_data.csv"))?;
            let message = format!("agent {agent} field `{field}` is not finite at t = {time}");
            write_summary(
                &RunSummary {
                    scenario: &scenario.name,
                    status: "diverged",
                    final_time: time,
                    converged_early: false,
                    final_rate: f64::INFINITY,
                    gap: partial.last().and_then(|r| r.gap),
                    certificate: None,
                    divergence: Some(message.clone()),
                    oracle: oracle.as_ref(),
                },
                &summary_path,
            )?;
            writeln!(out, "diverged: {message}").map_err(&stdout_err)?;
            writeln!(out, "partial log written to {}", dir.display()).map_err(&stdout_err)?;
            EXIT_DIVERGENCE
        }
        Err(e) => return Err(e),
    };
    writeln!(err, "elapsed: {elapsed:.2} s").map_err(&stdout_err)?;
    Ok(code)
}

fn finish_run(
    scenario: &Scenario,
    o: &RunOutcome,
    oracle: Option<&OracleSolution>,
    csv: &Path,
    dir: &Path,
    out: &mut dyn Write,
) -> Result<()> {
    write_log(&o.log, csv)?;
    write_plot_data(&o.log, &dir.join("plot_data.csv"))?;
    write_summary(
        &RunSummary {
            scenario: &scenario.name,
            status: "completed",
            final_time: o.final_time,
            converged_early: o.converged_early,
            final_rate: o.final_rate,
            gap: o.gap(),
            certificate: Some(&o.certificate),
            divergence: None,
            oracle,
        },
        &dir.join("certificate.json"),
    )?;
    let w = |out: &mut dyn Write| -> std::io::Result<()> {
        writeln!(out, "scenario: {}", scenario.name)?;
        writeln!(out, "agents: {}", scenario.system.game.num_agents())?;
        writeln!(
            out,
            "final time: {:.3} s{}",
            o.final_time,
            if o.converged_early { " (converged)" } else { "" }
        )?;
        writeln!(out, "final derivative max-norm: {:.3e}", o.final_rate)?;
        print_certificate(&o.certificate, out)?;
        if let Some(g) = o.gap() {
            writeln!(out, "gap |x - x*|: {g:.3e}")?;
        }
        writeln!(out, "output: {}", dir.display())
    };
    w(out).map_err(io_err(Path::new("<stdout>")))
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    alpha: f64,
    beta: f64,
    gamma: f64,
    kappa: f64,
    status: String,
    final_time: Option<f64>,
    converged_early: Option<bool>,
    kkt_max: Option<f64>,
    gap: Option<f64>,
}

fn cmd_sweep(
    path: &Path,
    grid: [Vec<f64>; 4],
    file: Option<PathBuf>,
    force: bool,
    with_oracle: bool,
    overrides: &[String],
    out: &mut dyn Write,
) -> Result<i32> {
    let base = read_scenario(path, overrides)?;
    let name = base.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
    });
    let file = file.unwrap_or_else(|| default_out_root().join(format!("{name}-sweep.csv")));
    if file.exists() && !force {
        return Err(Error::Io {
            path: file,
            source: std::io::Error::new(std::io::ErrorKind::AlreadyExists, "summary exists (pass --force)"),
        });
    }
    let g = base.gains;
    let axis = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
    let [alpha, beta, gamma, kappa] = grid;
    let (alpha, beta, gamma, kappa) = (axis(&alpha, g.alpha), axis(&beta, g.beta), axis(&gamma, g.gamma), axis(&kappa, g.kappa));
    let mut points = Vec::new();
    for &a in &alpha {
        for &b in &beta {
            for &c in &gamma {
                for &k in &kappa {
                    points.push(GainConfig {
                        alpha: a,
                        beta: b,
                        gamma: c,
                        kappa: k,
                        ..g
                    });
                }
            }
        }
    }

    let reference = if with_oracle {
        let s = base.clone().resolve(&name)?;
        Some(s.oracle()?.x)
    } else {
        None
    };
    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|gains| {
            let mut f = base.clone();
            f.gains = *gains;
            let row = |status: String, o: Option<&RunOutcome>| SweepRow {
                alpha: gains.alpha,
                beta: gains.beta,
                gamma: gains.gamma,
                kappa: gains.kappa,
                status,
                final_time: o.map(|o| o.final_time),
                converged_early: o.map(|o| o.converged_early),
                kkt_max: o.map(|o| o.certificate.max_residual()),
                gap: o.and_then(RunOutcome::gap),
            };
            let result = f
                .resolve(&name)
                .and_then(|s| run(&s.system, &s.file.sim, reference.as_ref()));
            match result {
                Ok(o) => row("completed".into(), Some(&o)),
                Err(Error::Divergence { time, .. }) => row(format!("diverged at {time}"), None),
                Err(e) => row(format!("error: {e}"), None),
            }
        })
        .collect();

    if let Some(parent) = file.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut w = csv::Writer::from_path(&file).map_err(|e| io_err(&file)(e.into()))?;
    for r in &rows {
        w.serialize(r).map_err(|e| io_err(&file)(e.into()))?;
    }
    w.flush().map_err(io_err(&file))?;
    let bad = rows.iter().filter(|r| r.status != "completed").count();
    writeln!(out, "{} runs, {} failed; summary in {}", rows.len(), bad, file.display())
        .map_err(io_err(Path::new("<stdout>")))?;
    Ok(if bad == 0 { EXIT_OK } else { EXIT_DIVERGENCE })
}
