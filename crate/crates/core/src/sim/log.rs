use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::SimConfig;
use crate::game::KktCertificate;
use crate::{Error, Result};

/// One agent at one logged instant. Without a plant layer `x` and `xdot`
/// are the decision layer's `eta` and `theta` and `e_norm`, `d_hat` are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub x: Vec<f64>,
    pub xdot: Vec<f64>,
    pub eta: Vec<f64>,
    pub theta: Vec<f64>,
    pub e_norm: f64,
    pub lambda_plus: Vec<f64>,
    pub omega: Vec<f64>,
    pub d_hat: f64,
    pub kkt_stationarity: f64,
    pub kkt_coupling: f64,
    pub kkt_local: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub agents: Vec<AgentRecord>,
    /// `|x - x*|` when a reference equilibrium was supplied.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub action_dim: usize,
    pub config: Option<SimConfig>,
    pub records: Vec<Record>,
    pub certificate: Option<KktCertificate>,
}

impl TrajectoryLog {
    pub fn new(action_dim: usize, config: Option<SimConfig>) -> Self {
        Self {
            action_dim,
            config,
            records: Vec::new(),
            certificate: None,
        }
    }

    pub fn last(&self) -> Option<&Record> {
        self.records.last()
    }

    /// Widest multiplier blocks over all records; narrower agents leave
    /// trailing cells empty.
    fn widths(&self) -> (usize, usize) {
        let agents = self.records.iter().flat_map(|r| &r.agents);
        let lam = agents.clone().map(|a| a.lambda_plus.len()).max().unwrap_or(0);
        let om = agents.map(|a| a.omega.len()).max().unwrap_or(0);
        (lam, om)
    }

    pub fn header(&self) -> Vec<String> {
        let (lam, om) = self.widths();
        let r = self.action_dim;
        let mut h = vec!["t".to_string(), "agent".to_string()];
        fn series(name: &'static str, k: usize) -> impl Iterator<Item = String> {
            (1..=k).map(move |i| format!("{name}{i}"))
        }
        h.extend(series("x", r));
        h.extend(series("xdot", r));
        h.extend(series("eta", r));
        h.push("e_norm".into());
        h.extend(series("lambda_plus", lam));
        h.extend(series("omega", om));
        for c in ["d_hat", "kkt_stationarity", "kkt_coupling", "kkt_local"] {
            h.push(c.into());
        }
        h
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    action_dim: usize,
    records: usize,
    final_time: Option<f64>,
    config: &'a Option<SimConfig>,
    certificate: &'a Option<KktCertificate>,
    gap: Vec<(f64, f64)>,
}

fn num(v: f64) -> String {
    // Shortest representation that parses back to the same bits.
    format!("{v:?}")
}

fn padded(vals: &[f64], width: usize) -> impl Iterator<Item = String> + '_ {
    vals.iter().map(|&v| num(v)).chain(std::iter::repeat_n(String::new(), width - vals.len()))
}

/// Companion JSON path of a CSV log.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes the CSV log and its JSON sidecar next to it.
pub fn write_log(log: &TrajectoryLog, path: &Path) -> Result<()> {
    let (lam, om) = log.widths();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    w.write_record(log.header()).map_err(csv_err)?;
    for rec in &log.records {
        for (p, a) in rec.agents.iter().enumerate() {
            let mut row = vec![num(rec.t), (p + 1).to_string()];
            row.extend(a.x.iter().chain(&a.xdot).chain(&a.eta).map(|&v| num(v)));
            row.push(num(a.e_norm));
            row.extend(padded(&a.lambda_plus, lam));
            row.extend(padded(&a.omega, om));
            row.extend([a.d_hat, a.kkt_stationarity, a.kkt_coupling, a.kkt_local].map(num));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;

    let side = sidecar_path(path);
    let sidecar = Sidecar {
        action_dim: log.action_dim,
        records: log.records.len(),
        final_time: log.last().map(|r| r.t),
        config: &log.config,
        certificate: &log.certificate,
        gap: log.records.iter().filter_map(|r| r.gap.map(|g| (r.t, g))).collect(),
    };
    let file = File::create(&side).map_err(|e| Error::io(&side, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &sidecar).map_err(|e| Error::io(&side, e.into()))?;
    out.write_all(b"\n").map_err(|e| Error::io(&side, e))?;
    Ok(())
}

/// Parses a CSV log written by [`write_log`]. Configuration, certificate
/// and gaps live in the sidecar and are not restored.
pub fn read_log(path: &Path) -> Result<TrajectoryLog> {
    let parse_err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut rd = csv::Reader::from_path(path).map_err(|e| parse_err(e.to_string()))?;
    let header: Vec<String> = rd
        .headers()
        .map_err(|e| parse_err(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let count = |prefix: &str| {
        header
            .iter()
            .filter(|h| h.strip_prefix(prefix).is_some_and(|rest| rest.parse::<usize>().is_ok()))
            .count()
    };
    let (r, lam, om) = (count("x"), count("lambda_plus"), count("omega"));
    let expected = 2 + 3 * r + 1 + lam + om + 4;
    if header.len() != expected || header[0] != "t" || header[1] != "agent" {
        return Err(parse_err("unexpected column layout".into()));
    }
    let mut log = TrajectoryLog::new(r, None);
    for (line, row) in rd.records().enumerate() {
        let row = row.map_err(|e| parse_err(e.to_string()))?;
        let cell = |k: usize| -> Result<Option<f64>> {
            let s = &row[k];
            if s.is_empty() {
                return Ok(None);
            }
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| parse_err(format!("row {}: bad number `{s}` in column {}", line + 2, header[k])))
        };
        let req = |k: usize| cell(k)?.ok_or_else(|| parse_err(format!("row {}: empty {}", line + 2, header[k])));
        let block = |start: usize, len: usize| -> Result<Vec<f64>> {
            let mut v = Vec::new();
            for k in start..start + len {
                if let Some(x) = cell(k)? {
                    v.push(x);
                }
            }
            Ok(v)
        };
        let t = req(0)?;
        let agent: usize = row[1]
            .parse()
            .map_err(|_| parse_err(format!("row {}: bad agent index", line + 2)))?;
        let mut k = 2;
        let x = block(k, r)?;
        k += r;
        let xdot = block(k, r)?;
        k += r;
        let eta = block(k, r)?;
        k += r;
        let e_norm = req(k)?;
        k += 1;
        let lambda_plus = block(k, lam)?;
        k += lam;
        let omega = block(k, om)?;
        k += om;
        let rec = AgentRecord {
            x,
            xdot,
            eta,
            theta: Vec::new(),
            e_norm,
            lambda_plus,
            omega,
            d_hat: req(k)?,
            kkt_stationarity: req(k + 1)?,
            kkt_coupling: req(k + 2)?,
            kkt_local: req(k + 3)?,
        };
        let new_record = agent == 1 || log.records.last().is_none_or(|last| last.t != t);
        if new_record {
            log.records.push(Record {
                t,
                agents: Vec::new(),
                gap: None,
            });
        }
        log.records.last_mut().expect("pushed").agents.push(rec);
    }
    Ok(log)
}

pub(crate) fn dvec(v: &DVector<f64>) -> Vec<f64> {
    v.as_slice().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agent(seed: f64) -> AgentRecord {
        AgentRecord {
            x: vec![seed, 0.1 + seed],
            xdot: vec![1.0 / 3.0, -2.5],
            eta: vec![std::f64::consts::PI, 1e-300],
            theta: Vec::new(),
            e_norm: 0.0,
            lambda_plus: vec![0.7],
            omega: vec![0.0, 1.0 / 7.0],
            d_hat: 2.0,
            kkt_stationarity: 1e-9,
            kkt_coupling: 0.0,
            kkt_local: 3.3e-7,
        }
    }

    #[test]
    fn empty_log_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        write_log(&TrajectoryLog::new(2, None), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(
            text.trim_end(),
            "t,agent,x1,x2,xdot1,xdot2,eta1,eta2,e_norm,d_hat,kkt_stationarity,kkt_coupling,kkt_local"
        );
        assert!(sidecar_path(&path).exists());
    }

    #[test]
    fn two_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("log.csv");
        let mut log = TrajectoryLog::new(2, None);
        for (t, s) in [(0.0, -1.25), (0.1, 0.1 + 0.2)] {
            log.records.push(Record {
                t,
                agents: vec![agent(s)],
                gap: None,
            });
        }
        write_log(&log, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().contains("lambda_plus1,omega1,omega2"));
        let back = read_log(&path).unwrap();
        assert_eq!(back.records.len(), 2);
        for (a, b) in log.records.iter().zip(&back.records) {
            assert_eq!(a.t, b.t);
            let (x, y) = (&a.agents[0], &b.agents[0]);
            assert_eq!(x.x, y.x);
            assert_eq!(x.xdot, y.xdot);
            assert_eq!(x.eta, y.eta);
            assert_eq!(x.omega, y.omega);
            assert_eq!(x.kkt_local, y.kkt_local);
        }
    }

    #[test]
    fn io_errors_carry_the_path() {
        let path = Path::new("/nonexistent-dir/log.csv");
        match write_log(&TrajectoryLog::new(1, None), path) {
            Err(Error::Io { path: p, .. }) => assert_eq!(p, path),
            other => panic!("unexpected {other:?}"),
        }
    }
}
