//! Scenario files.
//!
//! TOML with an explicit `schema_version`; unknown keys are rejected.
//! Agents and edges are 1-based in files.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::game::generator::random_coupled_toy;
use crate::game::{solve_ne_oracle, Affine, AgentSpec, CoalitionGame, Cost, OracleSolution, QuadraticCost};
use crate::graph::CommTopology;
use crate::plant::{Disturbance, ElModel, PlantState, UnitMass};
use crate::seeker::GainConfig;
use crate::sim::{PlantLayer, SimConfig, System};
use crate::usv::{build_confrontation_game, BattlefieldConfig, UsvModel, UsvParams};
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub game: Option<GameSection>,
    #[serde(default)]
    pub usv_scenario: Option<UsvSection>,
    pub topology: TopologySection,
    #[serde(default)]
    pub gains: GainConfig,
    #[serde(default)]
    pub plant_models: Option<PlantSection>,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub oracle: OracleSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameSection {
    /// Builds the seeded random 2x2 coupled toy instead of reading `agents`.
    #[serde(default)]
    pub random_toy_seed: Option<u64>,
    #[serde(default)]
    pub action_dim: Option<usize>,
    #[serde(default)]
    pub coalition_sizes: Vec<usize>,
    #[serde(default)]
    pub agents: Vec<AgentSection>,
}

/// `J = 1/2 x^T H x + q^T x + c` over the full stacked action, local rows
/// `B x_ij <= b` and coupling rows `G x_ij` summed against `g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    pub hessian: Vec<Vec<f64>>,
    pub linear: Vec<f64>,
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub local_matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub local_bound: Vec<f64>,
    #[serde(default)]
    pub coupling_matrix: Vec<Vec<f64>>,
    #[serde(default)]
    pub coupling_bound: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UsvSection {
    pub battlefield: BattlefieldConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySection {
    /// Undirected edges per coalition, member indices 1-based.
    pub intra_edges: Vec<Vec<[usize; 2]>>,
    /// Directed `[from, to]` edges over global agent numbers (1-based,
    /// coalitions in order).
    pub global_edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    UnitMass,
    Usv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub model: ModelKind,
    /// Unit-mass plants only.
    #[serde(default = "one")]
    pub mass: f64,
    /// Unit-mass plants only: constant bias force per coordinate.
    #[serde(default)]
    pub bias: Vec<f64>,
    #[serde(default)]
    pub usv_params: Option<UsvParams>,
    /// Same disturbance for every agent. USV plants default to the
    /// reference sinusoids, others to none.
    #[serde(default)]
    pub disturbance: Option<Disturbance>,
    /// Per agent; defaults to the battlefield poses for USV scenarios and
    /// zero otherwise.
    #[serde(default)]
    pub initial_positions: Option<Vec<Vec<f64>>>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 2_000_000,
        }
    }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Parses a scalar TOML value, falling back to a bare string.
fn override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `key.path=value` to a parsed document.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override key `{key}` is malformed")));
    }
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), override_value(raw.trim()));
    Ok(())
}

pub fn parse_scenario(text: &str, path: &Path, overrides: &[String]) -> Result<ScenarioFile> {
    let mut doc: toml::Table = toml::from_str(text).map_err(|e| parse_err(path, e.to_string()))?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let file: ScenarioFile = doc.try_into().map_err(|e: toml::de::Error| parse_err(path, e.to_string()))?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(parse_err(
            path,
            format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", file.schema_version),
        ));
    }
    Ok(file)
}

pub fn read_scenario(path: &Path, overrides: &[String]) -> Result<ScenarioFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text, path, overrides)
}

fn matrix(rows: &[Vec<f64>], cols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension(format!("{what}: every row needs {cols} entries")));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

fn affine(m: &[Vec<f64>], b: &[f64], cols: usize, what: &str) -> Result<Affine> {
    if m.is_empty() && b.is_empty() {
        return Ok(Affine::empty(cols));
    }
    Affine::new(matrix(m, cols, what)?, DVector::from_row_slice(b))
}

impl GameSection {
    pub fn build(&self) -> Result<CoalitionGame> {
        if let Some(seed) = self.random_toy_seed {
            if !self.agents.is_empty() {
                return Err(Error::Config("give either random_toy_seed or agents, not both".into()));
            }
            return Ok(random_coupled_toy(seed)?.0);
        }
        let r = self
            .action_dim
            .ok_or_else(|| Error::Config("game.action_dim is required".into()))?;
        let dim = r * self.coalition_sizes.iter().sum::<usize>();
        let mut agents = Vec::with_capacity(self.agents.len());
        for (p, a) in self.agents.iter().enumerate() {
            let who = format!("agent {}", p + 1);
            if a.hessian.len() != dim || a.linear.len() != dim {
                return Err(Error::Dimension(format!("{who}: cost must be over all {dim} coordinates")));
            }
            let cost = QuadraticCost::new(
                matrix(&a.hessian, dim, &who)?,
                DVector::from_row_slice(&a.linear),
                a.constant,
            )?;
            agents.push(AgentSpec {
                cost: Cost::Quadratic(cost),
                local: affine(&a.local_matrix, &a.local_bound, r, &who)?,
                coupling: affine(&a.coupling_matrix, &a.coupling_bound, r, &who)?,
            });
        }
        CoalitionGame::new(r, self.coalition_sizes.clone(), agents)
    }
}

impl TopologySection {
    pub fn build(&self, sizes: &[usize]) -> Result<CommTopology> {
        let zero = |e: &[usize; 2]| -> Result<(usize, usize)> {
            if e[0] == 0 || e[1] == 0 {
                return Err(Error::InvalidGraph("edge endpoints are 1-based".into()));
            }
            Ok((e[0] - 1, e[1] - 1))
        };
        let intra = self
            .intra_edges
            .iter()
            .map(|list| list.iter().map(zero).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let global = self.global_edges.iter().map(zero).collect::<Result<Vec<_>>>()?;
        CommTopology::from_edges(sizes, &intra, &global)
    }
}

/// A scenario resolved into runnable objects.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub file: ScenarioFile,
    pub battlefield: Option<BattlefieldConfig>,
    pub system: System,
}

impl ScenarioFile {
    pub fn build_game(&self) -> Result<(CoalitionGame, Option<BattlefieldConfig>)> {
        match (&self.game, &self.usv_scenario) {
            (Some(g), None) => Ok((g.build()?, None)),
            (None, Some(u)) => Ok((build_confrontation_game(&u.battlefield)?, Some(u.battlefield.clone()))),
            _ => Err(Error::Config("exactly one of [game] and [usv_scenario] is required".into())),
        }
    }

    fn plant_layer(&self, game: &CoalitionGame, battlefield: Option<&BattlefieldConfig>) -> Result<Option<PlantLayer>> {
        let Some(sec) = &self.plant_models else {
            return Ok(None);
        };
        let n = game.num_agents();
        let r = game.action_dim();
        let model: Arc<dyn ElModel> = match sec.model {
            ModelKind::UnitMass => {
                let bias = if sec.bias.is_empty() {
                    DVector::zeros(r)
                } else {
                    DVector::from_row_slice(&sec.bias)
                };
                Arc::new(UnitMass::with_params(r, sec.mass, bias)?)
            }
            ModelKind::Usv => {
                if r != 3 {
                    return Err(Error::Config("usv plants need a 3-dimensional action".into()));
                }
                Arc::new(UsvModel::new(sec.usv_params.unwrap_or_default())?)
            }
        };
        let disturbance = match (&sec.disturbance, sec.model) {
            (Some(d), _) => d.clone(),
            (None, ModelKind::Usv) => Disturbance::surface_vehicle_default(),
            (None, ModelKind::UnitMass) => Disturbance::none(r),
        };
        let positions: Vec<DVector<f64>> = match (&sec.initial_positions, battlefield) {
            (Some(p), _) => {
                if p.len() != n || p.iter().any(|v| v.len() != r) {
                    return Err(Error::Dimension(format!("initial_positions needs {n} entries of length {r}")));
                }
                p.iter().map(|v| DVector::from_row_slice(v)).collect()
            }
            (None, Some(b)) => b.initial_poses(),
            (None, None) => vec![DVector::zeros(r); n],
        };
        Ok(Some(PlantLayer {
            models: vec![model.clone(); n],
            disturbances: vec![disturbance; n],
            initial: positions
                .into_iter()
                .map(|x| PlantState::at_rest(x, model.param_count()))
                .collect(),
        }))
    }

    pub fn resolve(self, fallback_name: &str) -> Result<Scenario> {
        self.sim.validate()?;
        let (game, battlefield) = self.build_game()?;
        let topology = self.topology.build(game.coalition_sizes())?;
        let plants = self.plant_layer(&game, battlefield.as_ref())?;
        let system = System::new(game, topology, self.gains, plants)?;
        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| fallback_name.to_string()),
            file: self,
            battlefield,
            system,
        })
    }
}

impl Scenario {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let stem = path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned());
        read_scenario(path, overrides)?.resolve(&stem)
    }

    pub fn oracle(&self) -> Result<OracleSolution> {
        solve_ne_oracle(&self.system.game, self.file.oracle.tol, self.file.oracle.max_iter)
    }
}

/// Default output root: `$COALITION_NASH_OUT` or `runs`.
pub fn default_out_root() -> PathBuf {
    std::env::var_os("COALITION_NASH_OUT").map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}
