//! Coalition games.
//!
//! `n` agents are partitioned into coalitions of sizes `m_1, ..., m_N`;
//! each agent picks an action in `R^r` and carries its own cost over the
//! full stacked action `x in R^{n r}`. A coalition minimizes the average
//! of its members' costs over its members' actions, subject to per-agent
//! box-type constraints `B x_ij <= b` and a coalition-wide budget
//! `sum_j G_ij x_ij <= sum_j g_ij`.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub mod generator;
mod kkt;
mod oracle;
mod projection;
pub mod validate;

pub use kkt::{kkt_certificate, KktCertificate};
pub use oracle::{solve_ne_oracle, OracleSolution};
pub use projection::{project_nonneg, project_nonpos};

/// `J(x) = 1/2 x^T H x + q^T x + c` with `H` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    h: DMatrix<f64>,
    q: DVector<f64>,
    c: f64,
}

impl QuadraticCost {
    /// `h` is symmetrized as `(h + h^T) / 2`.
    pub fn new(h: DMatrix<f64>, q: DVector<f64>, c: f64) -> Result<Self> {
        if !h.is_square() || h.nrows() != q.len() {
            return Err(Error::Dimension(format!(
                "quadratic cost: H is {}x{}, q has {} entries",
                h.nrows(),
                h.ncols(),
                q.len()
            )));
        }
        let h = (&h + h.transpose()) * 0.5;
        Ok(Self { h, q, c })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn q(&self) -> &DVector<f64> {
        &self.q
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.q.dot(x) + self.c
    }

    pub fn gradient_rows(&self, x: &DVector<f64>, rows: Range<usize>) -> DVector<f64> {
        let len = rows.len();
        self.h.rows(rows.start, len) * x + self.q.rows(rows.start, len)
    }
}

pub type CostFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;

/// Black-box cost differentiated by central differences.
#[derive(Clone)]
pub struct SmoothCost {
    f: CostFn,
    dim: usize,
    label: String,
}

impl SmoothCost {
    pub fn new(dim: usize, label: impl Into<String>, f: CostFn) -> Self {
        Self {
            f,
            dim,
            label: label.into(),
        }
    }
}

impl fmt::Debug for SmoothCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothCost")
            .field("dim", &self.dim)
            .field("label", &self.label)
            .finish()
    }
}

/// Relative central-difference step.
pub(crate) fn fd_step(v: f64) -> f64 {
    1e-6 * v.abs().max(1.0)
}

#[derive(Debug, Clone)]
pub enum Cost {
    Quadratic(QuadraticCost),
    Smooth(SmoothCost),
}

impl Cost {
    pub fn dim(&self) -> usize {
        match self {
            Cost::Quadratic(q) => q.dim(),
            Cost::Smooth(s) => s.dim,
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64> {
        let v = match self {
            Cost::Quadratic(q) => q.value(x),
            Cost::Smooth(s) => (s.f)(x),
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation(format!("cost is not finite ({v})")))
        }
    }

    /// Gradient entries for the coordinates in `rows`.
    pub fn gradient_rows(&self, x: &DVector<f64>, rows: Range<usize>) -> Result<DVector<f64>> {
        match self {
            Cost::Quadratic(q) => Ok(q.gradient_rows(x, rows)),
            Cost::Smooth(_) => {
                let mut out = DVector::zeros(rows.len());
                let mut probe = x.clone();
                for (slot, k) in rows.enumerate() {
                    let h = fd_step(x[k]);
                    probe[k] = x[k] + h;
                    let up = self.value(&probe)?;
                    probe[k] = x[k] - h;
                    let down = self.value(&probe)?;
                    probe[k] = x[k];
                    out[slot] = (up - down) / (2.0 * h);
                }
                Ok(out)
            }
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.gradient_rows(x, 0..x.len())
    }
}

/// `matrix * y <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub matrix: DMatrix<f64>,
    pub bound: DVector<f64>,
}

impl Affine {
    pub fn new(matrix: DMatrix<f64>, bound: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != bound.len() {
            return Err(Error::Dimension(format!(
                "constraint has {} rows but {} bounds",
                matrix.nrows(),
                bound.len()
            )));
        }
        Ok(Self { matrix, bound })
    }

    pub fn empty(cols: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(0, cols),
            bound: DVector::zeros(0),
        }
    }

    pub fn rows(&self) -> usize {
        self.bound.len()
    }
}

#[derive(Debug, Clone)]
pub struct AgentSpec {
    pub cost: Cost,
    pub local: Affine,
    pub coupling: Affine,
}

#[derive(Debug, Clone)]
pub struct CoalitionGame {
    r: usize,
    sizes: Vec<usize>,
    starts: Vec<usize>,
    coalition_of: Vec<usize>,
    agents: Vec<AgentSpec>,
    coupling_rows: Vec<usize>,
}

impl CoalitionGame {
    /// `agents` is in global order: coalition 1's members first.
    pub fn new(action_dim: usize, sizes: Vec<usize>, agents: Vec<AgentSpec>) -> Result<Self> {
        if action_dim == 0 {
            return Err(Error::Dimension("action dimension must be positive".into()));
        }
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::Dimension("every coalition needs at least one agent".into()));
        }
        let n: usize = sizes.iter().sum();
        if agents.len() != n {
            return Err(Error::Dimension(format!(
                "coalition sizes sum to {n} but {} agents were given",
                agents.len()
            )));
        }
        let mut starts = Vec::with_capacity(sizes.len());
        let mut coalition_of = Vec::with_capacity(n);
        let mut acc = 0;
        for (i, &m) in sizes.iter().enumerate() {
            starts.push(acc);
            coalition_of.extend(std::iter::repeat_n(i, m));
            acc += m;
        }
        let mut coupling_rows = Vec::with_capacity(sizes.len());
        for (i, &m) in sizes.iter().enumerate() {
            let members = &agents[starts[i]..starts[i] + m];
            let p = members[0].coupling.rows();
            for (j, a) in members.iter().enumerate() {
                let who = format!("agent ({}, {})", i + 1, j + 1);
                if a.cost.dim() != n * action_dim {
                    return Err(Error::Dimension(format!(
                        "{who}: cost acts on {} coordinates, expected {}",
                        a.cost.dim(),
                        n * action_dim
                    )));
                }
                if a.local.matrix.ncols() != action_dim || a.coupling.matrix.ncols() != action_dim {
                    return Err(Error::Dimension(format!(
                        "{who}: constraint matrices must have {action_dim} columns"
                    )));
                }
                if a.local.matrix.nrows() != a.local.bound.len()
                    || a.coupling.matrix.nrows() != a.coupling.bound.len()
                {
                    return Err(Error::Dimension(format!("{who}: constraint rows and bounds differ")));
                }
                if a.coupling.rows() != p {
                    return Err(Error::Dimension(format!(
                        "{who}: {} coupling rows but coalition uses {p}",
                        a.coupling.rows()
                    )));
                }
            }
            coupling_rows.push(p);
        }
        Ok(Self {
            r: action_dim,
            sizes,
            starts,
            coalition_of,
            agents,
            coupling_rows,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.r
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn num_coalitions(&self) -> usize {
        self.sizes.len()
    }

    pub fn dim(&self) -> usize {
        self.r * self.agents.len()
    }

    pub fn coalition_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn coalition_size(&self, i: usize) -> usize {
        self.sizes[i]
    }

    pub fn coupling_rows(&self, i: usize) -> usize {
        self.coupling_rows[i]
    }

    pub fn agents(&self) -> &[AgentSpec] {
        &self.agents
    }

    pub fn agent(&self, p: usize) -> &AgentSpec {
        &self.agents[p]
    }

    /// Global index of member `j` of coalition `i` (both 0-based).
    pub fn global_index(&self, i: usize, j: usize) -> Result<usize> {
        match self.sizes.get(i) {
            None => Err(Error::Lookup(format!("no coalition {}", i + 1))),
            Some(&m) if j >= m => Err(Error::Lookup(format!(
                "coalition {} has {m} agents, asked for {}",
                i + 1,
                j + 1
            ))),
            Some(_) => Ok(self.starts[i] + j),
        }
    }

    /// Inverse of [`global_index`](Self::global_index).
    pub fn agent_id(&self, p: usize) -> (usize, usize) {
        let i = self.coalition_of[p];
        (i, p - self.starts[i])
    }

    pub fn coalition_of(&self, p: usize) -> usize {
        self.coalition_of[p]
    }

    pub fn coalition_agents(&self, i: usize) -> Range<usize> {
        self.starts[i]..self.starts[i] + self.sizes[i]
    }

    /// Coordinates of agent `p` in the stacked action.
    pub fn action_range(&self, p: usize) -> Range<usize> {
        p * self.r..(p + 1) * self.r
    }

    /// Coordinates of coalition `i`'s block `x_i` in the stacked action.
    pub fn coalition_range(&self, i: usize) -> Range<usize> {
        let a = self.coalition_agents(i);
        a.start * self.r..a.end * self.r
    }

    pub fn is_quadratic(&self) -> bool {
        self.agents.iter().all(|a| matches!(a.cost, Cost::Quadratic(_)))
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "stacked action has {} entries, expected {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// `J_i(x) = (1/m_i) sum_j J_ij(x)`.
    pub fn coalition_cost(&self, i: usize, x: &DVector<f64>) -> Result<f64> {
        if i >= self.sizes.len() {
            return Err(Error::Lookup(format!("no coalition {}", i + 1)));
        }
        self.check_dim(x)?;
        let mut sum = 0.0;
        for p in self.coalition_agents(i) {
            sum += self.agents[p].cost.value(x)?;
        }
        Ok(sum / self.sizes[i] as f64)
    }

    /// `col{grad_{x_1} J_1(x), ..., grad_{x_N} J_N(x)}`.
    pub fn pseudogradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.num_coalitions() {
            let range = self.coalition_range(i);
            let mut acc = DVector::zeros(range.len());
            for p in self.coalition_agents(i) {
                acc += self.agents[p].cost.gradient_rows(x, range.clone())?;
            }
            acc /= self.sizes[i] as f64;
            out.rows_mut(range.start, range.len()).copy_from(&acc);
        }
        Ok(out)
    }

    /// Gradient of agent `(i, j)`'s own cost with respect to `x_ik`.
    pub fn partial_gradient(&self, i: usize, j: usize, k: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.global_index(i, j)?;
        let q = self.global_index(i, k)?;
        self.check_dim(x)?;
        self.agents[p].cost.gradient_rows(x, self.action_range(q))
    }

    /// Gradient of agent `p`'s own cost with respect to its whole coalition
    /// block, `m_i r` entries.
    pub fn own_coalition_gradient(&self, p: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.agents[p]
            .cost
            .gradient_rows(x, self.coalition_range(self.coalition_of[p]))
    }

    /// `sum_j (G_ij x_ij - g_ij)` for coalition `i`.
    pub fn coupling_residual(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.coupling_rows[i]);
        for p in self.coalition_agents(i) {
            let a = &self.agents[p].coupling;
            out += &a.matrix * x.rows(p * self.r, self.r) - &a.bound;
        }
        out
    }

    /// `B_p x_p - b_p`.
    pub fn local_residual(&self, p: usize, x: &DVector<f64>) -> DVector<f64> {
        let a = &self.agents[p].local;
        &a.matrix * x.rows(p * self.r, self.r) - &a.bound
    }

    /// Jacobian of the pseudogradient. Exact for quadratic costs, central
    /// differences of the gradient otherwise.
    pub fn pseudogradient_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(x)?;
        let d = self.dim();
        let mut jac = DMatrix::zeros(d, d);
        if self.is_quadratic() {
            for i in 0..self.num_coalitions() {
                let range = self.coalition_range(i);
                let mut block = DMatrix::zeros(range.len(), d);
                for p in self.coalition_agents(i) {
                    if let Cost::Quadratic(q) = &self.agents[p].cost {
                        block += q.h().rows(range.start, range.len());
                    }
                }
                block /= self.sizes[i] as f64;
                jac.rows_mut(range.start, range.len()).copy_from(&block);
            }
            return Ok(jac);
        }
        let mut probe = x.clone();
        for k in 0..d {
            let h = fd_step(x[k]);
            probe[k] = x[k] + h;
            let up = self.pseudogradient(&probe)?;
            probe[k] = x[k] - h;
            let down = self.pseudogradient(&probe)?;
            probe[k] = x[k];
            jac.set_column(k, &((up - down) / (2.0 * h)));
        }
        Ok(jac)
    }
}
