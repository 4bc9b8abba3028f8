//! Communication topologies.
//!
//! Each coalition talks over an undirected graph `G_i`; every agent
//! additionally listens to a global directed graph used only to estimate
//! the other agents' actions. Agents are numbered globally in coalition
//! order, so agent `j` of coalition `i` is `sum_{l<i} m_l + j`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

const U_BASIS_SEED: u64 = 0x5eed_0001;

/// `D - A` with `D` the row-degree diagonal.
pub fn laplacian(adjacency: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !adjacency.is_square() {
        return Err(Error::Dimension(format!(
            "adjacency must be square, got {}x{}",
            adjacency.nrows(),
            adjacency.ncols()
        )));
    }
    let n = adjacency.nrows();
    for i in 0..n {
        if adjacency[(i, i)] != 0.0 {
            return Err(Error::InvalidGraph(format!("self-loop at node {}", i + 1)));
        }
    }
    let mut l = -adjacency.clone();
    for i in 0..n {
        l[(i, i)] = adjacency.row(i).sum();
    }
    Ok(l)
}

#[derive(Debug, Clone)]
pub struct CommTopology {
    intra_adjacency: Vec<DMatrix<f64>>,
    global_adjacency: DMatrix<f64>,
    intra_laplacian: Vec<DMatrix<f64>>,
    global_laplacian: DMatrix<f64>,
    intra_neighbors: Vec<Vec<Vec<usize>>>,
    global_in_neighbors: Vec<Vec<usize>>,
}

impl CommTopology {
    /// Builds a topology from dense 0/1 adjacency matrices.
    ///
    /// `global[(p, q)] = 1` means agent `p` receives agent `q`'s estimates.
    /// Connectivity is not enforced here; see [`check_connectivity`].
    pub fn new(intra: Vec<DMatrix<f64>>, global: DMatrix<f64>) -> Result<Self> {
        let total: usize = intra.iter().map(|a| a.nrows()).sum();
        if global.nrows() != total || global.ncols() != total {
            return Err(Error::Dimension(format!(
                "global adjacency is {}x{} but coalitions hold {} agents",
                global.nrows(),
                global.ncols(),
                total
            )));
        }
        for (i, a) in intra.iter().enumerate() {
            check_binary(a).map_err(|m| Error::InvalidGraph(format!("coalition {}: {m}", i + 1)))?;
        }
        check_binary(&global).map_err(|m| Error::InvalidGraph(format!("global graph: {m}")))?;

        let intra_laplacian = intra.iter().map(laplacian).collect::<Result<Vec<_>>>()?;
        let global_laplacian = laplacian(&global)?;
        let intra_neighbors = intra.iter().map(neighbor_lists).collect();
        let global_in_neighbors = neighbor_lists(&global);
        Ok(Self {
            intra_adjacency: intra,
            global_adjacency: global,
            intra_laplacian,
            global_laplacian,
            intra_neighbors,
            global_in_neighbors,
        })
    }

    /// Builds a topology from 0-based edge lists.
    ///
    /// Intra-coalition edges are undirected. A global edge `(from, to)` means
    /// information flows from `from` to `to`.
    pub fn from_edges(
        coalition_sizes: &[usize],
        intra_edges: &[Vec<(usize, usize)>],
        global_edges: &[(usize, usize)],
    ) -> Result<Self> {
        if intra_edges.len() != coalition_sizes.len() {
            return Err(Error::Dimension(format!(
                "{} coalitions but {} intra-coalition edge lists",
                coalition_sizes.len(),
                intra_edges.len()
            )));
        }
        let mut intra = Vec::with_capacity(coalition_sizes.len());
        for (i, (&m, edges)) in coalition_sizes.iter().zip(intra_edges).enumerate() {
            let mut a = DMatrix::zeros(m, m);
            for &(u, v) in edges {
                if u >= m || v >= m {
                    return Err(Error::InvalidGraph(format!(
                        "coalition {}: edge ({}, {}) out of range for {m} agents",
                        i + 1,
                        u + 1,
                        v + 1
                    )));
                }
                if u == v {
                    return Err(Error::InvalidGraph(format!("coalition {}: self-loop at {}", i + 1, u + 1)));
                }
                a[(u, v)] = 1.0;
                a[(v, u)] = 1.0;
            }
            intra.push(a);
        }
        let n: usize = coalition_sizes.iter().sum();
        let mut global = DMatrix::zeros(n, n);
        for &(from, to) in global_edges {
            if from >= n || to >= n {
                return Err(Error::InvalidGraph(format!(
                    "global edge ({}, {}) out of range for {n} agents",
                    from + 1,
                    to + 1
                )));
            }
            if from == to {
                return Err(Error::InvalidGraph(format!("global self-loop at {}", from + 1)));
            }
            global[(to, from)] = 1.0;
        }
        Self::new(intra, global)
    }

    pub fn num_coalitions(&self) -> usize {
        self.intra_adjacency.len()
    }

    pub fn num_agents(&self) -> usize {
        self.global_adjacency.nrows()
    }

    pub fn coalition_sizes(&self) -> Vec<usize> {
        self.intra_adjacency.iter().map(|a| a.nrows()).collect()
    }

    pub fn intra_adjacency(&self, i: usize) -> &DMatrix<f64> {
        &self.intra_adjacency[i]
    }

    pub fn intra_laplacian(&self, i: usize) -> &DMatrix<f64> {
        &self.intra_laplacian[i]
    }

    pub fn global_adjacency(&self) -> &DMatrix<f64> {
        &self.global_adjacency
    }

    pub fn global_laplacian(&self) -> &DMatrix<f64> {
        &self.global_laplacian
    }

    /// Members of coalition `i` adjacent to member `j` (coalition-local indices).
    pub fn intra_neighbors(&self, i: usize, j: usize) -> &[usize] {
        &self.intra_neighbors[i][j]
    }

    /// Agents that agent `p` listens to on the global graph.
    pub fn global_in_neighbors(&self, p: usize) -> &[usize] {
        &self.global_in_neighbors[p]
    }
}

fn check_binary(a: &DMatrix<f64>) -> std::result::Result<(), String> {
    if !a.is_square() {
        return Err(format!("adjacency must be square, got {}x{}", a.nrows(), a.ncols()));
    }
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            let v = a[(r, c)];
            if v != 0.0 && v != 1.0 {
                return Err(format!("entry ({}, {}) = {v} is not 0 or 1", r + 1, c + 1));
            }
        }
    }
    Ok(())
}

fn neighbor_lists(a: &DMatrix<f64>) -> Vec<Vec<usize>> {
    (0..a.nrows())
        .map(|p| (0..a.ncols()).filter(|&q| a[(p, q)] != 0.0).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoalitionConnectivity {
    pub undirected: bool,
    pub connected: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectivityReport {
    pub coalitions: Vec<CoalitionConnectivity>,
    pub global_strongly_connected: bool,
}

impl ConnectivityReport {
    pub fn is_ok(&self) -> bool {
        self.global_strongly_connected && self.coalitions.iter().all(|c| c.undirected && c.connected)
    }

    /// Human-readable list of violated conditions (1-based coalition ids).
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, c) in self.coalitions.iter().enumerate() {
            if !c.undirected {
                out.push(format!("coalition {} graph is not undirected", i + 1));
            }
            if !c.connected {
                out.push(format!("coalition {} graph is not connected", i + 1));
            }
        }
        if !self.global_strongly_connected {
            out.push("global graph is not strongly connected".to_string());
        }
        out
    }
}

/// Boolean transitive closure (Warshall) of a directed adjacency pattern.
pub fn reachability(adjacency: &DMatrix<f64>) -> Vec<Vec<bool>> {
    let n = adjacency.nrows();
    let mut reach: Vec<Vec<bool>> = (0..n)
        .map(|p| (0..n).map(|q| p == q || adjacency[(p, q)] != 0.0).collect())
        .collect();
    for k in 0..n {
        for p in 0..n {
            if reach[p][k] {
                for q in 0..n {
                    if reach[k][q] {
                        reach[p][q] = true;
                    }
                }
            }
        }
    }
    reach
}

pub fn check_connectivity(topology: &CommTopology) -> ConnectivityReport {
    let coalitions = topology
        .intra_adjacency
        .iter()
        .map(|a| CoalitionConnectivity {
            undirected: a == &a.transpose(),
            connected: reachability(a).iter().all(|row| row.iter().all(|&b| b)),
        })
        .collect();
    let global_strongly_connected = reachability(&topology.global_adjacency)
        .iter()
        .all(|row| row.iter().all(|&b| b));
    ConnectivityReport {
        coalitions,
        global_strongly_connected,
    }
}

/// Block selectors of the stacked estimation vector `s`, which holds one
/// `n*r` block per agent.
#[derive(Debug, Clone)]
pub struct SelectorMatrices {
    /// `n*r x n^2*r`; picks agent `p`'s own sub-block out of block `p`.
    pub theta: DMatrix<f64>,
    /// `n(n-1)*r x n^2*r`; deletes that sub-block.
    pub xi: DMatrix<f64>,
}

pub fn build_selectors(n: usize, r: usize) -> Result<SelectorMatrices> {
    if n < 2 {
        return Err(Error::Unsupported(format!(
            "selectors need at least two agents, got {n}"
        )));
    }
    if r == 0 {
        return Err(Error::Unsupported("action dimension must be positive".into()));
    }
    let block = n * r;
    let mut theta = DMatrix::zeros(n * r, n * block);
    let mut xi = DMatrix::zeros(n * (n - 1) * r, n * block);
    for p in 0..n {
        for k in 0..r {
            theta[(p * r + k, p * block + p * r + k)] = 1.0;
        }
        let mut row = p * (n - 1) * r;
        for q in (0..n).filter(|&q| q != p) {
            for k in 0..r {
                xi[(row, p * block + q * r + k)] = 1.0;
                row += 1;
            }
        }
    }
    Ok(SelectorMatrices { theta, xi })
}

#[derive(Debug, Clone)]
pub struct CoalitionDecomposition {
    pub u_basis: Vec<DMatrix<f64>>,
}

impl CoalitionDecomposition {
    pub fn new(coalition_sizes: &[usize]) -> Self {
        Self {
            u_basis: coalition_sizes.iter().map(|&m| build_u_basis(m)).collect(),
        }
    }
}

/// Orthonormal basis of the complement of `1_m`, `m x (m-1)`.
///
/// Deterministic: the completion uses a fixed-seed random matrix.
pub fn build_u_basis(m: usize) -> DMatrix<f64> {
    if m < 2 {
        return DMatrix::zeros(m, 0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(U_BASIS_SEED ^ m as u64);
    let mut a = DMatrix::zeros(m, m);
    let inv = 1.0 / (m as f64).sqrt();
    for r in 0..m {
        a[(r, 0)] = inv;
        for c in 1..m {
            a[(r, c)] = rng.random_range(-1.0..1.0);
        }
    }
    let q = a.qr().q();
    q.columns(1, m - 1).into_owned()
}

/// Smallest eigenvalue of the symmetric part of the grounded global
/// Laplacian that drives the estimation error, `Xi (L + L^T) Xi^T` with
/// `L = Lbar (x) I_{nr}`.
///
/// The matrix is block diagonal after a permutation: estimates of agent
/// `l` evolve under `Lbar` with row and column `l` removed. So the
/// minimum is taken over those `n` grounded Laplacians.
pub fn estimation_symmetric_min_eig(topology: &CommTopology) -> f64 {
    let l = topology.global_laplacian();
    let n = l.nrows();
    (0..n)
        .map(|g| {
            let reduced = l.clone().remove_row(g).remove_column(g);
            let sym = &reduced + reduced.transpose();
            if sym.nrows() == 0 {
                f64::INFINITY
            } else {
                sym.symmetric_eigenvalues().min()
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Largest real part among the eigenvalues of `-Xi L Xi^T`; negative when
/// the estimation layer is exponentially stable.
pub fn estimation_spectral_abscissa(topology: &CommTopology) -> f64 {
    let l = topology.global_laplacian();
    let n = l.nrows();
    (0..n)
        .map(|g| {
            let reduced = -l.clone().remove_row(g).remove_column(g);
            if reduced.nrows() == 0 {
                f64::NEG_INFINITY
            } else {
                reduced
                    .complex_eigenvalues()
                    .iter()
                    .map(|z| z.re)
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `(1/m) sum_j v_j` over the blocks of a stacked vector.
pub fn block_mean(v: &DVector<f64>, blocks: usize) -> DVector<f64> {
    let r = v.len() / blocks;
    let mut out = DVector::zeros(r);
    for b in 0..blocks {
        out += v.rows(b * r, r);
    }
    out / blocks as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn path3() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0])
    }

    #[test]
    fn path_laplacian() {
        let l = laplacian(&path3()).unwrap();
        let want = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(l, want);
    }

    #[test]
    fn empty_laplacian_is_zero() {
        assert_eq!(laplacian(&DMatrix::zeros(3, 3)).unwrap(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn complete_graph_spectrum() {
        let k3 = DMatrix::from_fn(3, 3, |i, j| if i == j { 0.0 } else { 1.0 });
        let mut ev: Vec<f64> = laplacian(&k3).unwrap().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert_relative_eq!(ev[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(ev[1], 3.0, epsilon = 1e-12);
        assert_relative_eq!(ev[2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(laplacian(&DMatrix::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn connectivity_basic() {
        let t = CommTopology::new(vec![path3()], DMatrix::from_fn(3, 3, |i, j| ((i + 1) % 3 == j) as u8 as f64)).unwrap();
        let rep = check_connectivity(&t);
        assert!(rep.coalitions[0].connected && rep.coalitions[0].undirected);
        assert!(rep.global_strongly_connected);

        let t = CommTopology::new(vec![DMatrix::zeros(2, 2)], DMatrix::zeros(2, 2)).unwrap();
        let rep = check_connectivity(&t);
        assert!(!rep.coalitions[0].connected);
        assert!(!rep.global_strongly_connected);
        assert!(rep.violations().iter().any(|v| v.contains("coalition 1")));
    }

    #[test]
    fn directed_ring_is_strongly_connected() {
        let edges: Vec<(usize, usize)> = (0..12).map(|p| (p, (p + 1) % 12)).collect();
        let t = CommTopology::from_edges(&[6, 6], &[vec![(0, 1)], vec![(0, 1)]], &edges).unwrap();
        assert!(check_connectivity(&t).global_strongly_connected);
        let mut broken = edges.clone();
        broken.pop();
        let t = CommTopology::from_edges(&[6, 6], &[vec![], vec![]], &broken).unwrap();
        assert!(!check_connectivity(&t).global_strongly_connected);
    }

    #[test]
    fn smallest_selectors() {
        let s = build_selectors(2, 1).unwrap();
        let theta = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let xi = DMatrix::from_row_slice(2, 4, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(s.theta, theta);
        assert_eq!(s.xi, xi);
        assert_eq!(&s.theta * s.xi.transpose(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn selectors_reject_single_agent() {
        assert!(matches!(build_selectors(1, 3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn u_basis_m2() {
        let u = build_u_basis(2);
        assert_eq!(u.shape(), (2, 1));
        let h = 1.0 / 2f64.sqrt();
        assert_relative_eq!(u[(0, 0)].abs(), h, epsilon = 1e-14);
        assert_relative_eq!(u[(0, 0)], -u[(1, 0)], epsilon = 1e-14);
    }

    #[test]
    fn u_basis_projector() {
        for m in [4usize, 6] {
            let u = build_u_basis(m);
            assert_relative_eq!(u.transpose() * &u, DMatrix::identity(m - 1, m - 1), epsilon = 1e-12);
            let proj = DMatrix::identity(m, m) - DMatrix::from_element(m, m, 1.0 / m as f64);
            assert_relative_eq!(&u * u.transpose(), proj, epsilon = 1e-12);
        }
        assert_eq!(build_u_basis(1).ncols(), 0);
        assert_eq!(build_u_basis(5), build_u_basis(5));
    }

    #[test]
    fn grounded_spectrum_matches_dense_form() {
        let t = CommTopology::from_edges(&[2, 2], &[vec![(0, 1)], vec![(0, 1)]], &[(0, 1), (1, 2), (2, 3), (3, 0), (2, 0)]).unwrap();
        let n = 4;
        let r = 1;
        let sel = build_selectors(n, r).unwrap();
        let big = t.global_laplacian().kronecker(&DMatrix::<f64>::identity(n * r, n * r));
        let dense = &sel.xi * (&big + big.transpose()) * sel.xi.transpose();
        let want = dense.symmetric_eigenvalues().min();
        assert_relative_eq!(estimation_symmetric_min_eig(&t), want, epsilon = 1e-10);
    }
}
