//! Undirected unweighted topologies and their Laplacian spectrum.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg::{self, DenseMatrix};
use crate::rng;

/// Symmetric 0/1 adjacency with zero diagonal.
///
/// Graphs built by the public constructors are also connected; only
/// [`Graph::from_edges_unchecked_connectivity`] can produce a disconnected one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    adjacency: Vec<bool>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    fn empty(n: usize) -> Self {
        Self {
            n,
            adjacency: vec![false; n * n],
            neighbors: vec![Vec::new(); n],
        }
    }

    fn add_edge(&mut self, i: usize, j: usize) {
        if !self.adjacency[i * self.n + j] {
            self.adjacency[i * self.n + j] = true;
            self.adjacency[j * self.n + i] = true;
            self.neighbors[i].push(j);
            self.neighbors[j].push(i);
        }
    }

    fn remove_edge(&mut self, i: usize, j: usize) {
        self.adjacency[i * self.n + j] = false;
        self.adjacency[j * self.n + i] = false;
        self.neighbors[i].retain(|&v| v != j);
        self.neighbors[j].retain(|&v| v != i);
    }

    fn finish(mut self) -> Self {
        self.neighbors.iter_mut().for_each(|nb| nb.sort_unstable());
        self
    }

    /// Graph from an undirected edge list without the connectivity check.
    pub fn from_edges_unchecked_connectivity(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut g = Self::empty(n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Config(format!("edge ({i}, {j}) out of range for {n} nodes")));
            }
            if i == j {
                return Err(Error::Config(format!("self-loop at node {i}")));
            }
            g.add_edge(i, j);
        }
        Ok(g.finish())
    }

    /// Connected graph from an undirected edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let g = Self::from_edges_unchecked_connectivity(n, edges)?;
        if n < 2 || !g.is_connected() {
            return Err(Error::Config("graph must have ≥ 2 nodes and be connected".into()));
        }
        Ok(g)
    }

    /// Connected graph from a 0/1 adjacency matrix.
    pub fn from_adjacency(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        let mut edges = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Config("adjacency matrix is not square".into()));
            }
            for (j, &a) in row.iter().enumerate() {
                match a {
                    0 => {}
                    1 if i == j => return Err(Error::Config("adjacency has a nonzero diagonal".into())),
                    1 => {
                        if rows[j][i] != 1 {
                            return Err(Error::Config("adjacency is not symmetric".into()));
                        }
                        if i < j {
                            edges.push((i, j));
                        }
                    }
                    _ => return Err(Error::Config("adjacency entries must be 0 or 1".into())),
                }
            }
        }
        Self::from_edges(n, &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config("complete graph needs n ≥ 2".into()));
        }
        let mut g = Self::empty(n);
        for i in 0..n {
            for j in (i + 1)..n {
                g.add_edge(i, j);
            }
        }
        Ok(g.finish())
    }

    /// Each node joined to its `k/2` nearest neighbours on each side of a ring.
    pub fn ring_lattice(n: usize, k: usize) -> Result<Self> {
        check_lattice_params(n, k)?;
        let mut g = Self::empty(n);
        for i in 0..n {
            for d in 1..=k / 2 {
                g.add_edge(i, (i + d) % n);
            }
        }
        Ok(g.finish())
    }

    /// Watts–Strogatz small world: a ring lattice whose lattice edges are
    /// rewired with probability `beta`. Resamples until connected, giving up
    /// after 100 attempts.
    pub fn watts_strogatz(n: usize, k: usize, beta: f64, rng: &mut impl RngCore) -> Result<Self> {
        check_lattice_params(n, k)?;
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::Config(format!("rewiring probability {beta} not in [0, 1]")));
        }
        const ATTEMPTS: usize = 100;
        for _ in 0..ATTEMPTS {
            let g = ws_attempt(n, k, beta, rng)?;
            if g.is_connected() {
                return Ok(g);
            }
        }
        Err(Error::Generation(format!(
            "no connected Watts–Strogatz graph after {ATTEMPTS} attempts (n={n}, k={k}, beta={beta})"
        )))
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n + j]
    }

    /// Sorted neighbour list of node `i`.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    pub fn adjacency_rows(&self) -> Vec<Vec<u8>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.has_edge(i, j) as u8).collect())
            .collect()
    }

    /// Edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.n {
            for &j in &self.neighbors[i] {
                if i < j {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    /// Number of connected components (breadth-first search).
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.n];
        let mut components = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for &v in &self.neighbors[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        components
    }

    /// `lᵢᵢ = deg(i)`, `lᵢⱼ = −αᵢⱼ`.
    pub fn laplacian(&self) -> DenseMatrix {
        let mut l = DenseMatrix::zeros(self.n);
        for i in 0..self.n {
            l[(i, i)] = self.degree(i) as f64;
            for &j in &self.neighbors[i] {
                l[(i, j)] = -1.0;
            }
        }
        l
    }

    /// Edge list text, one `i j` pair per line with `i < j`.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        for (i, j) in self.edges() {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }

    /// Parses [`Graph::to_edge_list`] output for a graph on `n` nodes.
    pub fn from_edge_list(n: usize, text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace().map(str::parse::<usize>);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(i)), Some(Ok(j)), None) => edges.push((i, j)),
                _ => {
                    return Err(Error::Config(format!(
                        "edge list line {}: expected two node indices",
                        lineno + 1
                    )))
                }
            }
        }
        Self::from_edges(n, &edges)
    }
}

fn check_lattice_params(n: usize, k: usize) -> Result<()> {
    if k < 2 || !k.is_multiple_of(2) || k >= n {
        return Err(Error::Config(format!(
            "ring lattice needs an even k with 2 ≤ k < n (got n={n}, k={k})"
        )));
    }
    Ok(())
}

fn ws_attempt(n: usize, k: usize, beta: f64, rng: &mut impl RngCore) -> Result<Graph> {
    let mut g = Graph::ring_lattice(n, k)?;
    if beta == 0.0 {
        return Ok(g);
    }
    // Visit lattice edges (u, u+d) ring by ring; rewire the far end to a
    // uniformly chosen node that is neither u nor already adjacent to u.
    for d in 1..=k / 2 {
        for u in 0..n {
            let v = (u + d) % n;
            if rng::open_unit(rng) >= beta {
                continue;
            }
            if g.degree(u) >= n - 1 || !g.has_edge(u, v) {
                continue;
            }
            let candidates: Vec<usize> = (0..n).filter(|&w| w != u && !g.has_edge(u, w)).collect();
            let w = candidates[rng::index(rng, candidates.len())];
            g.remove_edge(u, v);
            g.add_edge(u, w);
        }
    }
    Ok(g.finish())
}

/// Laplacian spectrum and degree summary.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    pub laplacian: DenseMatrix,
    /// All Laplacian eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Second-smallest eigenvalue (algebraic connectivity).
    pub lambda2: f64,
    pub max_degree: usize,
}

impl SpectralSummary {
    /// Eigenvalues with magnitude below `tol`.
    pub fn zero_eigenvalue_count(&self, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|v| v.abs() < tol).count()
    }
}

pub fn spectral(g: &Graph) -> Result<SpectralSummary> {
    let laplacian = g.laplacian();
    let eig = linalg::jacobi_eigen(&laplacian)?;
    let lambda2 = eig.values.get(1).copied().unwrap_or(0.0);
    Ok(SpectralSummary {
        laplacian,
        eigenvalues: eig.values,
        lambda2,
        max_degree: g.max_degree(),
    })
}
