//! Function dependency graphs (k-NNG, rho-RGG), the Euclidean MST, maximal
//! cliques and proper edge coloring.

mod cliques;
mod coloring;
pub mod spatial;

use std::fmt::Write as _;

pub use cliques::{maximal_cliques, CliqueSet};
pub use coloring::{proper_edge_coloring, EdgeColoring};

use crate::error::{Error, Result};
use crate::geometry::Deployment;
use spatial::GridIndex;

/// Simple undirected graph on nodes `0..n` with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    adj: Vec<Vec<usize>>,
    edge_count: usize,
}

impl UndirectedGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            adj: vec![Vec::new(); n],
            edge_count: 0,
        }
    }

    pub fn complete(n: usize) -> Self {
        let adj = (0..n).map(|u| (0..n).filter(|&v| v != u).collect()).collect();
        Self {
            adj,
            edge_count: n * n.saturating_sub(1) / 2,
        }
    }

    /// Builds a graph from an edge list; duplicates collapse, self-loops and
    /// out-of-range endpoints are rejected.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidInput(format!("edge ({u}, {v}) out of range for n={n}")));
            }
            if u == v {
                return Err(Error::InvalidInput(format!("self-loop at node {u}")));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut edge_count = 0;
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            edge_count += list.len();
        }
        Ok(Self {
            adj,
            edge_count: edge_count / 2,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.adj[u]
    }

    pub fn degree(&self, u: usize) -> usize {
        self.adj[u].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.adj.len() && self.adj[u].binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count);
        for (u, list) in self.adj.iter().enumerate() {
            out.extend(list.iter().filter(|&&v| v > u).map(|&v| (u, v)));
        }
        out
    }

    /// One `u v` pair per line, ascending.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (u, v) in self.edges() {
            let _ = writeln!(out, "{u} {v}");
        }
        out
    }
}

/// Maximum degree; zero for an edgeless graph.
pub fn max_degree(g: &UndirectedGraph) -> usize {
    g.adj.iter().map(Vec::len).max().unwrap_or(0)
}

/// Undirected union of every node's `k` nearest neighbors (ties by id).
pub fn build_knng(dep: &Deployment, k: usize) -> Result<UndirectedGraph> {
    let n = dep.len();
    if k == 0 || k >= n {
        return Err(Error::param(format!("k-NNG needs 1 <= k <= n-1 (k={k}, n={n})")));
    }
    let grid = GridIndex::new(dep);
    let mut edges = Vec::with_capacity(n * k);
    for u in 0..n {
        edges.extend(grid.k_nearest(u, k).into_iter().map(|v| (u, v)));
    }
    UndirectedGraph::from_edges(n, edges)
}

/// Connects every pair at distance at most `rho`.
pub fn build_rgg(dep: &Deployment, rho: f64) -> Result<UndirectedGraph> {
    if rho <= 0.0 || !rho.is_finite() {
        return Err(Error::param(format!("RGG radius must be positive, got {rho}")));
    }
    let grid = GridIndex::with_cell(dep, rho);
    let mut edges = Vec::new();
    for u in 0..dep.len() {
        edges.extend(grid.within(u, rho).into_iter().filter(|&v| v > u).map(|v| (u, v)));
    }
    UndirectedGraph::from_edges(dep.len(), edges)
}

/// Euclidean minimum spanning tree by dense Prim, O(n^2).
///
/// Minimizing total length also minimizes the sum of `R^nu` for any `nu >= 1`
/// because the MST depends only on the order of edge lengths.
pub fn build_mst(dep: &Deployment) -> UndirectedGraph {
    let parent = mst_parents(dep, 0);
    let edges = parent
        .iter()
        .enumerate()
        .filter_map(|(v, p)| p.map(|p| (p, v)));
    UndirectedGraph::from_edges(dep.len(), edges).expect("MST edges are valid")
}

/// Prim's algorithm grown from `start`; returns the parent of every node.
pub(crate) fn mst_parents(dep: &Deployment, start: usize) -> Vec<Option<usize>> {
    let n = dep.len();
    let mut parent = vec![None; n];
    let mut best = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    best[start] = 0.0;
    for _ in 0..n {
        let mut u = usize::MAX;
        let mut bu = f64::INFINITY;
        for v in 0..n {
            if !done[v] && (u == usize::MAX || best[v] < bu) {
                u = v;
                bu = best[v];
            }
        }
        done[u] = true;
        for v in 0..n {
            if !done[v] {
                let w = dep.dist_sq(u, v);
                if w < best[v] {
                    best[v] = w;
                    parent[v] = Some(u);
                }
            }
        }
    }
    parent
}
