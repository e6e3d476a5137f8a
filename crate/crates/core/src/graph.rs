//! Combinatorial multigraphs with loops, the bond (directed edge) indexing
//! convention, and the structural checks every metric graph must pass.
//!
//! Edge `j` (0-based, file order) with endpoints `(u, v)` yields bond `j`
//! directed `u -> v` and bond `j + E` directed `v -> u`.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// The first structural rule a graph breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    VertexOutOfRange { edge: usize, vertex: usize },
    DegreeTwo { vertex: usize },
    Disconnected { unreached: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "graph has no vertices or no edges"),
            Violation::VertexOutOfRange { edge, vertex } => {
                write!(f, "edge {edge} references vertex {vertex} which does not exist")
            }
            Violation::DegreeTwo { vertex } => write!(f, "vertex {vertex} has degree 2"),
            Violation::Disconnected { unreached } => {
                write!(f, "graph is disconnected: vertex {unreached} is not reachable from vertex 0")
            }
        }
    }
}

/// Undirected multigraph. Loops and parallel edges are allowed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    vertices: usize,
    edges: Vec<[usize; 2]>,
}

impl Graph {
    /// Builds a graph and validates it.
    pub fn new(vertex_count: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let g = Self::new_unchecked(vertex_count, edges);
        g.validate().map_err(Error::InvalidGraph)?;
        Ok(g)
    }

    /// Builds a graph without any checks. Use [`Graph::validate`] before
    /// handing it to the numerics.
    pub fn new_unchecked(vertex_count: usize, edges: Vec<(usize, usize)>) -> Self {
        Graph { vertex_count, edges }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> (usize, usize) {
        self.edges[e]
    }

    pub fn is_loop(&self, e: usize) -> bool {
        let (u, v) = self.edges[e];
        u == v
    }

    /// First Betti number `E - V + 1`.
    pub fn betti(&self) -> usize {
        (self.edge_count() + 1)
            .checked_sub(self.vertex_count)
            .expect("connected graphs have E >= V - 1")
    }

    /// Indices of loop edges, ascending.
    pub fn loops_of(&self) -> Vec<usize> {
        (0..self.edge_count()).filter(|&e| self.is_loop(e)).collect()
    }

    /// Degrees with loops counted twice.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.vertex_count];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn bond_count(&self) -> usize {
        2 * self.edge_count()
    }

    /// Vertex the bond starts at.
    pub fn bond_origin(&self, b: usize) -> usize {
        let e = self.edge_count();
        if b < e {
            self.edges[b].0
        } else {
            self.edges[b - e].1
        }
    }

    /// Vertex the bond ends at.
    pub fn bond_terminus(&self, b: usize) -> usize {
        let e = self.edge_count();
        if b < e {
            self.edges[b].1
        } else {
            self.edges[b - e].0
        }
    }

    /// The reversal involution `j <-> j + E`.
    pub fn bond_reverse(&self, b: usize) -> usize {
        let e = self.edge_count();
        if b < e {
            b + e
        } else {
            b - e
        }
    }

    /// Checks the standing assumptions: non-empty, indices in range, no
    /// vertex of degree two, connected.
    pub fn validate(&self) -> std::result::Result<(), Violation> {
        if self.vertex_count == 0 || self.edges.is_empty() {
            return Err(Violation::Empty);
        }
        for (i, &(u, v)) in self.edges.iter().enumerate() {
            for w in [u, v] {
                if w >= self.vertex_count {
                    return Err(Violation::VertexOutOfRange { edge: i, vertex: w });
                }
            }
        }
        if let Some(v) = self.degrees().iter().position(|&d| d == 2) {
            return Err(Violation::DegreeTwo { vertex: v });
        }
        let adj = self.adjacency_lists();
        let mut seen = vec![false; self.vertex_count];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &w in &adj[u] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if let Some(unreached) = seen.iter().position(|s| !s) {
            return Err(Violation::Disconnected { unreached });
        }
        Ok(())
    }

    /// Neighbour lists with multiplicity; a loop appears twice in its own list.
    pub fn adjacency_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertex_count];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }

    /// Dense edge-multiplicity matrix; the diagonal holds loop counts.
    pub fn multiplicity_matrix(&self) -> Vec<Vec<usize>> {
        let n = self.vertex_count;
        let mut m = vec![vec![0; n]; n];
        for &(u, v) in &self.edges {
            if u == v {
                m[u][u] += 1;
            } else {
                m[u][v] += 1;
                m[v][u] += 1;
            }
        }
        m
    }

    /// Canonical compact JSON: `{"vertices":V,"edges":[[u,v],...]}`.
    pub fn to_json(&self) -> String {
        let file = GraphFile {
            vertices: self.vertex_count,
            edges: self.edges.iter().map(|&(u, v)| [u, v]).collect(),
        };
        serde_json::to_string(&file).expect("graph serialization cannot fail")
    }

    /// Parses and validates a graph file.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        Graph::new(file.vertices, file.edges.into_iter().map(|[u, v]| (u, v)).collect())
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
