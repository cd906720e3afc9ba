//! Compact metric graphs: combinatorial structure, orientation and
//! redistribution weights.
//!
//! Every edge is the interval `[0, 1]`. The endpoint at `s = 1` is the
//! *head* and the endpoint at `s = 0` is the *tail*; transported material
//! enters an edge at its head and leaves at its tail. All matrix builders in
//! [`matrices`] derive from this one convention.

mod cycles;
mod matrices;
mod structure;

pub use cycles::elementary_cycles;
pub use matrices::{
    incidence, kirchhoff_from_adjacency, line_matrices, multiplicity_zero_kirchhoff, IncidenceSet,
    LineGraphMatrices,
};
pub use structure::{
    analyze_adjacency, analyze_structure, EdgeClass, StructureReport, DEFAULT_CYCLE_CAP,
};

use std::collections::{BTreeSet, VecDeque};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the per-vertex weight row sums.
pub const WEIGHT_ROW_TOL: f64 = 1e-12;

/// One oriented edge: material flows from `head = e(1)` to `tail = e(0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub head: usize,
    pub tail: usize,
}

impl Edge {
    pub fn new(head: usize, tail: usize) -> Self {
        Edge { head, tail }
    }

    /// Vertex sitting at parameter value `s = 0` or `s = 1`.
    pub fn at(&self, end: End) -> usize {
        match end {
            End::Zero => self.tail,
            End::One => self.head,
        }
    }
}

/// Endpoint of the unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum End {
    Zero,
    One,
}

/// JSON form of a graph: `{"vertices": n, "edges": [{"head": i, "tail": j}], "weights": [[..]]}`.
///
/// Vertex indices are zero based and the edge order defines the matrix
/// column order everywhere else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub vertices: usize,
    pub edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
}

impl GraphSpec {
    pub fn build(&self) -> Result<MetricGraph> {
        let weights = match &self.weights {
            None => None,
            Some(rows) => {
                if rows.len() != self.vertices || rows.iter().any(|r| r.len() != self.edges.len()) {
                    return Err(Error::ShapeMismatch(format!(
                        "weights must be {}x{}",
                        self.vertices,
                        self.edges.len()
                    )));
                }
                Some(DMatrix::from_fn(self.vertices, self.edges.len(), |i, j| rows[i][j]))
            }
        };
        MetricGraph::new(self.vertices, self.edges.clone(), weights)
    }
}

/// A validated, immutable metric graph.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricGraph {
    n: usize,
    edges: Vec<Edge>,
    weights: Option<DMatrix<f64>>,
}

impl MetricGraph {
    /// Validates and builds a graph.
    ///
    /// Two edges with the same head and tail, or an edge whose head equals its
    /// tail, make the graph non-simple. Antiparallel pairs (`u -> v` and
    /// `v -> u`) are distinct oriented edges and are accepted.
    pub fn new(n: usize, edges: Vec<Edge>, weights: Option<DMatrix<f64>>) -> Result<Self> {
        let m = edges.len();
        if n < 2 || m < 1 {
            return Err(Error::TooSmall { vertices: n, edges: m });
        }
        let mut seen = BTreeSet::new();
        for (j, e) in edges.iter().enumerate() {
            for v in [e.head, e.tail] {
                if v >= n {
                    return Err(Error::VertexOutOfRange { edge: j, vertex: v, vertices: n });
                }
            }
            if e.head == e.tail {
                return Err(Error::NotSimple(format!("edge {j} is a loop at vertex {}", e.head)));
            }
            if !seen.insert((e.head, e.tail)) {
                return Err(Error::NotSimple(format!(
                    "edge {j} duplicates an earlier edge {} -> {}",
                    e.head, e.tail
                )));
            }
        }

        let graph = MetricGraph { n, edges, weights: None };
        if let Some(v) = graph.first_unreachable_vertex() {
            return Err(Error::Disconnected(v));
        }
        match weights {
            None => Ok(graph),
            Some(w) => graph.with_weights(w),
        }
    }

    /// Convenience constructor from `(head, tail)` pairs without weights.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let edges = pairs.iter().map(|&(h, t)| Edge::new(h, t)).collect();
        Self::new(n, edges, None)
    }

    /// Attaches redistribution weights after checking them against the
    /// outgoing incidence pattern.
    pub fn with_weights(mut self, w: DMatrix<f64>) -> Result<Self> {
        let (n, m) = (self.n, self.edges.len());
        if w.nrows() != n || w.ncols() != m {
            return Err(Error::ShapeMismatch(format!(
                "weights are {}x{}, graph needs {n}x{m}",
                w.nrows(),
                w.ncols()
            )));
        }
        for i in 0..n {
            let mut sum = 0.0;
            let mut has_out = false;
            for j in 0..m {
                let value = w[(i, j)];
                let outgoing = self.edges[j].head == i;
                has_out |= outgoing;
                if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                    return Err(Error::InvalidParameter(format!(
                        "weight w[{i}][{j}] = {value} must lie in [0, 1]"
                    )));
                }
                if (value != 0.0) != outgoing {
                    return Err(Error::WeightSupportMismatch { vertex: i, edge: j, value });
                }
                sum += value;
            }
            if has_out && (sum - 1.0).abs() > WEIGHT_ROW_TOL {
                return Err(Error::BadWeightRow { vertex: i, sum });
            }
        }
        self.weights = Some(w);
        Ok(self)
    }

    /// Fills in the uniform split `w_ij = 1/outdeg(v_i)` when no weights were given.
    pub fn with_default_weights(self) -> Self {
        if self.weights.is_some() {
            return self;
        }
        let w = self.uniform_weights();
        MetricGraph { weights: Some(w), ..self }
    }

    fn uniform_weights(&self) -> DMatrix<f64> {
        let mut w = DMatrix::zeros(self.n, self.edges.len());
        for v in 0..self.n {
            let out = self.out_edges(v);
            let share = 1.0 / out.len().max(1) as f64;
            for j in out {
                w[(v, j)] = share;
            }
        }
        w
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, j: usize) -> Edge {
        self.edges[j]
    }

    pub fn weights(&self) -> Option<&DMatrix<f64>> {
        self.weights.as_ref()
    }

    /// Edges whose head is `v`, i.e. edges carrying material away from `v`.
    pub fn out_edges(&self, v: usize) -> Vec<usize> {
        (0..self.edges.len()).filter(|&j| self.edges[j].head == v).collect()
    }

    /// Edges whose tail is `v`, i.e. edges delivering material into `v`.
    pub fn in_edges(&self, v: usize) -> Vec<usize> {
        (0..self.edges.len()).filter(|&j| self.edges[j].tail == v).collect()
    }

    /// `Γ(v)` in edge-index order, with the endpoint of each edge sitting at `v`.
    pub fn incident(&self, v: usize) -> Vec<(usize, End)> {
        self.edges
            .iter()
            .enumerate()
            .filter_map(|(j, e)| {
                if e.tail == v {
                    Some((j, End::Zero))
                } else if e.head == v {
                    Some((j, End::One))
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e.head == v || e.tail == v).count()
    }

    /// Vertices no edge leaves from (zero rows of the outgoing incidence matrix).
    pub fn sinks(&self) -> Vec<usize> {
        (0..self.n).filter(|&v| self.edges.iter().all(|e| e.head != v)).collect()
    }

    /// Vertices no edge arrives at (zero rows of the incoming incidence matrix).
    pub fn sources(&self) -> Vec<usize> {
        (0..self.n).filter(|&v| self.edges.iter().all(|e| e.tail != v)).collect()
    }

    /// True when every vertex can reach every other along the orientation.
    pub fn is_strongly_connected(&self) -> bool {
        let forward = self.reach(0, |e| (e.head, e.tail));
        let backward = self.reach(0, |e| (e.tail, e.head));
        forward.iter().all(|&r| r) && backward.iter().all(|&r| r)
    }

    /// True when the graph is one directed cycle through all its edges.
    pub fn is_directed_cycle(&self) -> bool {
        self.edges.len() == self.n
            && (0..self.n).all(|v| self.out_edges(v).len() == 1 && self.in_edges(v).len() == 1)
            && self.is_strongly_connected()
    }

    fn reach(&self, start: usize, dir: impl Fn(&Edge) -> (usize, usize)) -> Vec<bool> {
        let mut seen = vec![false; self.n];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for e in &self.edges {
                let (from, to) = dir(e);
                if from == v && !seen[to] {
                    seen[to] = true;
                    queue.push_back(to);
                }
            }
        }
        seen
    }

    fn first_unreachable_vertex(&self) -> Option<usize> {
        let mut seen = vec![false; self.n];
        seen[0] = true;
        let mut queue = VecDeque::from([0]);
        while let Some(v) = queue.pop_front() {
            for e in &self.edges {
                let other = if e.head == v {
                    e.tail
                } else if e.tail == v {
                    e.head
                } else {
                    continue;
                };
                if !seen[other] {
                    seen[other] = true;
                    queue.push_back(other);
                }
            }
        }
        seen.iter().position(|&s| !s)
    }

    pub fn to_spec(&self) -> GraphSpec {
        GraphSpec {
            vertices: self.n,
            edges: self.edges.clone(),
            weights: self
                .weights
                .as_ref()
                .map(|w| w.row_iter().map(|r| r.iter().copied().collect()).collect()),
        }
    }
}
