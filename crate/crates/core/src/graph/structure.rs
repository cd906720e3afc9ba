use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::{elementary_cycles, line_matrices, MetricGraph};
use crate::error::Result;

pub const DEFAULT_CYCLE_CAP: usize = 10_000;

/// Long-run role of an edge under transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeClass {
    /// Member of the terminal strong component with this index in
    /// [`StructureReport::components`].
    Terminal(usize),
    /// Downstream of a cycle but not in a terminal component: content decays
    /// without ever vanishing identically.
    Transient,
    /// Not reachable from any cycle: content vanishes after finite time.
    Acyclic,
}

/// Strong-component decomposition of the edge relation "material can pass
/// from edge `j` to edge `k`".
#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    pub sinks: Vec<usize>,
    pub sources: Vec<usize>,
    /// Successor lists of the edge relation.
    pub successors: Vec<Vec<usize>>,
    /// Components sorted internally and by smallest member.
    pub components: Vec<Vec<usize>>,
    pub component_of: Vec<usize>,
    pub terminal: Vec<bool>,
    /// Component contains at least one directed cycle.
    pub cyclic: Vec<bool>,
    pub cycles: Vec<Vec<usize>>,
    pub edge_class: Vec<EdgeClass>,
}

impl StructureReport {
    /// Indices of terminal components that contain a cycle.
    pub fn terminal_components(&self) -> Vec<usize> {
        (0..self.components.len()).filter(|&c| self.terminal[c] && self.cyclic[c]).collect()
    }

    pub fn acyclic_edges(&self) -> Vec<usize> {
        self.edges_with(|c| c == EdgeClass::Acyclic)
    }

    pub fn transient_edges(&self) -> Vec<usize> {
        self.edges_with(|c| c == EdgeClass::Transient)
    }

    fn edges_with(&self, pred: impl Fn(EdgeClass) -> bool) -> Vec<usize> {
        (0..self.edge_class.len()).filter(|&j| pred(self.edge_class[j])).collect()
    }

    /// Elementary cycles lying entirely in component `c`.
    pub fn cycles_in(&self, c: usize) -> Vec<&Vec<usize>> {
        self.cycles.iter().filter(|cy| self.component_of[cy[0]] == c).collect()
    }
}

/// Structure of a weighted graph; missing weights default to the uniform split.
pub fn analyze_structure(g: &MetricGraph, cycle_cap: usize) -> Result<StructureReport> {
    let g = g.clone().with_default_weights();
    let lm = line_matrices(&g)?;
    let mut report = analyze_adjacency(&lm.b_w, cycle_cap)?;
    report.sinks = g.sinks();
    report.sources = g.sources();
    Ok(report)
}

/// Structure of the relation `j -> k iff b[(k, j)] != 0` for any square `b`.
pub fn analyze_adjacency(b: &DMatrix<f64>, cycle_cap: usize) -> Result<StructureReport> {
    let m = b.nrows();
    let successors: Vec<Vec<usize>> =
        (0..m).map(|j| (0..m).filter(|&k| b[(k, j)] != 0.0).collect()).collect();

    let mut dg = DiGraph::<(), ()>::with_capacity(m, 0);
    let nodes: Vec<_> = (0..m).map(|_| dg.add_node(())).collect();
    for (j, succ) in successors.iter().enumerate() {
        for &k in succ {
            dg.add_edge(nodes[j], nodes[k], ());
        }
    }
    let mut components: Vec<Vec<usize>> = tarjan_scc(&dg)
        .into_iter()
        .map(|c| {
            let mut c: Vec<usize> = c.into_iter().map(|ix| ix.index()).collect();
            c.sort_unstable();
            c
        })
        .collect();
    components.sort_by_key(|c| c[0]);

    let mut component_of = vec![0; m];
    for (ci, c) in components.iter().enumerate() {
        for &j in c {
            component_of[j] = ci;
        }
    }
    let terminal: Vec<bool> = components
        .iter()
        .enumerate()
        .map(|(ci, c)| c.iter().all(|&j| successors[j].iter().all(|&k| component_of[k] == ci)))
        .collect();
    let cyclic: Vec<bool> = components
        .iter()
        .map(|c| c.len() > 1 || successors[c[0]].contains(&c[0]))
        .collect();

    // edges reachable from any cycle
    let mut downstream = vec![false; m];
    let mut stack: Vec<usize> = (0..m).filter(|&j| cyclic[component_of[j]]).collect();
    for &j in &stack {
        downstream[j] = true;
    }
    while let Some(j) = stack.pop() {
        for &k in &successors[j] {
            if !downstream[k] {
                downstream[k] = true;
                stack.push(k);
            }
        }
    }

    let edge_class = (0..m)
        .map(|j| {
            let c = component_of[j];
            if cyclic[c] && terminal[c] {
                EdgeClass::Terminal(c)
            } else if downstream[j] {
                EdgeClass::Transient
            } else {
                EdgeClass::Acyclic
            }
        })
        .collect();

    let cycles = elementary_cycles(&successors, cycle_cap)?;
    Ok(StructureReport {
        sinks: Vec::new(),
        sources: Vec::new(),
        successors,
        components,
        component_of,
        terminal,
        cyclic,
        cycles,
        edge_class,
    })
}
