#![allow(dead_code)]

use nalgebra::DMatrix;
use netgraph::coefficient::{CoefficientField, CoefficientKind};
use netgraph::graph::MetricGraph;
use rand::seq::SliceRandom;
use rand::Rng;

/// Random simple connected graph on `n` vertices with `m` edges, or `None`
/// when the draw fails the constraints.
pub fn random_graph(rng: &mut impl Rng, n: usize, m: usize, sink_free: bool) -> Option<MetricGraph> {
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|h| (0..n).map(move |t| (h, t))).filter(|(h, t)| h != t).collect();
    pairs.shuffle(rng);
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    if sink_free {
        // one outgoing edge per vertex first
        for v in 0..n {
            let t = loop {
                let t = rng.gen_range(0..n);
                if t != v {
                    break t;
                }
            };
            chosen.push((v, t));
        }
    }
    for p in pairs {
        if chosen.len() >= m {
            break;
        }
        if !chosen.contains(&p) {
            chosen.push(p);
        }
    }
    if chosen.len() != m {
        return None;
    }
    chosen.shuffle(rng);
    let g = MetricGraph::from_pairs(n, &chosen).ok()?;
    if sink_free && !g.sinks().is_empty() {
        return None;
    }
    Some(g)
}

/// Keeps drawing until a graph comes out.
pub fn draw_graph(rng: &mut impl Rng, n_max: usize, m_max: usize, sink_free: bool) -> MetricGraph {
    loop {
        let n = rng.gen_range(2..=n_max);
        let m_min = if sink_free { n } else { n - 1 };
        let m_cap = m_max.min(n * (n - 1));
        if m_min > m_cap {
            continue;
        }
        let m = rng.gen_range(m_min..=m_cap);
        if let Some(g) = random_graph(rng, n, m, sink_free) {
            return g;
        }
    }
}

pub fn draw_strongly_connected(rng: &mut impl Rng, n_max: usize, m_max: usize) -> MetricGraph {
    loop {
        let g = draw_graph(rng, n_max, m_max, true);
        if g.is_strongly_connected() {
            return g;
        }
    }
}

/// Random redistribution weights on the outgoing edges of every vertex.
pub fn random_weights(rng: &mut impl Rng, g: &MetricGraph) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(g.n_vertices(), g.n_edges());
    for v in 0..g.n_vertices() {
        let out = g.out_edges(v);
        let raw: Vec<f64> = out.iter().map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        for (j, r) in out.into_iter().zip(raw) {
            w[(v, j)] = r / total;
        }
    }
    w
}

pub fn constant_field(kind: CoefficientKind, values: &[f64]) -> CoefficientField {
    CoefficientField::constants(kind, values).unwrap()
}

/// Every simple, connected, sink-free graph with at most `m_max` edges.
pub fn all_small_graphs(m_max: usize) -> Vec<MetricGraph> {
    let mut out = Vec::new();
    for n in 2..=m_max {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|h| (0..n).map(move |t| (h, t))).filter(|(h, t)| h != t).collect();
        let p = pairs.len();
        for mask in 1u32..(1 << p) {
            if mask.count_ones() as usize > m_max {
                continue;
            }
            let chosen: Vec<(usize, usize)> = (0..p).filter(|&i| mask & (1 << i) != 0).map(|i| pairs[i]).collect();
            if let Ok(g) = MetricGraph::from_pairs(n, &chosen) {
                if g.sinks().is_empty() {
                    out.push(g);
                }
            }
        }
    }
    out
}

/// Brute-force solution of `u_t + c_j u_s = 0` with `u_j(t, 1) = Σ_k B[j][k] u_k(t, 0)`
/// for edgewise-constant speeds, by following the characteristic through
/// `(t, j, s)` backward until it reaches `t = 0`.
pub struct Tracer<'a> {
    pub b: &'a DMatrix<f64>,
    pub speeds: &'a [f64],
    pub f: &'a dyn Fn(usize, f64) -> f64,
}

impl Tracer<'_> {
    /// Value at time `t` on edge `j` at position `s`. Material moves toward `s = 0`.
    pub fn value(&self, t: f64, j: usize, s: f64) -> f64 {
        let c = self.speeds[j];
        // position occupied at time 0 by the same particle
        let s0 = s + c * t;
        if s0 < 1.0 {
            return (self.f)(j, s0);
        }
        // time at which the particle entered through s = 1
        let entered = t - (1.0 - s) / c;
        (0..self.b.ncols())
            .filter(|&k| self.b[(j, k)] != 0.0)
            .map(|k| self.b[(j, k)] * self.value(entered, k, 0.0))
            .sum()
    }
}

