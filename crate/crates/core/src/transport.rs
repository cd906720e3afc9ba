//! Exact transport by the method of characteristics.
//!
//! In the travel-time coordinate `y = φ_j(s)` every characteristic moves
//! with unit speed toward `y = 0`, so one time step of length `h` is an
//! index shift of the cell samples. The cell leaving an edge at `s = 0`
//! feeds the boundary relation `u(t, 1) = B_c u(t, 0)`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::coefficient::{travel_time, CoefficientField, TravelTimeMap};
use crate::error::{Error, Result};
use crate::generation::TransportBoundary;
use crate::graph::{MetricGraph, StructureReport};
use crate::rational::{self, Rational};

/// Edge lengths are treated as commensurable when all reconstruct as
/// rationals within this tolerance.
pub const SNAP_TOL: f64 = 1e-9;
/// Fallback to plain snapping when the common refinement would need more
/// cells than this.
pub const MAX_TOTAL_CELLS: usize = 10_000_000;

/// Uniform travel-time grid shared by all edges.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportGrid {
    pub h: f64,
    pub cells: Vec<usize>,
    /// `|cells_j h - ℓ_j|` per edge.
    pub snap_error: Vec<f64>,
    /// Lengths were commensurable and `h` divides all of them.
    pub commensurable: bool,
}

impl TransportGrid {
    pub fn max_snap_error(&self) -> f64 {
        self.snap_error.iter().fold(0.0, |a, &b| a.max(b))
    }
}

/// Picks the largest `h <= h_target` dividing every length when the
/// lengths are commensurable, and snaps each length to a multiple of
/// `h_target` otherwise (an error in strict mode).
pub fn choose_grid(lengths: &[f64], h_target: f64, strict: bool) -> Result<TransportGrid> {
    if !(h_target.is_finite() && h_target > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be positive, got {h_target}")));
    }
    let rats: Vec<Option<Rational>> =
        lengths.iter().map(|&l| rational::reconstruct(l, SNAP_TOL, rational::MAX_DENOMINATOR)).collect();
    if rats.iter().all(Option::is_some) {
        let g = rats.iter().flatten().fold(Rational::from_integer(0), |acc, &r| rational::gcd(acc, r));
        let gf = rational::to_f64(g);
        let k = (gf / h_target - 1e-9).ceil().max(1.0);
        let h = gf / k;
        let cells: Vec<usize> = lengths.iter().map(|&l| (l / h).round() as usize).collect();
        if cells.iter().sum::<usize>() <= MAX_TOTAL_CELLS && cells.iter().all(|&c| c > 0) {
            let snap_error = lengths.iter().zip(&cells).map(|(&l, &c)| (c as f64 * h - l).abs()).collect();
            return Ok(TransportGrid { h, cells, snap_error, commensurable: true });
        }
    }
    let cells: Vec<usize> = lengths.iter().map(|&l| ((l / h_target).round() as usize).max(1)).collect();
    let snap_error: Vec<f64> =
        lengths.iter().zip(&cells).map(|(&l, &c)| (c as f64 * h_target - l).abs()).collect();
    if strict {
        let (edge, &snap) = snap_error
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one edge");
        return Err(Error::IncommensurableLengths { edge, snap });
    }
    Ok(TransportGrid { h: h_target, cells, snap_error, commensurable: false })
}

/// Per-edge cell samples in the travel-time coordinate. Cell `i` of edge
/// `j` covers `y ∈ [i h, (i+1) h]`; cell 0 is the one at `s = 0`.
#[derive(Debug, Clone)]
pub struct GraphState {
    /// `None` for a boundary matrix without a vertex realization.
    graph: Option<MetricGraph>,
    b_c: DMatrix<f64>,
    c: CoefficientField,
    tt: TravelTimeMap,
    grid: TransportGrid,
    cells: Vec<VecDeque<f64>>,
    steps: u64,
    /// Values that left each edge at `s = 0` in the last step.
    exited: Option<Vec<f64>>,
}

/// Transport diagnostics at the current time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub mass: f64,
    /// `None` before the first step.
    pub kirchhoff_residual: Option<f64>,
    pub min_value: f64,
}

/// Samples `f(j, s)` at the cell midpoints of the grid built for `h_target`.
pub fn init_state(
    g: &MetricGraph,
    boundary: &TransportBoundary,
    c: &CoefficientField,
    f: impl Fn(usize, f64) -> f64,
    h_target: f64,
    strict: bool,
) -> Result<GraphState> {
    c.check_len(g.n_edges())?;
    build_state(Some(g.clone()), &boundary.b_c, c, f, h_target, strict)
}

/// Like [`init_state`] for a bare boundary matrix `u(t, 1) = B u(t, 0)`.
/// The Kirchhoff residual is unavailable for such states.
pub fn init_abstract_state(
    b_c: &DMatrix<f64>,
    c: &CoefficientField,
    f: impl Fn(usize, f64) -> f64,
    h_target: f64,
    strict: bool,
) -> Result<GraphState> {
    build_state(None, b_c, c, f, h_target, strict)
}

fn build_state(
    graph: Option<MetricGraph>,
    b_c: &DMatrix<f64>,
    c: &CoefficientField,
    f: impl Fn(usize, f64) -> f64,
    h_target: f64,
    strict: bool,
) -> Result<GraphState> {
    let m = c.len();
    if b_c.shape() != (m, m) {
        return Err(Error::ShapeMismatch(format!("B_c must be {m} x {m}")));
    }
    let tt = travel_time(c)?;
    let grid = choose_grid(&tt.lengths(), h_target, strict)?;
    let cells = (0..m)
        .map(|j| {
            (0..grid.cells[j])
                .map(|i| f(j, tt.inverse(j, (i as f64 + 0.5) * grid.h)))
                .collect::<VecDeque<f64>>()
        })
        .collect();
    Ok(GraphState { graph, b_c: b_c.clone(), c: c.clone(), tt, grid, cells, steps: 0, exited: None })
}

impl GraphState {
    pub fn graph(&self) -> Option<&MetricGraph> {
        self.graph.as_ref()
    }

    pub fn b_c(&self) -> &DMatrix<f64> {
        &self.b_c
    }

    pub fn grid(&self) -> &TransportGrid {
        &self.grid
    }

    pub fn travel_time(&self) -> &TravelTimeMap {
        &self.tt
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.grid.h
    }

    pub fn edge_samples(&self, j: usize) -> Vec<f64> {
        self.cells[j].iter().copied().collect()
    }

    pub fn samples(&self) -> Vec<Vec<f64>> {
        (0..self.cells.len()).map(|j| self.edge_samples(j)).collect()
    }

    /// Replaces the samples, keeping the grid; each edge must keep its cell count.
    pub fn set_samples(&mut self, samples: Vec<Vec<f64>>) -> Result<()> {
        if samples.len() != self.cells.len()
            || samples.iter().zip(&self.grid.cells).any(|(s, &n)| s.len() != n)
        {
            return Err(Error::ShapeMismatch("samples do not match the grid".into()));
        }
        self.cells = samples.into_iter().map(VecDeque::from).collect();
        Ok(())
    }

    /// Position `s` of the midpoint of cell `i` on edge `j`.
    pub fn cell_position(&self, j: usize, i: usize) -> f64 {
        self.tt.inverse(j, (i as f64 + 0.5) * self.grid.h)
    }

    /// Length in `s` of cell `i` on edge `j`.
    pub fn cell_width(&self, j: usize, i: usize) -> f64 {
        let h = self.grid.h;
        self.tt.inverse(j, (i + 1) as f64 * h) - self.tt.inverse(j, i as f64 * h)
    }

    /// One shift by `h`.
    pub fn step(&mut self) {
        let exited: Vec<f64> = self.cells.iter_mut().map(|q| q.pop_front().unwrap_or(0.0)).collect();
        let inflow = &self.b_c * DVector::from_column_slice(&exited);
        for (q, v) in self.cells.iter_mut().zip(inflow.iter()) {
            q.push_back(*v);
        }
        self.exited = Some(exited);
        self.steps += 1;
    }

    /// Number of steps making up `duration`, if it is a grid time.
    pub fn steps_for(&self, duration: f64) -> Result<u64> {
        let k = (duration / self.grid.h).round();
        if !(duration >= 0.0) || (k * self.grid.h - duration).abs() > 1e-9 * duration.max(1.0) {
            return Err(Error::NonGridTime { duration, step: self.grid.h });
        }
        Ok(k as u64)
    }

    pub fn evolve(&mut self, duration: f64) -> Result<()> {
        let k = self.steps_for(duration)?;
        for _ in 0..k {
            self.step();
        }
        Ok(())
    }

    /// `Σ_j ∫_0^1 u_j ds`, cell by cell.
    pub fn mass(&self) -> f64 {
        self.cells
            .iter()
            .enumerate()
            .map(|(j, q)| {
                if let crate::coefficient::EdgeCoefficient::Constant(c) = self.c.edge(j) {
                    c * self.grid.h * q.iter().sum::<f64>()
                } else {
                    q.iter().enumerate().map(|(i, u)| u * self.cell_width(j, i)).sum()
                }
            })
            .sum()
    }

    /// Per-edge masses `𝒫u`.
    pub fn edge_masses(&self) -> Vec<f64> {
        (0..self.cells.len())
            .map(|j| self.cells[j].iter().enumerate().map(|(i, u)| u * self.cell_width(j, i)).sum())
            .collect()
    }

    /// `‖Φ⁻ c(1) u(t,1) - Φ⁺ c(0) u(t,0)‖_∞` from the last exchange; `None`
    /// before the first step or without a graph.
    pub fn kirchhoff_residual(&self) -> Option<f64> {
        let exited = self.exited.as_ref()?;
        let graph = self.graph.as_ref()?;
        let n = graph.n_vertices();
        let mut balance = vec![0.0; n];
        for (j, e) in graph.edges().iter().enumerate() {
            let inflow = *self.cells[j].back().expect("edges have cells");
            balance[e.head] += self.c.value(j, 1.0) * inflow;
            balance[e.tail] -= self.c.value(j, 0.0) * exited[j];
        }
        Some(balance.iter().fold(0.0, |a, b| a.max(b.abs())))
    }

    pub fn min_value(&self) -> f64 {
        self.cells.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b))
    }

    pub fn diagnostics(&self) -> Diagnostics {
        Diagnostics {
            mass: self.mass(),
            kirchhoff_residual: self.kirchhoff_residual(),
            min_value: self.min_value(),
        }
    }

    /// `Σ_j Σ_i |u - v| Δs` against another state on the same grid.
    pub fn l1_distance(&self, other: &GraphState) -> f64 {
        self.cells
            .iter()
            .zip(&other.cells)
            .enumerate()
            .map(|(j, (a, b))| {
                a.iter().zip(b).enumerate().map(|(i, (x, y))| (x - y).abs() * self.cell_width(j, i)).sum::<f64>()
            })
            .sum()
    }
}

/// Time after which every acyclic edge is empty: the longest chain of
/// travel times through acyclic edges.
pub fn nilpotent_extinction(report: &StructureReport, lengths: &[f64]) -> f64 {
    let acyclic = report.acyclic_edges();
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); lengths.len()];
    for (k, succ) in report.successors.iter().enumerate() {
        for &j in succ {
            preds[j].push(k);
        }
    }
    let mut memo: Vec<Option<f64>> = vec![None; lengths.len()];
    fn depth(j: usize, lengths: &[f64], preds: &[Vec<usize>], memo: &mut [Option<f64>]) -> f64 {
        if let Some(d) = memo[j] {
            return d;
        }
        // predecessors of an acyclic edge are acyclic, so this terminates
        let before = preds[j].iter().map(|&k| depth(k, lengths, preds, memo)).fold(0.0, f64::max);
        let d = lengths[j] + before;
        memo[j] = Some(d);
        d
    }
    acyclic.iter().map(|&j| depth(j, lengths, &preds, &mut memo)).fold(0.0, f64::max)
}

/// Snapped lengths `cells_j h` of a grid.
pub fn grid_lengths(grid: &TransportGrid) -> Vec<f64> {
    grid.cells.iter().map(|&c| c as f64 * grid.h).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientKind;
    use crate::generation::transport_boundary;
    use crate::graph::{analyze_structure, DEFAULT_CYCLE_CAP};

    fn velocity(values: &[f64]) -> CoefficientField {
        CoefficientField::constants(CoefficientKind::Velocity, values).unwrap()
    }

    fn setup(n: usize, pairs: &[(usize, usize)], c: &[f64], h: f64, f: impl Fn(usize, f64) -> f64) -> GraphState {
        let g = MetricGraph::from_pairs(n, pairs).unwrap();
        let c = velocity(c);
        let b = transport_boundary(&g, &c).unwrap();
        init_state(&g, &b, &c, f, h, false).unwrap()
    }

    #[test]
    fn grid_choices() {
        let g = choose_grid(&[1.0, 0.5], 0.25, true).unwrap();
        assert_eq!((g.h, g.cells.clone()), (0.25, vec![4, 2]));
        let g = choose_grid(&[1.0, 1.0 / 3.0], 0.25, true).unwrap();
        assert!((g.h - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(g.cells, vec![6, 2]);
        let g = choose_grid(&[1.0], 0.01, true).unwrap();
        assert_eq!(g.cells, vec![100]);
    }

    #[test]
    fn incommensurable_lengths() {
        let l = [1.0, 2f64.sqrt()];
        assert!(matches!(
            choose_grid(&l, 0.1, true),
            Err(Error::IncommensurableLengths { edge: 1, .. })
        ));
        let g = choose_grid(&l, 0.1, false).unwrap();
        assert!(!g.commensurable);
        assert_eq!(g.cells, vec![10, 14]);
        assert!((g.max_snap_error() - (2f64.sqrt() - 1.4)).abs() < 1e-12);
    }

    #[test]
    fn c3_constant_state_is_stationary() {
        let mut st = setup(3, &[(0, 1), (1, 2), (2, 0)], &[1.0; 3], 0.01, |_, _| 1.0);
        assert_eq!(st.grid().cells, vec![100; 3]);
        for _ in 0..50 {
            st.step();
            let d = st.diagnostics();
            assert!((d.mass - 3.0).abs() < 1e-12);
            assert_eq!(d.kirchhoff_residual, Some(0.0));
            assert_eq!(d.min_value, 1.0);
        }
    }

    #[test]
    fn c3_period_is_three() {
        let mut st = setup(3, &[(0, 1), (1, 2), (2, 0)], &[1.0; 3], 0.1, |j, s| (j as f64 + 1.0) * s * s);
        let start = st.clone();
        st.evolve(3.0).unwrap();
        assert_eq!(st.samples(), start.samples());
    }

    #[test]
    fn two_cycle_swaps_profiles() {
        let f = |j: usize, s: f64| if j == 0 && s < 0.5 { 1.0 } else { 0.0 };
        let mut st = setup(2, &[(0, 1), (1, 0)], &[1.0, 1.0], 0.125, f);
        let start = st.samples();
        st.evolve(1.0).unwrap();
        assert_eq!(st.samples(), vec![start[1].clone(), start[0].clone()]);
    }

    #[test]
    fn zero_duration_and_off_grid_times() {
        let mut st = setup(3, &[(0, 1), (1, 2), (2, 0)], &[1.0; 3], 0.25, |_, s| s);
        let start = st.samples();
        st.evolve(0.0).unwrap();
        assert_eq!(st.samples(), start);
        assert!(matches!(st.evolve(0.3), Err(Error::NonGridTime { .. })));
    }

    #[test]
    fn lollipop_feeder_drains() {
        let pairs = [(0, 1), (1, 2), (2, 3), (3, 1)];
        let mut st = setup(4, &pairs, &[1.0; 4], 0.125, |_, _| 1.0);
        let report = analyze_structure(st.graph().unwrap(), DEFAULT_CYCLE_CAP).unwrap();
        let t_star = nilpotent_extinction(&report, &grid_lengths(st.grid()));
        assert_eq!(t_star, 1.0);
        st.evolve(t_star).unwrap();
        assert!(st.edge_samples(0).iter().all(|&u| u == 0.0));
        // the feeder mass moved into the triangle
        assert!((st.mass() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn extinction_bounds() {
        let g = MetricGraph::from_pairs(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let r = analyze_structure(&g, DEFAULT_CYCLE_CAP).unwrap();
        assert_eq!(nilpotent_extinction(&r, &[1.0; 3]), 0.0);
        let g = MetricGraph::from_pairs(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 2)]).unwrap();
        let r = analyze_structure(&g, DEFAULT_CYCLE_CAP).unwrap();
        assert_eq!(nilpotent_extinction(&r, &[1.0; 5]), 2.0);
    }

    #[test]
    fn speeds_change_cell_counts_and_mass_weights() {
        let st = setup(2, &[(0, 1), (1, 0)], &[2.0, 1.0], 0.25, |_, _| 1.0);
        assert_eq!(st.grid().cells, vec![2, 4]);
        assert!((st.mass() - 2.0).abs() < 1e-15);
        assert!((st.cell_position(0, 1) - 0.75).abs() < 1e-15);
    }
}
