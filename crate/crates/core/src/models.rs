//! The two application models: age-structured cell populations with
//! mutations (a transport problem) and synaptic vesicle pools exchanging
//! neurotransmitter through their endpoints (a diffusion problem).

use std::ops::{Add, Neg, Sub};

use nalgebra::{DMatrix, DVector, Scalar};
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::coefficient::{CoefficientField, CoefficientKind};
use crate::diffusion::{assemble, evolve_diffusion, DiffusionState, Scheme};
use crate::error::{Error, Result};
use crate::generation::{robin_boundary, DiffusionBoundary, TransportBoundary};
use crate::graph::{End, MetricGraph};
use crate::linalg::{determinant_check, eigenvalues};
use crate::spectral::check_nonnegative;

pub const STOCHASTIC_TOL: f64 = 1e-12;
pub const BALANCE_TOL: f64 = 1e-12;

/// `B_w = K + Q` acting as `u(t, 1) = B_w u(t, 0)` with unit speeds.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationModel {
    pub k: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub b_w: DMatrix<f64>,
    /// Optional realization; its line-graph adjacency must contain the support of `B_w`.
    pub graph: Option<MetricGraph>,
}

pub fn build_mutation_model(k: &DMatrix<f64>, q: &DMatrix<f64>, graph: Option<&MetricGraph>) -> Result<MutationModel> {
    check_square_pair(k, q)?;
    check_nonnegative(k)?;
    check_nonnegative(q)?;
    let b_w = k + q;
    check_column_stochastic(&b_w)?;
    if let Some(g) = graph {
        check_support(g, &b_w, "B_w")?;
    }
    Ok(MutationModel { k: k.clone(), q: q.clone(), b_w, graph: graph.cloned() })
}

fn check_square_pair(k: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<()> {
    if !k.is_square() || q.shape() != k.shape() || k.nrows() == 0 {
        return Err(Error::ShapeMismatch(format!(
            "K and Q must be equal square matrices, got {:?} and {:?}",
            k.shape(),
            q.shape()
        )));
    }
    Ok(())
}

/// Nonzero `b[j][k]` needs `head_j = tail_k`.
fn check_support(g: &MetricGraph, b: &DMatrix<f64>, name: &str) -> Result<()> {
    let m = b.nrows();
    if g.n_edges() != m {
        return Err(Error::ShapeMismatch(format!("graph has {} edges, {name} is {m} x {m}", g.n_edges())));
    }
    let e = g.edges();
    for j in 0..m {
        for kk in 0..m {
            if b[(j, kk)] != 0.0 && e[j].head != e[kk].tail {
                return Err(Error::SupportMismatch(format!(
                    "{name}[{j}][{kk}] is nonzero but edge {kk} does not feed edge {j}"
                )));
            }
        }
    }
    Ok(())
}

/// The ε-family `u_t + ε⁻¹ u_x = 0`, `u(t, 1) = (K + εQ) u(t, 0)`: fast
/// ageing driven by a stochastic `K` with a signed perturbation `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedFlow {
    pub k: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub graph: Option<MetricGraph>,
}

/// `K` must be nonnegative and column stochastic; `Q` is unrestricted
/// except for its support.
pub fn build_perturbed_flow(k: &DMatrix<f64>, q: &DMatrix<f64>, graph: Option<&MetricGraph>) -> Result<PerturbedFlow> {
    check_square_pair(k, q)?;
    check_nonnegative(k)?;
    check_column_stochastic(k)?;
    if q.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("Q must be finite".into()));
    }
    if let Some(g) = graph {
        check_support(g, k, "K")?;
        check_support(g, q, "Q")?;
    }
    Ok(PerturbedFlow { k: k.clone(), q: q.clone(), graph: graph.cloned() })
}

impl PerturbedFlow {
    pub fn n_edges(&self) -> usize {
        self.k.nrows()
    }

    /// `K + εQ`, which must stay nonnegative.
    pub fn boundary_matrix(&self, eps: f64) -> Result<DMatrix<f64>> {
        let b = &self.k + &self.q * eps;
        check_nonnegative(&b)?;
        Ok(b)
    }

    /// Boundary and speeds of the member with parameter `eps`.
    pub fn member(&self, eps: f64) -> Result<(TransportBoundary, CoefficientField)> {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::InvalidParameter(format!("ε must be positive, got {eps}")));
        }
        let b_c = self.boundary_matrix(eps)?;
        let det = determinant_check(&b_c);
        let c = CoefficientField::uniform(CoefficientKind::Velocity, self.n_edges(), 1.0 / eps)?;
        Ok((TransportBoundary { b_c, is_semigroup: true, is_group: det.nonzero, det }, c))
    }
}

/// Fails with the first column whose sum is off 1 by more than [`STOCHASTIC_TOL`].
pub fn check_column_stochastic(b: &DMatrix<f64>) -> Result<()> {
    for (col, c) in b.column_iter().enumerate() {
        let sum = c.sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NotColumnStochastic { col, sum });
        }
    }
    Ok(())
}

impl MutationModel {
    pub fn n_edges(&self) -> usize {
        self.k.nrows()
    }

    pub fn velocity(&self) -> CoefficientField {
        CoefficientField::uniform(CoefficientKind::Velocity, self.n_edges(), 1.0).expect("positive speed")
    }

    /// Unit speeds make `B_c = B_w`.
    pub fn transport_boundary(&self) -> TransportBoundary {
        let det = determinant_check(&self.b_w);
        TransportBoundary { b_c: self.b_w.clone(), is_semigroup: true, is_group: det.nonzero, det }
    }

    /// Distance from 1 to the nearest eigenvalue of `B_w`.
    pub fn distance_to_one(&self) -> Result<f64> {
        Ok(eigenvalues(&self.b_w)?.iter().map(|z| (z - 1.0).norm()).fold(f64::INFINITY, f64::min))
    }
}

/// Exit rates `l_i` (at `e_i(1)`), `r_i` (at `e_i(0)`) and exchange rates
/// `l_ij`, `r_ij` between edges sharing the corresponding vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates<T = f64> {
    pub l: Vec<T>,
    pub r: Vec<T>,
    pub l_ij: Vec<Vec<T>>,
    pub r_ij: Vec<Vec<T>>,
}

impl Rates<f64> {
    pub fn zeros(m: usize) -> Self {
        Rates { l: vec![0.0; m], r: vec![0.0; m], l_ij: vec![vec![0.0; m]; m], r_ij: vec![vec![0.0; m]; m] }
    }

    /// Unit rates between every pair of adjacent endpoints, with exit rates
    /// set to the row sums so that the balance condition holds.
    pub fn balanced_unit(g: &MetricGraph) -> Self {
        let m = g.n_edges();
        let mut rates = Rates::zeros(m);
        for i in 0..m {
            for j in 0..m {
                if i == j {
                    continue;
                }
                if meets(g, i, End::One, j) {
                    rates.l_ij[i][j] = 1.0;
                }
                if meets(g, i, End::Zero, j) {
                    rates.r_ij[i][j] = 1.0;
                }
            }
            rates.l[i] = rates.l_ij[i].iter().sum();
            rates.r[i] = rates.r_ij[i].iter().sum();
        }
        rates
    }
}

/// Which end of `e_j`, if any, sits at the `end` vertex of `e_i`.
fn meeting_end(g: &MetricGraph, i: usize, end: End, j: usize) -> Option<End> {
    let v = g.edge(i).at(end);
    [End::Zero, End::One].into_iter().find(|&q| g.edge(j).at(q) == v)
}

fn meets(g: &MetricGraph, i: usize, end: End, j: usize) -> bool {
    meeting_end(g, i, end, j).is_some()
}

/// The four `m x m` blocks of the Robin matrix, in the sign convention of
/// the rate definitions: `k00_ii = -r_i`, `k11_ii = l_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct KBlocks<T: Scalar> {
    pub k00: DMatrix<T>,
    pub k01: DMatrix<T>,
    pub k10: DMatrix<T>,
    pub k11: DMatrix<T>,
}

/// Numbers the rate tables may be written in.
pub trait RateScalar: Scalar + Copy + Zero + ToPrimitive + PartialOrd + Neg<Output = Self> + Add<Output = Self> + Sub<Output = Self> {}

impl<T> RateScalar for T where T: Scalar + Copy + Zero + ToPrimitive + PartialOrd + Neg<Output = T> + Add<Output = T> + Sub<Output = T> {}

fn check_rate_shapes<T>(rates: &Rates<T>, m: usize) -> Result<()> {
    let square = |t: &Vec<Vec<T>>| t.len() == m && t.iter().all(|r| r.len() == m);
    if rates.l.len() != m || rates.r.len() != m || !square(&rates.l_ij) || !square(&rates.r_ij) {
        return Err(Error::ShapeMismatch(format!("rate tables must match the {m} edges")));
    }
    Ok(())
}

fn rate_value<T: RateScalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

pub fn build_k_blocks<T: RateScalar>(g: &MetricGraph, rates: &Rates<T>) -> Result<KBlocks<T>> {
    let m = g.n_edges();
    check_rate_shapes(rates, m)?;
    let negative = |name: &str, i: usize, j: Option<usize>, x: T| {
        Error::InvalidParameter(match j {
            Some(j) => format!("rate {name}[{i}][{j}] = {} is negative", rate_value(x)),
            None => format!("rate {name}[{i}] = {} is negative", rate_value(x)),
        })
    };
    let zero = T::zero();
    let mut b = KBlocks {
        k00: DMatrix::from_element(m, m, zero),
        k01: DMatrix::from_element(m, m, zero),
        k10: DMatrix::from_element(m, m, zero),
        k11: DMatrix::from_element(m, m, zero),
    };
    for i in 0..m {
        if rates.l[i] < zero {
            return Err(negative("l", i, None, rates.l[i]));
        }
        if rates.r[i] < zero {
            return Err(negative("r", i, None, rates.r[i]));
        }
        b.k00[(i, i)] = -rates.r[i];
        b.k11[(i, i)] = rates.l[i];
        for j in 0..m {
            let (lij, rij) = (rates.l_ij[i][j], rates.r_ij[i][j]);
            if lij < zero {
                return Err(negative("l_ij", i, Some(j), lij));
            }
            if rij < zero {
                return Err(negative("r_ij", i, Some(j), rij));
            }
            for (end, x, name) in [(End::Zero, rij, "r"), (End::One, lij, "l")] {
                if x == zero {
                    continue;
                }
                let at = if i == j { None } else { meeting_end(g, i, end, j) };
                let Some(q) = at else {
                    return Err(Error::SupportMismatch(format!(
                        "{name}_ij[{i}][{j}] > 0 but edges {i} and {j} do not meet there"
                    )));
                };
                let block = match (end, q) {
                    (End::Zero, End::Zero) => &mut b.k00,
                    (End::Zero, End::One) => &mut b.k01,
                    (End::One, End::Zero) => &mut b.k10,
                    (End::One, End::One) => &mut b.k11,
                };
                block[(i, j)] = match end {
                    End::Zero => block[(i, j)] + x,
                    End::One => block[(i, j)] - x,
                };
            }
        }
    }
    Ok(b)
}

impl<T: RateScalar> KBlocks<T> {
    pub fn n_edges(&self) -> usize {
        self.k00.nrows()
    }

    /// `[[K00, K01], [K10, K11]]`.
    pub fn assemble(&self) -> DMatrix<T> {
        let m = self.n_edges();
        DMatrix::from_fn(2 * m, 2 * m, |p, q| {
            let (i, j) = (p % m, q % m);
            match (p < m, q < m) {
                (true, true) => self.k00[(i, j)],
                (true, false) => self.k01[(i, j)],
                (false, true) => self.k10[(i, j)],
                (false, false) => self.k11[(i, j)],
            }
        })
    }

    /// `K10 + K11 - (K00 + K01)`.
    pub fn k_minus(&self) -> DMatrix<T> {
        let m = self.n_edges();
        DMatrix::from_fn(m, m, |i, j| {
            self.k10[(i, j)] + self.k11[(i, j)] - (self.k00[(i, j)] + self.k01[(i, j)])
        })
    }
}

/// `(B⁻, D⁻)` with `b_ij = l_ij + r_ij` and `d_ii = l_i + r_i`.
pub fn line_adjacency_from_rates<T: RateScalar>(rates: &Rates<T>) -> (DMatrix<T>, DMatrix<T>) {
    let m = rates.l.len();
    let b = DMatrix::from_fn(m, m, |i, j| rates.l_ij[i][j] + rates.r_ij[i][j]);
    let d = DMatrix::from_fn(m, m, |i, j| if i == j { rates.l[i] + rates.r[i] } else { T::zero() });
    (b, d)
}

/// Balance of exit and exchange rates: `Σ_k l_ik = l_i`, `Σ_k r_ik = r_i`.
pub fn check_markov(rates: &Rates<f64>) -> bool {
    let ok = |total: f64, row: &[f64]| (row.iter().sum::<f64>() - total).abs() <= BALANCE_TOL * total.abs().max(1.0);
    (0..rates.l.len()).all(|i| ok(rates.l[i], &rates.l_ij[i]) && ok(rates.r[i], &rates.r_ij[i]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynapticModel {
    pub graph: MetricGraph,
    pub rates: Rates<f64>,
    pub blocks: KBlocks<f64>,
    /// Robin matrix of the flux conditions `f' = K_fick (f(0); f(1))`.
    pub k_fick: DMatrix<f64>,
    pub k_minus: DMatrix<f64>,
    pub markov: bool,
    /// Pool labels, one per edge.
    pub names: Vec<String>,
}

/// Validates the rates against the graph and derives all model matrices.
/// Adjacent endpoint pairs with a zero exchange rate are an error when
/// `strict` and are reported in the returned warnings otherwise.
pub fn build_synaptic_model(g: &MetricGraph, rates: &Rates<f64>, strict: bool) -> Result<(SynapticModel, Vec<String>)> {
    if !g.is_strongly_connected() {
        return Err(Error::NotStronglyConnected);
    }
    let blocks = build_k_blocks(g, rates)?;
    let m = g.n_edges();
    let mut warnings = Vec::new();
    for i in 0..m {
        for j in (0..m).filter(|&j| j != i) {
            for (end, table, name) in [(End::One, &rates.l_ij, "l"), (End::Zero, &rates.r_ij, "r")] {
                if meets(g, i, end, j) && table[i][j] == 0.0 {
                    let msg = format!("{name}_ij[{i}][{j}] is zero although edges {i} and {j} are adjacent");
                    if strict {
                        return Err(Error::SupportMismatch(msg));
                    }
                    warnings.push(msg);
                }
            }
        }
    }
    // the flux of the diffusion problem leaves through the exit rates
    let k_fick = -blocks.assemble();
    let k_minus = blocks.k_minus();
    let model = SynapticModel {
        graph: g.clone(),
        rates: rates.clone(),
        markov: check_markov(rates),
        blocks,
        k_fick,
        k_minus,
        names: (0..m).map(|j| format!("pool{j}")).collect(),
    };
    Ok((model, warnings))
}

impl SynapticModel {
    pub fn n_edges(&self) -> usize {
        self.graph.n_edges()
    }

    pub fn diffusivity(&self) -> CoefficientField {
        CoefficientField::uniform(CoefficientKind::Diffusivity, self.n_edges(), 1.0).expect("positive")
    }

    pub fn boundary(&self) -> Result<DiffusionBoundary> {
        robin_boundary(&self.k_fick)
    }

    /// Largest coefficient of `d/dt Σ ∫u` as a linear form in the endpoint
    /// traces; zero exactly when every state conserves mass.
    pub fn mass_flux_defect(&self) -> f64 {
        let m = self.n_edges();
        let k = &self.k_fick;
        (0..2 * m)
            .map(|q| ((0..m).map(|i| k[(m + i, q)] - k[(i, q)]).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }
}

/// Named rate sets shipped with the library.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Two pools on an antiparallel pair of edges, all rates 1.
    TwoPool,
    /// Large, small and immediately available pools on a directed triangle,
    /// unit rates between neighbours.
    ThreePool,
}

impl Preset {
    pub fn graph(self) -> MetricGraph {
        match self {
            Preset::TwoPool => MetricGraph::from_pairs(2, &[(0, 1), (1, 0)]),
            Preset::ThreePool => MetricGraph::from_pairs(3, &[(0, 1), (1, 2), (2, 0)]),
        }
        .expect("preset graphs are valid")
    }

    pub fn rates(self) -> Rates<f64> {
        Rates::balanced_unit(&self.graph())
    }

    pub fn names(self) -> Vec<String> {
        match self {
            Preset::TwoPool => vec!["pool0".into(), "pool1".into()],
            Preset::ThreePool => vec!["large".into(), "small".into(), "immediate".into()],
        }
    }

    pub fn build(self) -> SynapticModel {
        let (mut model, _) = build_synaptic_model(&self.graph(), &self.rates(), true).expect("preset rates are valid");
        model.names = self.names();
        model
    }
}

/// Repeated stimulation: every `period` time units a fraction of the mass
/// in `pool` is released, i.e. removed in proportion to its profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stimulation {
    pub pool: usize,
    pub period: f64,
    pub impulses: usize,
    pub release_fraction: f64,
    pub cells: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HabituationTrace {
    pub times: Vec<f64>,
    /// Share of the total mass held by the stimulated pool just before each impulse.
    pub shares: Vec<f64>,
    /// Mass released by each impulse.
    pub released: Vec<f64>,
}

/// Runs the stimulation protocol from the uniform state `u ≡ 1`.
pub fn habituation(model: &SynapticModel, stim: &Stimulation) -> Result<HabituationTrace> {
    if stim.pool >= model.n_edges() {
        return Err(Error::InvalidParameter(format!("pool {} does not exist", stim.pool)));
    }
    if !(0.0..=1.0).contains(&stim.release_fraction) {
        return Err(Error::InvalidParameter("release fraction must lie in [0, 1]".into()));
    }
    let gen = assemble(&model.graph, &model.diffusivity(), &model.boundary()?, stim.cells)?;
    let mut state = DiffusionState::new(DVector::from_element(gen.dim(), 1.0));
    let mut trace = HabituationTrace { times: Vec::new(), shares: Vec::new(), released: Vec::new() };
    for _ in 0..stim.impulses {
        let masses = gen.edge_masses(&state.u);
        let pool = masses[stim.pool];
        trace.times.push(state.t);
        trace.shares.push(pool / masses.sum());
        trace.released.push(stim.release_fraction * pool);
        for idx in gen.edge_indices(stim.pool) {
            state.u[idx] *= 1.0 - stim.release_fraction;
        }
        state = evolve_diffusion(&gen, &state, stim.period, stim.dt, Scheme::BackwardEuler)?;
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::Rational;
    use crate::spectral::imprimitivity_index;

    fn perm3() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
    }

    #[test]
    fn cyclic_mutation_model_is_periodic() {
        let g = MetricGraph::from_pairs(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        // e_j feeds e_k when head_k = tail_j: e0 -> e2 -> e1 -> e0
        let k = DMatrix::from_fn(3, 3, |j, kk| if g.edge(j).head == g.edge(kk).tail { 1.0 } else { 0.0 });
        let model = build_mutation_model(&k, &DMatrix::zeros(3, 3), Some(&g)).unwrap();
        assert!(model.distance_to_one().unwrap() < 1e-10);
        assert_eq!(imprimitivity_index(&model.b_w).unwrap(), 3);
        assert!(model.transport_boundary().is_group);
    }

    #[test]
    fn perturbed_permutation_is_primitive() {
        let k = perm3() * 0.9;
        let q = DMatrix::from_element(3, 3, 0.1 / 3.0);
        let model = build_mutation_model(&k, &q, None).unwrap();
        assert_eq!(imprimitivity_index(&model.b_w).unwrap(), 1);
    }

    #[test]
    fn mutation_model_errors() {
        let mut k = perm3();
        k[(1, 0)] = 0.9;
        assert!(matches!(
            build_mutation_model(&k, &DMatrix::zeros(3, 3), None),
            Err(Error::NotColumnStochastic { col: 0, .. })
        ));
        let mut q = DMatrix::zeros(3, 3);
        q[(0, 0)] = -0.1;
        assert!(matches!(build_mutation_model(&perm3(), &q, None), Err(Error::NotNonnegative { .. })));
        // the transposed permutation runs against the triangle's orientation
        let g = MetricGraph::from_pairs(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        assert!(build_mutation_model(&perm3(), &DMatrix::zeros(3, 3), Some(&g)).is_ok());
        assert!(matches!(
            build_mutation_model(&perm3().transpose(), &DMatrix::zeros(3, 3), Some(&g)),
            Err(Error::SupportMismatch(_))
        ));
    }

    #[test]
    fn two_edge_blocks_by_hand() {
        // e0 = 0 -> 1 and e1 = 1 -> 2 share vertex 1 = e0(0) = e1(1)
        let g = MetricGraph::from_pairs(3, &[(0, 1), (1, 2)]).unwrap();
        let mut rates = Rates::zeros(2);
        rates.r[0] = 1.0;
        rates.r_ij[0][1] = 0.5;
        rates.l[1] = 2.0;
        rates.l_ij[1][0] = 0.25;
        let b = build_k_blocks(&g, &rates).unwrap();
        #[rustfmt::skip]
        let expect = DMatrix::from_row_slice(4, 4, &[
            -1.0, 0.0, 0.0, 0.5,
            0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0,
            -0.25, 0.0, 0.0, 2.0,
        ]);
        assert_eq!(b.assemble(), expect);
        assert!(b.k00.diagonal().iter().all(|&x| x <= 0.0));
        assert!(b.k11.diagonal().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn zero_rates_give_neumann() {
        let g = Preset::ThreePool.graph();
        let b = build_k_blocks(&g, &Rates::zeros(3)).unwrap();
        assert_eq!(b.assemble(), DMatrix::zeros(6, 6));
        assert!(check_markov(&Rates::zeros(3)));
    }

    #[test]
    fn rates_off_adjacency_are_rejected() {
        let g = MetricGraph::from_pairs(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let mut rates = Rates::zeros(3);
        rates.l_ij[0][2] = 1.0;
        assert!(matches!(build_k_blocks(&g, &rates), Err(Error::SupportMismatch(_))));
    }

    #[test]
    fn k_minus_two_ways_in_exact_arithmetic() {
        let g = Preset::ThreePool.graph();
        let base = Preset::ThreePool.rates();
        let q = |x: f64, salt: i64| if x == 0.0 { Rational::from_integer(0) } else { Rational::new(2 + salt, 3 + salt % 4) };
        let rates: Rates<Rational> = Rates {
            l: (0..3).map(|i| Rational::new(7 + i as i64, 5)).collect(),
            r: (0..3).map(|i| Rational::new(1 + i as i64, 2)).collect(),
            l_ij: base.l_ij.iter().enumerate().map(|(i, row)| row.iter().enumerate().map(|(j, &x)| q(x, (3 * i + j) as i64)).collect()).collect(),
            r_ij: base.r_ij.iter().enumerate().map(|(i, row)| row.iter().enumerate().map(|(j, &x)| q(x, (5 * i + j) as i64)).collect()).collect(),
        };
        let blocks = build_k_blocks(&g, &rates).unwrap();
        let (b, d) = line_adjacency_from_rates(&rates);
        assert_eq!(blocks.k_minus(), d - b);
    }

    #[test]
    fn markov_balance() {
        let rates = Preset::ThreePool.rates();
        assert!(check_markov(&rates));
        let mut leak = rates.clone();
        leak.l[0] = 1.5;
        assert!(!check_markov(&leak));
    }

    #[test]
    fn presets() {
        let two = Preset::TwoPool.build();
        assert_eq!(two.k_minus, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
        assert!(two.markov);
        assert_eq!(two.mass_flux_defect(), 0.0);
        let three = Preset::ThreePool.build();
        assert!((&three.k_minus * DVector::from_element(3, 1.0)).amax() < 1e-15);
        assert_eq!(three.names[2], "immediate");
    }

    #[test]
    fn strictness_on_missing_rates() {
        let g = Preset::ThreePool.graph();
        let mut rates = Preset::ThreePool.rates();
        let (i, j) = (0..3)
            .flat_map(|i| (0..3).map(move |j| (i, j)))
            .find(|&(i, j)| rates.l_ij[i][j] > 0.0)
            .unwrap();
        rates.l_ij[i][j] = 0.0;
        rates.l[i] = 0.0;
        assert!(matches!(build_synaptic_model(&g, &rates, true), Err(Error::SupportMismatch(_))));
        let (_, warnings) = build_synaptic_model(&g, &rates, false).unwrap();
        assert_eq!(warnings.len(), 1);
        let path = MetricGraph::from_pairs(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(matches!(
            build_synaptic_model(&path, &Rates::zeros(2), false),
            Err(Error::NotStronglyConnected)
        ));
    }

    #[test]
    fn habituation_depletes_the_immediate_pool() {
        let model = Preset::ThreePool.build();
        let stim = Stimulation { pool: 2, period: 0.05, impulses: 6, release_fraction: 0.5, cells: 16, dt: 0.005 };
        let trace = habituation(&model, &stim).unwrap();
        assert!(trace.shares.windows(2).all(|w| w[1] < w[0]), "{:?}", trace.shares);
        assert!(trace.released.windows(2).all(|w| w[1] < w[0]));
    }
}
