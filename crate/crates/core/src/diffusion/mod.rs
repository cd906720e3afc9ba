//! Implicit finite-volume solver for `u_t = a(s) u_ss` on every edge.
//!
//! Each edge carries `N` interior nodes at `s_i = i Δs`, `Δs = 1/(N+1)`.
//! Standard conditions share one unknown per vertex, owning half a cell on
//! every incident edge, so continuity is exact and the vertex row is the
//! Kirchhoff balance of two-point fluxes. Robin conditions keep one
//! unknown per edge end, with the exchange flux `a f' = a (K traces)`.

mod block;

pub use block::{BlockOperator, BlockSolver, Tridiagonal};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coefficient::CoefficientField;
use crate::error::{Error, Result};
use crate::generation::{BoundaryKind, DiffusionBoundary};
use crate::graph::{End, MetricGraph};
use crate::linalg::{eigenvalues, kernel_basis};

pub const MIN_CELLS: usize = 4;
const KERNEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Scheme {
    #[default]
    #[serde(rename = "be")]
    BackwardEuler,
    #[serde(rename = "tr")]
    Trapezoidal,
}

impl Scheme {
    fn theta(self) -> f64 {
        match self {
            Scheme::BackwardEuler => 1.0,
            Scheme::Trapezoidal => 0.5,
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "be" => Ok(Scheme::BackwardEuler),
            "tr" => Ok(Scheme::Trapezoidal),
            other => Err(Error::InvalidParameter(format!("unknown scheme {other:?}, expected be or tr"))),
        }
    }
}

/// Discrete generator `A_h` with its lumped mass weights.
#[derive(Debug, Clone)]
pub struct DiscreteGenerator {
    graph: MetricGraph,
    kind: BoundaryKind,
    robin_k: Option<DMatrix<f64>>,
    a: CoefficientField,
    cells: usize,
    ds: f64,
    /// Coupling index of the `s = 0` and `s = 1` end of each edge.
    ends: Vec<[usize; 2]>,
    op: BlockOperator,
    mass: DVector<f64>,
}

/// Builds `A_h` for the given vertex conditions.
pub fn assemble(
    g: &MetricGraph,
    a: &CoefficientField,
    boundary: &DiffusionBoundary,
    cells: usize,
) -> Result<DiscreteGenerator> {
    let m = g.n_edges();
    a.check_len(m)?;
    if cells < MIN_CELLS {
        return Err(Error::InvalidParameter(format!("need at least {MIN_CELLS} cells per edge, got {cells}")));
    }
    if boundary.n_edges() != m {
        return Err(Error::ShapeMismatch(format!("boundary has {} edges, graph has {m}", boundary.n_edges())));
    }
    if !boundary.det.nonzero {
        return Err(Error::SingularBoundaryRows(format!("determinant {:e}", boundary.det.det)));
    }
    let ds = 1.0 / (cells + 1) as f64;
    let n_c = match boundary.kind {
        BoundaryKind::Standard => g.n_vertices(),
        BoundaryKind::Robin => 2 * m,
    };
    let ends: Vec<[usize; 2]> = match boundary.kind {
        BoundaryKind::Standard => g.edges().iter().map(|e| [e.tail, e.head]).collect(),
        BoundaryKind::Robin => (0..m).map(|j| [j, m + j]).collect(),
    };
    let mut op = BlockOperator::zeros(n_c, m, cells);
    let inv2 = 1.0 / (ds * ds);
    for j in 0..m {
        let t = &mut op.edges[j];
        for i in 0..cells {
            let aij = a.value(j, (i + 1) as f64 * ds) * inv2;
            t.diag[i] = -2.0 * aij;
            t.lower[i] = aij;
            t.upper[i] = aij;
        }
        let a_first = op.edges[j].lower[0];
        let a_last = op.edges[j].upper[cells - 1];
        op.to_coupling.push((j, 0, ends[j][0], a_first));
        op.to_coupling.push((j, cells - 1, ends[j][1], a_last));
    }

    let mut mass = DVector::from_element(op.dim(), ds);
    match boundary.kind {
        BoundaryKind::Standard => {
            for v in 0..g.n_vertices() {
                let inc = g.incident(v);
                let mv = inc.len() as f64 * ds / 2.0;
                mass[v] = mv;
                for (j, end) in inc {
                    let (s, i) = match end {
                        End::Zero => (0.0, 0),
                        End::One => (1.0, cells - 1),
                    };
                    let w = a.value(j, s) / (ds * mv);
                    op.coupling[(v, v)] -= w;
                    op.from_interior.push((v, j, i, w));
                }
            }
        }
        BoundaryKind::Robin => {
            let k = boundary.robin_k.as_ref().expect("Robin boundary carries K");
            for j in 0..m {
                mass[j] = ds / 2.0;
                mass[m + j] = ds / 2.0;
                let (a0, a1) = (a.value(j, 0.0), a.value(j, 1.0));
                let scale = 2.0 / ds;
                op.coupling[(j, j)] -= scale * a0 / ds;
                op.from_interior.push((j, j, 0, scale * a0 / ds));
                op.coupling[(m + j, m + j)] -= scale * a1 / ds;
                op.from_interior.push((m + j, j, cells - 1, scale * a1 / ds));
                for q in 0..2 * m {
                    op.coupling[(j, q)] -= scale * a0 * k[(j, q)];
                    op.coupling[(m + j, q)] += scale * a1 * k[(m + j, q)];
                }
            }
        }
    }
    Ok(DiscreteGenerator {
        graph: g.clone(),
        kind: boundary.kind,
        robin_k: boundary.robin_k.clone(),
        a: a.clone(),
        cells,
        ds,
        ends,
        op,
        mass,
    })
}

impl DiscreteGenerator {
    pub fn kind(&self) -> BoundaryKind {
        self.kind
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn ds(&self) -> f64 {
        self.ds
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn graph(&self) -> &MetricGraph {
        &self.graph
    }

    pub fn operator(&self) -> &BlockOperator {
        &self.op
    }

    /// Lumped mass (quadrature) weights.
    pub fn mass_weights(&self) -> &DVector<f64> {
        &self.mass
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        self.op.apply(u)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.op.to_dense()
    }

    /// Positions of the `N + 2` nodes of an edge.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.cells + 2).map(|i| i as f64 * self.ds).collect()
    }

    /// Values of `u` at the nodes of edge `j`, ends included.
    pub fn edge_values(&self, u: &DVector<f64>, j: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.cells + 2);
        out.push(u[self.ends[j][0]]);
        let base = self.op.interior_index(j, 0);
        out.extend(u.rows(base, self.cells).iter());
        out.push(u[self.ends[j][1]]);
        out
    }

    /// Indices of the unknowns carrying values of edge `j`, ends first.
    pub fn edge_indices(&self, j: usize) -> Vec<usize> {
        let base = self.op.interior_index(j, 0);
        let mut out = vec![self.ends[j][0], self.ends[j][1]];
        out.extend(base..base + self.cells);
        out
    }

    /// Samples `f(j, s)` at the nodes; a shared vertex unknown takes the
    /// mean of the incident end values.
    pub fn sample(&self, f: impl Fn(usize, f64) -> f64) -> DVector<f64> {
        let mut u = DVector::zeros(self.dim());
        let mut count = vec![0usize; self.op.n_c];
        for j in 0..self.graph.n_edges() {
            for (e, s) in [(0, 0.0), (1, 1.0)] {
                u[self.ends[j][e]] += f(j, s);
                count[self.ends[j][e]] += 1;
            }
            for i in 0..self.cells {
                u[self.op.interior_index(j, i)] = f(j, (i + 1) as f64 * self.ds);
            }
        }
        for (q, &c) in count.iter().enumerate() {
            u[q] /= c.max(1) as f64;
        }
        u
    }

    /// `Σ_j ∫ u_j ds` by the trapezoid rule on every edge.
    pub fn mass(&self, u: &DVector<f64>) -> f64 {
        self.mass.dot(u)
    }

    /// Per-edge integrals `𝒫u`.
    pub fn edge_masses(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.graph.n_edges(), |j, _| {
            let v = self.edge_values(u, j);
            let inner: f64 = v[1..v.len() - 1].iter().sum();
            (inner + 0.5 * (v[0] + v[v.len() - 1])) * self.ds
        })
    }
}

/// Unknown vector at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    pub u: DVector<f64>,
    pub t: f64,
}

impl DiffusionState {
    pub fn new(u: DVector<f64>) -> Self {
        DiffusionState { u, t: 0.0 }
    }
}

/// Factorized one-step map `(I - θ Δt A) u⁺ = (I + (1-θ) Δt A) u`.
#[derive(Debug, Clone)]
pub struct Stepper {
    explicit: Option<BlockOperator>,
    solver: BlockSolver,
    dt: f64,
}

impl Stepper {
    pub fn new(gen: &DiscreteGenerator, dt: f64, scheme: Scheme) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        let theta = scheme.theta();
        let solver = BlockSolver::new(gen.op.shifted(1.0, -theta * dt))?;
        let explicit = (theta < 1.0).then(|| gen.op.shifted(1.0, (1.0 - theta) * dt));
        Ok(Stepper { explicit, solver, dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, state: &mut DiffusionState) -> Result<()> {
        let rhs = match &self.explicit {
            Some(e) => e.apply(&state.u),
            None => state.u.clone(),
        };
        state.u = self.solver.solve(&rhs)?;
        state.t += self.dt;
        Ok(())
    }
}

/// Number of steps of size `dt` making up `duration`.
pub fn step_count(duration: f64, dt: f64) -> Result<usize> {
    let k = (duration / dt).round();
    if !(duration >= 0.0) || (k * dt - duration).abs() > 1e-9 * duration.max(1.0) {
        return Err(Error::NonGridTime { duration, step: dt });
    }
    Ok(k as usize)
}

/// Advances `state` by `duration`, calling `observe` after every step.
pub fn evolve_diffusion_with(
    gen: &DiscreteGenerator,
    state: &DiffusionState,
    duration: f64,
    dt: f64,
    scheme: Scheme,
    mut observe: impl FnMut(&DiffusionState),
) -> Result<DiffusionState> {
    let steps = step_count(duration, dt)?;
    let stepper = Stepper::new(gen, dt, scheme)?;
    let mut s = state.clone();
    let t0 = s.t;
    for k in 1..=steps {
        stepper.step(&mut s)?;
        s.t = t0 + k as f64 * dt;
        observe(&s);
    }
    Ok(s)
}

pub fn evolve_diffusion(
    gen: &DiscreteGenerator,
    state: &DiffusionState,
    duration: f64,
    dt: f64,
    scheme: Scheme,
) -> Result<DiffusionState> {
    evolve_diffusion_with(gen, state, duration, dt, scheme, |_| {})
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// Largest disagreement of edge values at a vertex.
    pub continuity_res: f64,
    /// Largest vertex-condition defect with 3-point one-sided derivatives.
    pub flux_res: f64,
    pub mass: f64,
}

pub fn residuals(gen: &DiscreteGenerator, u: &DVector<f64>) -> Residuals {
    let g = &gen.graph;
    let m = g.n_edges();
    let ds = gen.ds;
    let values: Vec<Vec<f64>> = (0..m).map(|j| gen.edge_values(u, j)).collect();
    let deriv = |j: usize, end: End| {
        let v = &values[j];
        let n = v.len() - 1;
        match end {
            End::Zero => (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * ds),
            End::One => (3.0 * v[n] - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * ds),
        }
    };
    let trace = |j: usize, end: End| match end {
        End::Zero => values[j][0],
        End::One => values[j][values[j].len() - 1],
    };

    let mut continuity_res: f64 = 0.0;
    for v in 0..g.n_vertices() {
        let vals: Vec<f64> = g.incident(v).into_iter().map(|(j, e)| trace(j, e)).collect();
        let hi = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lo = vals.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        continuity_res = continuity_res.max(hi - lo);
    }

    let flux_res = match (&gen.kind, &gen.robin_k) {
        (BoundaryKind::Robin, Some(k)) => {
            let mut traces = DVector::zeros(2 * m);
            for j in 0..m {
                traces[j] = trace(j, End::Zero);
                traces[m + j] = trace(j, End::One);
            }
            let kt = k * traces;
            (0..m)
                .flat_map(|j| {
                    [
                        (deriv(j, End::Zero) - kt[j]).abs(),
                        (deriv(j, End::One) - kt[m + j]).abs(),
                    ]
                })
                .fold(0.0, f64::max)
        }
        _ => (0..g.n_vertices())
            .map(|v| {
                g.incident(v)
                    .into_iter()
                    .map(|(j, end)| match end {
                        End::One => gen.a.value(j, 1.0) * deriv(j, End::One),
                        End::Zero => -gen.a.value(j, 0.0) * deriv(j, End::Zero),
                    })
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max),
    };
    Residuals { continuity_res, flux_res, mass: gen.mass(u) }
}

/// Spectral projection onto `ker A_h` and the decay rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    /// Right kernel vector (the constants under standard conditions).
    pub right: DVector<f64>,
    /// Left kernel vector, scaled so that `left · right = 1`.
    pub left: DVector<f64>,
    /// Largest real part among the nonzero eigenvalues.
    pub lambda: f64,
}

impl Equilibrium {
    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.right * self.left.dot(u)
    }
}

/// Kernel vectors of `A_h` and `A_h^T` plus the spectral gap, from dense
/// factorizations.
pub fn equilibrium(gen: &DiscreteGenerator) -> Result<Equilibrium> {
    let a = gen.to_dense();
    let right = kernel_basis(&a, KERNEL_TOL);
    if right.len() != 1 {
        return Err(Error::KernelDimensionNotOne(right.len()));
    }
    let left = kernel_basis(&a.transpose(), KERNEL_TOL);
    if left.len() != 1 {
        return Err(Error::KernelDimensionNotOne(left.len()));
    }
    let mut right = right.into_iter().next().expect("one vector");
    let mut left = left.into_iter().next().expect("one vector");
    // scale the right vector to unit mean value
    let mean = gen.mass(&right) / gen.mass(&DVector::from_element(right.len(), 1.0));
    right /= mean;
    let pairing = left.dot(&right);
    if pairing.abs() < 1e-14 {
        return Err(Error::EigenFailure("kernel vectors are orthogonal".into()));
    }
    left /= pairing;

    let mut eig: Vec<(f64, f64)> = spectrum(gen, &a)?;
    eig.sort_by(|x, y| x.0.hypot(x.1).total_cmp(&y.0.hypot(y.1)));
    let lambda = eig[1..].iter().map(|z| z.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(Equilibrium { right, left, lambda })
}

/// Eigenvalues of `A_h` as `(re, im)`. Uses the symmetric solver when
/// `M^{1/2} A_h M^{-1/2}` is symmetric.
fn spectrum(gen: &DiscreteGenerator, a: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    let sq: Vec<f64> = gen.mass.iter().map(|w| w.sqrt()).collect();
    let sym = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| sq[i] * a[(i, j)] / sq[j]);
    let asym = (&sym - sym.transpose()).amax();
    if asym <= 1e-12 * sym.amax() {
        let sym = (&sym + sym.transpose()) * 0.5;
        let ev = sym.symmetric_eigenvalues();
        return Ok(ev.iter().map(|&x| (x, 0.0)).collect());
    }
    Ok(eigenvalues(a)?.into_iter().map(|z| (z.re, z.im)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::CoefficientKind;
    use crate::generation::{diffusion_boundary_standard, robin_boundary};
    use std::f64::consts::PI;

    fn standard(n: usize, pairs: &[(usize, usize)], cells: usize) -> DiscreteGenerator {
        let g = MetricGraph::from_pairs(n, pairs).unwrap();
        let a = CoefficientField::uniform(CoefficientKind::Diffusivity, g.n_edges(), 1.0).unwrap();
        let b = diffusion_boundary_standard(&g, &a).unwrap();
        assemble(&g, &a, &b, cells).unwrap()
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let gen = standard(4, &[(0, 1), (0, 2), (0, 3)], 16);
        let ones = DVector::from_element(gen.dim(), 1.0);
        assert!(gen.apply(&ones).amax() < 1e-10);
        assert!((gen.mass(&ones) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn neumann_interval_gap() {
        let gen = standard(2, &[(0, 1)], 128);
        let eq = equilibrium(&gen).unwrap();
        assert!((eq.lambda + PI * PI).abs() < 0.01 * PI * PI, "lambda = {}", eq.lambda);
        // mean-value projection
        let u = gen.sample(|_, s| s);
        let p = eq.project(&u);
        assert!((p.amax() - 0.5).abs() < 1e-10 && (p.min() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn star_equilibrium_value() {
        let gen = standard(4, &[(0, 1), (0, 2), (0, 3)], 32);
        let eq = equilibrium(&gen).unwrap();
        let u = gen.sample(|j, s| j as f64 + s);
        let p = eq.project(&u);
        let expected = gen.mass(&u) / 3.0;
        assert!((p - DVector::from_element(gen.dim(), expected)).amax() < 1e-10);
        assert!((eq.lambda + PI * PI / 4.0).abs() < 0.01);
    }

    #[test]
    fn manufactured_residual_is_second_order() {
        // cos(2πs) on a 2-cycle is continuous with zero end fluxes
        let err = |cells| {
            let gen = standard(2, &[(0, 1), (1, 0)], cells);
            let u = gen.sample(|_, s| (2.0 * PI * s).cos());
            let exact = gen.sample(|_, s| -4.0 * PI * PI * (2.0 * PI * s).cos());
            (gen.apply(&u) - exact).amax()
        };
        let (e1, e2) = (err(32), err(64));
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn neumann_decay_matches_separation_of_variables() {
        let gen = standard(2, &[(0, 1)], 128);
        let s0 = DiffusionState::new(gen.sample(|_, s| (PI * s).cos()));
        let s1 = evolve_diffusion(&gen, &s0, 0.1, 1e-4, Scheme::BackwardEuler).unwrap();
        let exact = gen.sample(|_, s| (-PI * PI * 0.1).exp() * (PI * s).cos());
        assert!((s1.u - exact).amax() < 1e-3);
    }

    #[test]
    fn constants_stay_put_and_star_stays_positive() {
        let gen = standard(4, &[(0, 1), (0, 2), (0, 3)], 16);
        let c = DiffusionState::new(DVector::from_element(gen.dim(), 2.5));
        let after = evolve_diffusion(&gen, &c, 0.5, 0.01, Scheme::Trapezoidal).unwrap();
        assert!((after.u.add_scalar(-2.5)).amax() < 1e-13);

        let spike = DiffusionState::new(gen.sample(|j, s| if j == 1 && s > 0.7 { 1.0 } else { 0.0 }));
        let stepper = Stepper::new(&gen, 0.05, Scheme::BackwardEuler).unwrap();
        let mut st = spike.clone();
        for _ in 0..40 {
            stepper.step(&mut st).unwrap();
            assert!(st.u.min() >= 0.0);
        }
        assert!((gen.mass(&st.u) - gen.mass(&spike.u)).abs() < 1e-13);
    }

    #[test]
    fn residuals_in_standard_mode() {
        let gen = standard(2, &[(0, 1), (1, 0)], 64);
        let u = gen.sample(|_, s| (2.0 * PI * s).cos());
        let r = residuals(&gen, &u);
        assert_eq!(r.continuity_res, 0.0);
        assert!(r.flux_res < 1e-2);
    }

    #[test]
    fn robin_with_zero_matrix_is_neumann() {
        let g = MetricGraph::from_pairs(2, &[(0, 1)]).unwrap();
        let a = CoefficientField::uniform(CoefficientKind::Diffusivity, 1, 1.0).unwrap();
        let b = robin_boundary(&DMatrix::zeros(2, 2)).unwrap();
        let robin = assemble(&g, &a, &b, 32).unwrap();
        let std_gen = standard(2, &[(0, 1)], 32);
        // identical operators up to the ordering of the two end unknowns
        let u = robin.sample(|_, s| s * s);
        let v = std_gen.sample(|_, s| s * s);
        assert!((robin.edge_values(&robin.apply(&u), 0)
            .iter()
            .zip(std_gen.edge_values(&std_gen.apply(&v), 0))
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max))
            < 1e-9);
    }

    #[test]
    fn too_few_cells() {
        let g = MetricGraph::from_pairs(2, &[(0, 1)]).unwrap();
        let a = CoefficientField::uniform(CoefficientKind::Diffusivity, 1, 1.0).unwrap();
        let b = diffusion_boundary_standard(&g, &a).unwrap();
        assert!(matches!(assemble(&g, &a, &b, 3), Err(Error::InvalidParameter(_))));
    }
}
