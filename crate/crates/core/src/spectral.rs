//! Perron pairs, cycle commensurability, periods and long-term classification.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::coefficient::{travel_time, CoefficientField};
use crate::error::{Error, Result};
use crate::graph::{analyze_adjacency, analyze_structure, line_matrices, EdgeClass, MetricGraph, StructureReport};
use crate::linalg::{eigenvalues, numerical_rank, smallest_singular_pair};
use crate::rational::{self, Rational};
use crate::transport::nilpotent_extinction;

/// Relative tolerance on the spectral-radius circle.
pub const PEAK_TOL: f64 = 1e-8;
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PerronPair {
    pub lambda: f64,
    /// Left eigenvector, scaled so that `e_l · e_r = 1`.
    pub e_l: DVector<f64>,
    /// Right eigenvector, nonnegative with unit sum.
    pub e_r: DVector<f64>,
    pub irreducible: bool,
}

impl PerronPair {
    /// Rank-one projection `e_r e_l^T`.
    pub fn projection(&self) -> DMatrix<f64> {
        &self.e_r * self.e_l.transpose()
    }
}

pub fn check_nonnegative(m: &DMatrix<f64>) -> Result<()> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            let v = m[(r, c)];
            if !(v >= 0.0) {
                return Err(Error::NotNonnegative { row: r, col: c, value: v });
            }
        }
    }
    Ok(())
}

fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    let eig = eigenvalues(m)?;
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

pub fn is_irreducible(m: &DMatrix<f64>) -> bool {
    match analyze_adjacency(m, 0) {
        Ok(r) => r.components.len() == 1 && (m.nrows() == 1 || r.cyclic[0]),
        // the cap of 0 trips as soon as a cycle exists; recheck without it
        Err(_) => {
            let r = analyze_adjacency(m, usize::MAX).expect("no cap");
            r.components.len() == 1
        }
    }
}

/// Left and right eigenvectors of a nonnegative matrix for `target`
/// (default: the spectral radius).
pub fn perron_pair(m: &DMatrix<f64>, target: Option<f64>) -> Result<PerronPair> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::ShapeMismatch("Perron pair needs a non-empty square matrix".into()));
    }
    check_nonnegative(m)?;
    let n = m.nrows();
    let lambda = match target {
        Some(l) => l,
        None => spectral_radius(m)?,
    };
    let shifted = m - DMatrix::identity(n, n) * lambda;
    let (_, mut e_r) = smallest_singular_pair(&shifted);
    let (_, mut e_l) = smallest_singular_pair(&shifted.transpose());
    let s = e_r.sum();
    if s == 0.0 || !s.is_finite() {
        return Err(Error::EigenFailure("right eigenvector sums to zero".into()));
    }
    e_r /= s;
    // clear round-off sign noise on zero entries
    e_r.apply(|x| {
        if x.abs() < 1e-14 {
            *x = 0.0
        }
    });
    let pairing = e_l.dot(&e_r);
    if pairing == 0.0 || !pairing.is_finite() {
        return Err(Error::EigenFailure("left and right eigenvectors are orthogonal".into()));
    }
    e_l /= pairing;
    Ok(PerronPair { lambda, e_l, e_r, irreducible: is_irreducible(m) })
}

/// Fails unless the eigenvalue 1 of `k` is semisimple:
/// `rank(K - I) = rank((K - I)^2)`.
pub fn check_semisimple_one(k: &DMatrix<f64>) -> Result<()> {
    let n = k.nrows();
    let a = k - DMatrix::identity(n, n);
    let rank1 = numerical_rank(&a, RANK_TOL);
    let rank2 = numerical_rank(&(&a * &a), RANK_TOL);
    if rank1 != rank2 {
        return Err(Error::SemisimplicityFailure { rank1, rank2 });
    }
    Ok(())
}

/// Number of eigenvalues on the spectral-radius circle.
pub fn imprimitivity_index(m: &DMatrix<f64>) -> Result<usize> {
    check_nonnegative(m)?;
    if !is_irreducible(m) {
        return Err(Error::NotIrreducible);
    }
    let eig = eigenvalues(m)?;
    let rho = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol = PEAK_TOL * rho.max(1.0);
    Ok(eig.iter().filter(|z| (z.norm() - rho).abs() <= tol).count())
}

/// Combinatorial period of the digraph of `m` (gcd of cycle lengths), by
/// the potential method with unit lengths.
pub fn digraph_period(m: &DMatrix<f64>) -> Result<usize> {
    let r = analyze_adjacency(m, usize::MAX)?;
    if r.components.len() != 1 {
        return Err(Error::NotIrreducible);
    }
    let p = period_by_potential(&r.successors, &r.components[0], &vec![1.0; m.nrows()])?;
    Ok(rational::to_f64(p).round() as usize)
}

/// Verdict on the commensurability of directed-cycle travel times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LdqVerdict {
    pub holds: bool,
    /// Least common denominator of the cycle sums.
    pub d: Option<i64>,
    pub cycle_sums: Vec<f64>,
    pub tolerance: f64,
    pub max_denominator: i64,
}

/// Condition (ldq) for the given cycles.
pub fn check_ldq(cycles: &[&Vec<usize>], lengths: &[f64]) -> LdqVerdict {
    let sums: Vec<f64> = cycles.iter().map(|c| c.iter().map(|&j| lengths[j]).sum()).collect();
    let rats: Vec<Option<Rational>> = sums.iter().map(|&s| rational::reconstruct_default(s)).collect();
    let holds = rats.iter().all(Option::is_some);
    let d = holds.then(|| rats.iter().flatten().fold(1i64, |acc, r| num_integer::lcm(acc, *r.denom())));
    LdqVerdict {
        holds,
        d,
        cycle_sums: sums,
        tolerance: rational::RATIONAL_TOL,
        max_denominator: rational::MAX_DENOMINATOR,
    }
}

/// Condition (ldq) on the whole graph.
pub fn check_ldq_graph(g: &MetricGraph, c: &CoefficientField, cap: usize) -> Result<LdqVerdict> {
    let report = analyze_structure(g, cap)?;
    let lengths = travel_time(c)?.lengths();
    Ok(check_ldq(&report.cycles.iter().collect::<Vec<_>>(), &lengths))
}

/// gcd of the rational cycle sums.
pub fn period_by_cycles(cycles: &[&Vec<usize>], lengths: &[f64]) -> Result<Rational> {
    let mut g = Rational::from_integer(0);
    for c in cycles {
        let s: f64 = c.iter().map(|&j| lengths[j]).sum();
        let r = rational::reconstruct_default(s).ok_or(Error::LdqFails)?;
        g = rational::gcd(g, r);
    }
    if *g.numer() == 0 {
        return Err(Error::InvalidParameter("component carries no cycle".into()));
    }
    Ok(g)
}

/// gcd of the potential discrepancies `pot(j) + ℓ_j - pot(k)` over all
/// arcs `j -> k` inside the component, potentials from a BFS tree.
pub fn period_by_potential(successors: &[Vec<usize>], component: &[usize], lengths: &[f64]) -> Result<Rational> {
    let m = successors.len();
    let mut inside = vec![false; m];
    for &j in component {
        inside[j] = true;
    }
    let mut pot: Vec<Option<f64>> = vec![None; m];
    let root = *component.first().ok_or_else(|| Error::InvalidParameter("empty component".into()))?;
    pot[root] = Some(0.0);
    let mut queue = VecDeque::from([root]);
    while let Some(j) = queue.pop_front() {
        let pj = pot[j].expect("visited");
        for &k in &successors[j] {
            if inside[k] && pot[k].is_none() {
                pot[k] = Some(pj + lengths[j]);
                queue.push_back(k);
            }
        }
    }
    let scale = lengths.iter().fold(1.0f64, |a, &b| a.max(b.abs())) * m as f64;
    let mut g = Rational::from_integer(0);
    for &j in component {
        let pj = pot[j].ok_or(Error::NotStronglyConnected)?;
        for &k in &successors[j] {
            if !inside[k] {
                continue;
            }
            let delta = pj + lengths[j] - pot[k].expect("component is strongly connected");
            if delta.abs() <= 1e-12 * scale {
                continue;
            }
            let r = rational::reconstruct_default(delta.abs()).ok_or(Error::LdqFails)?;
            g = rational::gcd(g, r);
        }
    }
    if *g.numer() == 0 {
        return Err(Error::InvalidParameter("component carries no cycle".into()));
    }
    Ok(g)
}

/// Period `τ_i` of component `c` of `report`; both methods must agree when
/// the cycles were enumerated.
pub fn component_period(report: &StructureReport, c: usize, lengths: &[f64]) -> Result<Rational> {
    let by_potential = period_by_potential(&report.successors, &report.components[c], lengths)?;
    let cycles = report.cycles_in(c);
    if !cycles.is_empty() {
        let by_cycles = period_by_cycles(&cycles, lengths)?;
        if by_cycles != by_potential {
            return Err(Error::PeriodMismatch {
                cycles: by_cycles.to_string(),
                potential: by_potential.to_string(),
            });
        }
    }
    Ok(by_potential)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LongTermBehaviour {
    /// Periodic with period `τ_i`.
    Periodic,
    /// Strongly convergent to a rank-one projection.
    Convergent,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TerminalComponent {
    pub index: usize,
    pub edges: Vec<usize>,
    pub ldq_holds: bool,
    pub d: Option<i64>,
    /// `τ_i` as a fraction `p/q`.
    pub period: Option<String>,
    pub period_value: Option<f64>,
    pub behaviour: LongTermBehaviour,
    pub imprimitivity_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticsReport {
    /// `"acyclic"`, `"transient"` or `"terminal:<index>"` per edge.
    pub edge_class: Vec<String>,
    pub acyclic_edges: Vec<usize>,
    pub transient_edges: Vec<usize>,
    /// Time after which the acyclic edges are empty.
    pub extinction_time: f64,
    pub terminal_components: Vec<TerminalComponent>,
    /// lcm of the component periods when all are periodic.
    pub global_period: Option<String>,
    pub global_period_value: Option<f64>,
    pub cycle_count: usize,
}

/// Classifies every edge and every terminal component.
pub fn classify_long_term(g: &MetricGraph, c: &CoefficientField, cap: usize) -> Result<AsymptoticsReport> {
    c.check_len(g.n_edges())?;
    let g = g.clone().with_default_weights();
    let b_w = line_matrices(&g)?.b_w;
    classify_adjacency(&b_w, &travel_time(c)?.lengths(), cap)
}

/// [`classify_long_term`] for a boundary matrix given directly, with edge
/// travel times `lengths`.
pub fn classify_adjacency(b_w: &DMatrix<f64>, lengths: &[f64], cap: usize) -> Result<AsymptoticsReport> {
    if !b_w.is_square() || b_w.nrows() != lengths.len() {
        return Err(Error::ShapeMismatch(format!(
            "boundary matrix is {:?}, expected {n} x {n}",
            b_w.shape(),
            n = lengths.len()
        )));
    }
    check_nonnegative(b_w)?;
    let report = analyze_adjacency(b_w, cap)?;
    let lengths = lengths.to_vec();

    let mut terminal = Vec::new();
    for ci in report.terminal_components() {
        let edges = report.components[ci].clone();
        let cycles = report.cycles_in(ci);
        let ldq = check_ldq(&cycles, &lengths);
        let period = if ldq.holds { Some(component_period(&report, ci, &lengths)?) } else { None };
        let sub = DMatrix::from_fn(edges.len(), edges.len(), |a, b| b_w[(edges[a], edges[b])]);
        terminal.push(TerminalComponent {
            index: ci,
            edges,
            ldq_holds: ldq.holds,
            d: ldq.d,
            period: period.map(|p| p.to_string()),
            period_value: period.map(rational::to_f64),
            behaviour: if ldq.holds { LongTermBehaviour::Periodic } else { LongTermBehaviour::Convergent },
            imprimitivity_index: imprimitivity_index(&sub)?,
        });
    }
    let periods: Option<Vec<Rational>> =
        terminal.iter().map(|t| t.period.as_ref().map(|p| p.parse().expect("formatted rational"))).collect();
    let global = periods.filter(|p| !p.is_empty()).map(|p| p.into_iter().reduce(rational::lcm).expect("non-empty"));

    Ok(AsymptoticsReport {
        edge_class: report
            .edge_class
            .iter()
            .map(|c| match c {
                EdgeClass::Acyclic => "acyclic".to_string(),
                EdgeClass::Transient => "transient".to_string(),
                EdgeClass::Terminal(i) => format!("terminal:{i}"),
            })
            .collect(),
        acyclic_edges: report.acyclic_edges(),
        transient_edges: report.transient_edges(),
        extinction_time: nilpotent_extinction(&report, &lengths),
        terminal_components: terminal,
        global_period: global.map(|p| p.to_string()),
        global_period_value: global.map(rational::to_f64),
        cycle_count: report.cycles.len(),
    })
}
