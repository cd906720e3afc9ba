//! Operators with one tridiagonal block per edge coupled through a small
//! dense block, and a direct solver that eliminates the edge interiors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tridiagonal block of one edge interior. `lower[i]` couples row `i` to
/// `i - 1` and `upper[i]` to `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    fn zeros(n: usize) -> Self {
        Tridiagonal { lower: vec![0.0; n], diag: vec![0.0; n], upper: vec![0.0; n] }
    }
}

/// Unknowns are ordered as `n_c` coupling values followed by the interior
/// samples of edge 0, edge 1, ... (`cells` each).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOperator {
    pub n_c: usize,
    pub cells: usize,
    pub edges: Vec<Tridiagonal>,
    /// `(edge, interior row, coupling column, value)`.
    pub to_coupling: Vec<(usize, usize, usize, f64)>,
    /// `(coupling row, edge, interior column, value)`.
    pub from_interior: Vec<(usize, usize, usize, f64)>,
    pub coupling: DMatrix<f64>,
}

impl BlockOperator {
    pub fn zeros(n_c: usize, m: usize, cells: usize) -> Self {
        BlockOperator {
            n_c,
            cells,
            edges: vec![Tridiagonal::zeros(cells); m],
            to_coupling: Vec::new(),
            from_interior: Vec::new(),
            coupling: DMatrix::zeros(n_c, n_c),
        }
    }

    pub fn dim(&self) -> usize {
        self.n_c + self.edges.len() * self.cells
    }

    pub fn interior_index(&self, j: usize, i: usize) -> usize {
        self.n_c + j * self.cells + i
    }

    pub fn apply(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.coupling * u.rows(0, self.n_c);
        let mut full = DVector::zeros(self.dim());
        for (j, t) in self.edges.iter().enumerate() {
            let base = self.interior_index(j, 0);
            for i in 0..self.cells {
                let mut acc = t.diag[i] * u[base + i];
                if i > 0 {
                    acc += t.lower[i] * u[base + i - 1];
                }
                if i + 1 < self.cells {
                    acc += t.upper[i] * u[base + i + 1];
                }
                full[base + i] = acc;
            }
        }
        for &(j, i, q, v) in &self.to_coupling {
            full[self.interior_index(j, i)] += v * u[q];
        }
        for &(p, j, i, v) in &self.from_interior {
            out[p] += v * u[self.interior_index(j, i)];
        }
        full.rows_mut(0, self.n_c).copy_from(&out);
        full
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (self.n_c, self.n_c)).copy_from(&self.coupling);
        for (j, t) in self.edges.iter().enumerate() {
            let base = self.interior_index(j, 0);
            for i in 0..self.cells {
                a[(base + i, base + i)] += t.diag[i];
                if i > 0 {
                    a[(base + i, base + i - 1)] += t.lower[i];
                }
                if i + 1 < self.cells {
                    a[(base + i, base + i + 1)] += t.upper[i];
                }
            }
        }
        for &(j, i, q, v) in &self.to_coupling {
            a[(self.interior_index(j, i), q)] += v;
        }
        for &(p, j, i, v) in &self.from_interior {
            a[(p, self.interior_index(j, i))] += v;
        }
        a
    }

    /// `alpha I + beta self`.
    pub fn shifted(&self, alpha: f64, beta: f64) -> BlockOperator {
        let mut s = self.clone();
        s.coupling *= beta;
        for i in 0..self.n_c {
            s.coupling[(i, i)] += alpha;
        }
        for t in &mut s.edges {
            for x in t.lower.iter_mut().chain(t.upper.iter_mut()) {
                *x *= beta;
            }
            for x in &mut t.diag {
                *x = alpha + beta * *x;
            }
        }
        for e in &mut s.to_coupling {
            e.3 *= beta;
        }
        for e in &mut s.from_interior {
            e.3 *= beta;
        }
        s
    }
}

/// Thomas factorization of a tridiagonal block.
#[derive(Debug, Clone)]
struct ThomasFactor {
    lower: Vec<f64>,
    c_prime: Vec<f64>,
    denom: Vec<f64>,
}

impl ThomasFactor {
    fn new(t: &Tridiagonal) -> Result<Self> {
        let n = t.diag.len();
        let mut c_prime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        for i in 0..n {
            let d = if i == 0 { t.diag[0] } else { t.diag[i] - t.lower[i] * c_prime[i - 1] };
            if d == 0.0 || !d.is_finite() {
                return Err(Error::LinearSolveFailure(format!("zero pivot in edge block row {i}")));
            }
            denom[i] = d;
            c_prime[i] = t.upper[i] / d;
        }
        Ok(ThomasFactor { lower: t.lower.clone(), c_prime, denom })
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        for i in 0..n {
            let prev = if i == 0 { 0.0 } else { self.lower[i] * rhs[i - 1] };
            rhs[i] = (rhs[i] - prev) / self.denom[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
    }
}

/// Factorized `BlockOperator`, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct BlockSolver {
    op: BlockOperator,
    factors: Vec<ThomasFactor>,
    /// `T_j^{-1}` applied to each coupling column entering edge `j`.
    columns: Vec<(usize, usize, Vec<f64>)>,
    schur: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl BlockSolver {
    pub fn new(op: BlockOperator) -> Result<Self> {
        let factors = op.edges.iter().map(ThomasFactor::new).collect::<Result<Vec<_>>>()?;
        let mut columns = Vec::with_capacity(op.to_coupling.len());
        for &(j, i, q, v) in &op.to_coupling {
            let mut col = vec![0.0; op.cells];
            col[i] = v;
            factors[j].solve(&mut col);
            columns.push((j, q, col));
        }
        let mut s = op.coupling.clone();
        for &(p, j, i, fv) in &op.from_interior {
            for (cj, q, col) in &columns {
                if *cj == j {
                    s[(p, *q)] -= fv * col[i];
                }
            }
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::LinearSolveFailure("non-finite Schur complement".into()));
        }
        let schur = s.lu();
        if op.n_c > 0 && !schur.is_invertible() {
            return Err(Error::LinearSolveFailure("singular Schur complement".into()));
        }
        Ok(BlockSolver { op, factors, columns, schur })
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let op = &self.op;
        let mut x = rhs.clone();
        for (j, f) in self.factors.iter().enumerate() {
            let base = op.interior_index(j, 0);
            f.solve(&mut x.as_mut_slice()[base..base + op.cells]);
        }
        let mut rc: DVector<f64> = rhs.rows(0, op.n_c).into_owned();
        for &(p, j, i, fv) in &op.from_interior {
            rc[p] -= fv * x[op.interior_index(j, i)];
        }
        let xc = if op.n_c > 0 {
            self.schur
                .solve(&rc)
                .ok_or_else(|| Error::LinearSolveFailure("Schur solve failed".into()))?
        } else {
            rc
        };
        for (j, q, col) in &self.columns {
            let base = op.interior_index(*j, 0);
            for (i, g) in col.iter().enumerate() {
                x[base + i] -= g * xc[*q];
            }
        }
        x.rows_mut(0, op.n_c).copy_from(&xc);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolveFailure("non-finite solution".into()));
        }
        Ok(x)
    }
}
