//! Vertex-condition matrices and the determinant criteria for well-posedness.

use nalgebra::DMatrix;

use crate::coefficient::CoefficientField;
use crate::error::{Error, Result};
use crate::graph::{incidence, line_matrices, End, MetricGraph};
use crate::linalg::{determinant_check, DeterminantCheck};

/// Boundary matrix of the transport problem, `u(t, 1) = B_c u(t, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportBoundary {
    pub b_c: DMatrix<f64>,
    pub is_semigroup: bool,
    pub is_group: bool,
    pub det: DeterminantCheck,
}

/// `B_c = c(1)^{-1} B_w c(0)`. Missing weights default to the uniform split.
pub fn transport_boundary(g: &MetricGraph, c: &CoefficientField) -> Result<TransportBoundary> {
    c.check_len(g.n_edges())?;
    if let Some(&v) = g.sinks().first() {
        return Err(Error::HasSink(v));
    }
    let g = g.clone().with_default_weights();
    let lm = line_matrices(&g)?;
    let m = g.n_edges();
    let b_c = DMatrix::from_fn(m, m, |j, k| lm.b_w[(j, k)] * c.value(k, 0.0) / c.value(j, 1.0));
    let det = determinant_check(&b_c);
    // the standard conditions read V_1 = I, always invertible
    Ok(TransportBoundary { b_c, is_semigroup: true, is_group: det.nonzero, det })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    /// Continuity plus Kirchhoff flux balance.
    Standard,
    /// `(f'(0); f'(1)) = K (f(0); f(1))`.
    Robin,
}

/// Matrix form of the diffusion vertex conditions
/// `V_0 f(0) + V_1 f(1) = 0`, `W_0 f'(0) - W_1 f'(1) + (Bf)(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionBoundary {
    pub kind: BoundaryKind,
    pub v0: DMatrix<f64>,
    pub v1: DMatrix<f64>,
    pub w0: DMatrix<f64>,
    pub w1: DMatrix<f64>,
    /// `2m x 2m` Robin matrix acting on the endpoint traces.
    pub robin_k: Option<DMatrix<f64>>,
    pub det: DeterminantCheck,
}

impl DiffusionBoundary {
    pub fn n_edges(&self) -> usize {
        self.v0.ncols()
    }

    /// Defect of the flux rows for endpoint values and derivatives of `f`.
    pub fn flux_defect(&self, f0: &[f64], f1: &[f64], df0: &[f64], df1: &[f64]) -> f64 {
        let m = self.n_edges();
        let v = |x: &[f64]| nalgebra::DVector::from_column_slice(x);
        let mut r = &self.w0 * v(df0) - &self.w1 * v(df1);
        if let Some(k) = &self.robin_k {
            let mut traces = nalgebra::DVector::zeros(2 * m);
            traces.rows_mut(0, m).copy_from(&v(f0));
            traces.rows_mut(m, m).copy_from(&v(f1));
            r += k * traces;
        }
        r.amax()
    }
}

/// `Σ_{e_j ∈ Γ(v)} sqrt(a_j(v))`.
pub fn vertex_cluster_det(g: &MetricGraph, v: usize, a: &CoefficientField) -> f64 {
    g.incident(v).into_iter().map(|(j, end)| a.value(j, end_s(end)).sqrt()).sum()
}

fn end_s(end: End) -> f64 {
    match end {
        End::Zero => 0.0,
        End::One => 1.0,
    }
}

/// Continuity rows (chain pattern per vertex) and Kirchhoff rows
/// `W_0 = Φ⁺ a(0)`, `W_1 = Φ⁻ a(1)`.
pub fn diffusion_boundary_standard(
    g: &MetricGraph,
    a: &CoefficientField,
) -> Result<DiffusionBoundary> {
    a.check_len(g.n_edges())?;
    let (n, m) = (g.n_vertices(), g.n_edges());
    let k0 = 2 * m - n;
    let mut v0 = DMatrix::zeros(k0, m);
    let mut v1 = DMatrix::zeros(k0, m);
    let mut row = 0;
    for v in 0..n {
        let inc = g.incident(v);
        for pair in inc.windows(2) {
            for (&(j, end), sign) in [(&pair[0], 1.0), (&pair[1], -1.0)] {
                match end {
                    End::Zero => v0[(row, j)] = sign,
                    End::One => v1[(row, j)] = sign,
                }
            }
            row += 1;
        }
    }
    let inc = incidence(g);
    let a0 = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(m, |j, _| a.value(j, 0.0)));
    let a1 = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(m, |j, _| a.value(j, 1.0)));
    let w0 = &inc.phi_plus * a0;
    let w1 = &inc.phi_minus * a1;
    let mut b = DiffusionBoundary {
        kind: BoundaryKind::Standard,
        v0,
        v1,
        w0,
        w1,
        robin_k: None,
        det: determinant_check(&DMatrix::zeros(0, 0)),
    };
    b.det = check_diffusion_generation(&b, a)?;
    Ok(b)
}

/// Robin conditions `W_0 = [-I; 0]`, `W_1 = [0; I]` with `B` given by `k`.
pub fn robin_boundary(k: &DMatrix<f64>) -> Result<DiffusionBoundary> {
    if !k.is_square() || k.nrows() % 2 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "Robin matrix must be 2m x 2m, got {} x {}",
            k.nrows(),
            k.ncols()
        )));
    }
    let m = k.nrows() / 2;
    let mut w0 = DMatrix::zeros(2 * m, m);
    let mut w1 = DMatrix::zeros(2 * m, m);
    for i in 0..m {
        w0[(i, i)] = -1.0;
        w1[(m + i, i)] = 1.0;
    }
    let mut b = DiffusionBoundary {
        kind: BoundaryKind::Robin,
        v0: DMatrix::zeros(0, m),
        v1: DMatrix::zeros(0, m),
        w0,
        w1,
        robin_k: Some(k.clone()),
        det: determinant_check(&DMatrix::zeros(0, 0)),
    };
    let unit = CoefficientField::uniform(crate::coefficient::CoefficientKind::Diffusivity, m, 1.0)?;
    b.det = check_diffusion_generation(&b, &unit)?;
    Ok(b)
}

/// Determinant of `[[V_1, V_0], [W_1 a(1)^{-1/2}, W_0 a(0)^{-1/2}]]`.
pub fn check_diffusion_generation(
    b: &DiffusionBoundary,
    a: &CoefficientField,
) -> Result<DeterminantCheck> {
    let m = b.v0.ncols();
    let (k0, k1) = (b.v0.nrows(), b.w0.nrows());
    if b.v1.shape() != (k0, m)
        || b.w0.ncols() != m
        || b.w1.shape() != (k1, m)
        || k0 + k1 != 2 * m
        || a.len() != m
    {
        return Err(Error::ShapeMismatch(format!(
            "boundary rows {k0} + {k1} do not match 2m = {}",
            2 * m
        )));
    }
    let mut big = DMatrix::zeros(2 * m, 2 * m);
    big.view_mut((0, 0), (k0, m)).copy_from(&b.v1);
    big.view_mut((0, m), (k0, m)).copy_from(&b.v0);
    for j in 0..m {
        let s1 = a.value(j, 1.0).powf(-0.5);
        let s0 = a.value(j, 0.0).powf(-0.5);
        for r in 0..k1 {
            big[(k0 + r, j)] = b.w1[(r, j)] * s1;
            big[(k0 + r, m + j)] = b.w0[(r, j)] * s0;
        }
    }
    Ok(determinant_check(&big))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficient::{CoefficientKind, EdgeCoefficient};

    fn unit(kind: CoefficientKind, m: usize) -> CoefficientField {
        CoefficientField::uniform(kind, m, 1.0).unwrap()
    }

    fn c3() -> MetricGraph {
        MetricGraph::from_pairs(3, &[(0, 1), (1, 2), (2, 0)]).unwrap()
    }

    #[test]
    fn c3_transport_is_a_group() {
        let tb = transport_boundary(&c3(), &unit(CoefficientKind::Velocity, 3)).unwrap();
        assert!(tb.is_semigroup && tb.is_group);
        assert_eq!(tb.b_c.sum(), 3.0);
    }

    #[test]
    fn figure_eight_is_not_a_group() {
        let g = MetricGraph::from_pairs(3, &[(0, 1), (1, 0), (0, 2), (2, 0)]).unwrap();
        let tb = transport_boundary(&g, &unit(CoefficientKind::Velocity, 4)).unwrap();
        assert!(!tb.is_group);
    }

    #[test]
    fn endpoint_speeds_scale_b_c() {
        let tab = EdgeCoefficient::Tabulated { samples: vec![2.0, 1.0] };
        let c = CoefficientField::new(CoefficientKind::Velocity, vec![tab; 3]).unwrap();
        let tb = transport_boundary(&c3(), &c).unwrap();
        let plain = transport_boundary(&c3(), &unit(CoefficientKind::Velocity, 3)).unwrap();
        assert_eq!(tb.b_c, plain.b_c * 2.0);
    }

    #[test]
    fn transport_rejects_sinks() {
        let g = MetricGraph::from_pairs(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(
            transport_boundary(&g, &unit(CoefficientKind::Velocity, 2)).unwrap_err(),
            Error::HasSink(2)
        );
    }

    #[test]
    fn single_edge_has_only_flux_rows() {
        let g = MetricGraph::from_pairs(2, &[(0, 1)]).unwrap();
        let b = diffusion_boundary_standard(&g, &unit(CoefficientKind::Diffusivity, 1)).unwrap();
        assert_eq!(b.v0.nrows(), 0);
        assert_eq!(b.w0.nrows(), 2);
        assert!(b.det.nonzero);
        assert!((b.det.det.abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn star_cluster_determinant() {
        let g = MetricGraph::from_pairs(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let a = unit(CoefficientKind::Diffusivity, 3);
        assert_eq!(vertex_cluster_det(&g, 0, &a), 3.0);
        let b = diffusion_boundary_standard(&g, &a).unwrap();
        assert!((b.det.det.abs() - 3.0).abs() < 1e-12);
        // continuity rows carry one +1 and one -1
        for r in 0..b.v0.nrows() {
            let entries: Vec<f64> = b
                .v0
                .row(r)
                .iter()
                .chain(b.v1.row(r).iter())
                .copied()
                .filter(|&x| x != 0.0)
                .collect();
            assert_eq!(entries, vec![1.0, -1.0]);
        }
    }

    #[test]
    fn cluster_values() {
        let g = MetricGraph::from_pairs(3, &[(0, 1), (1, 2)]).unwrap();
        let tab = |a0: f64, a1: f64| EdgeCoefficient::Tabulated { samples: vec![a0, a1] };
        // v1 is the tail of e0 (s = 0) and the head of e1 (s = 1)
        let a = CoefficientField::new(CoefficientKind::Diffusivity, vec![tab(4.0, 1.0), tab(1.0, 9.0)])
            .unwrap();
        assert_eq!(vertex_cluster_det(&g, 1, &a), 5.0);
        assert_eq!(vertex_cluster_det(&g, 0, &a), 1.0);
        let a4 = CoefficientField::uniform(CoefficientKind::Diffusivity, 2, 4.0).unwrap();
        assert_eq!(vertex_cluster_det(&g, 2, &a4), 2.0);
    }

    #[test]
    fn degenerate_rows_give_zero_determinant() {
        let g = MetricGraph::from_pairs(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let a = unit(CoefficientKind::Diffusivity, 3);
        let mut b = diffusion_boundary_standard(&g, &a).unwrap();
        b.v0.fill(0.0);
        b.v1.fill(0.0);
        assert!(!check_diffusion_generation(&b, &a).unwrap().nonzero);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let g = MetricGraph::from_pairs(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        let a = unit(CoefficientKind::Diffusivity, 3);
        let mut b = diffusion_boundary_standard(&g, &a).unwrap();
        b.w0 = DMatrix::zeros(1, 3);
        assert!(matches!(check_diffusion_generation(&b, &a), Err(Error::ShapeMismatch(_))));
        assert!(robin_boundary(&DMatrix::zeros(3, 3)).is_err());
    }

    #[test]
    fn robin_identity_blocks() {
        let k = DMatrix::from_element(2, 2, 1.0);
        let b = robin_boundary(&k).unwrap();
        assert!(b.det.nonzero);
        // f(s) = 1 + s: f(0) = 1, f(1) = 2, f' = 1; the condition wants f' = 3
        assert_eq!(b.flux_defect(&[1.0], &[2.0], &[1.0], &[1.0]), 2.0);
        assert_eq!(b.flux_defect(&[1.0], &[2.0], &[3.0], &[3.0]), 0.0);
        // K = 0 is pure Neumann
        let n = robin_boundary(&DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(n.flux_defect(&[5.0], &[7.0], &[0.0], &[0.0]), 0.0);
    }
}
