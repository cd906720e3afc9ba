use nalgebra::DMatrix;

use super::MetricGraph;
use crate::error::{Error, Result};

/// Outgoing, incoming and full vertex-edge incidence matrices (`n x m`).
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceSet {
    /// `phi_minus[(i, j)] = 1` iff `e_j(1) = v_i`.
    pub phi_minus: DMatrix<f64>,
    /// `phi_plus[(i, j)] = 1` iff `e_j(0) = v_i`.
    pub phi_plus: DMatrix<f64>,
    pub phi: DMatrix<f64>,
}

pub fn incidence(g: &MetricGraph) -> IncidenceSet {
    let (n, m) = (g.n_vertices(), g.n_edges());
    let mut phi_minus = DMatrix::zeros(n, m);
    let mut phi_plus = DMatrix::zeros(n, m);
    for (j, e) in g.edges().iter().enumerate() {
        phi_minus[(e.head, j)] = 1.0;
        phi_plus[(e.tail, j)] = 1.0;
    }
    let phi = &phi_minus + &phi_plus;
    IncidenceSet { phi_minus, phi_plus, phi }
}

/// Weighted line-graph adjacency, its outgoing degree matrix and the
/// outgoing Kirchhoff matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LineGraphMatrices {
    /// `b_w[(j, k)]` is the share of material leaving edge `k` that enters edge `j`.
    pub b_w: DMatrix<f64>,
    pub d_w_minus: DMatrix<f64>,
    /// `D_w^- - B_w^T`; its rows sum to zero.
    pub k_minus: DMatrix<f64>,
}

pub fn line_matrices(g: &MetricGraph) -> Result<LineGraphMatrices> {
    let w = g.weights().ok_or(Error::MissingWeights)?;
    let m = g.n_edges();
    let edges = g.edges();
    let b_w = DMatrix::from_fn(m, m, |j, k| {
        let v = edges[k].tail;
        if edges[j].head == v {
            w[(v, j)]
        } else {
            0.0
        }
    });
    let (d_w_minus, k_minus) = kirchhoff_from_adjacency(&b_w);
    Ok(LineGraphMatrices { b_w, d_w_minus, k_minus })
}

/// Builds `(D^-, D^- - B^T)` from a line-graph adjacency `B`, where
/// `D^-` holds the column sums of `B`.
pub fn kirchhoff_from_adjacency(b: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = b.nrows();
    let mut d = DMatrix::zeros(m, m);
    for k in 0..m {
        d[(k, k)] = b.column(k).sum();
    }
    let k_minus = &d - b.transpose();
    (d, k_minus)
}

/// Algebraic multiplicity of the eigenvalue 0, counted as eigenvalues with
/// `|λ| < 1e-8 ‖K‖_F`.
pub fn multiplicity_zero_kirchhoff(k_minus: &DMatrix<f64>) -> Result<usize> {
    if !k_minus.is_square() {
        return Err(Error::ShapeMismatch("Kirchhoff matrix must be square".into()));
    }
    let norm = k_minus.norm();
    if norm == 0.0 {
        return Ok(k_minus.nrows());
    }
    let eig = crate::linalg::eigenvalues(k_minus)?;
    let threshold = 1e-8 * norm;
    Ok(eig.iter().filter(|z| z.norm() < threshold).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c3() -> MetricGraph {
        MetricGraph::from_pairs(3, &[(0, 1), (1, 2), (2, 0)]).unwrap().with_default_weights()
    }

    #[test]
    fn c3_incidence() {
        let inc = incidence(&c3());
        assert_eq!(inc.phi_minus, DMatrix::identity(3, 3));
        // e1 ends at v2, e2 at v3, e3 at v1
        let shift = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 1., 0., 0., 0., 1., 0.]);
        assert_eq!(inc.phi_plus, shift);
        assert_eq!(inc.phi, &inc.phi_minus + &inc.phi_plus);
    }

    #[test]
    fn path_sink_row_is_zero() {
        let g = MetricGraph::from_pairs(3, &[(0, 1), (1, 2)]).unwrap();
        let inc = incidence(&g);
        assert!(inc.phi_minus.row(2).iter().all(|&x| x == 0.0));
        for j in 0..2 {
            assert_eq!(inc.phi_minus.column(j).sum(), 1.0);
            assert_eq!(inc.phi_plus.column(j).sum(), 1.0);
        }
    }

    #[test]
    fn c3_line_matrices() {
        let lm = line_matrices(&c3()).unwrap();
        let p = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 1., 0., 0., 0., 1., 0.]);
        assert_eq!(lm.b_w, p);
        assert_eq!(lm.k_minus, DMatrix::identity(3, 3) - p.transpose());
        for i in 0..3 {
            assert_eq!(lm.k_minus.row(i).sum(), 0.0);
            assert_eq!(lm.k_minus.column(i).sum(), 0.0);
        }
    }

    #[test]
    fn missing_weights_is_an_error() {
        let g = MetricGraph::from_pairs(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        assert_eq!(line_matrices(&g).unwrap_err(), Error::MissingWeights);
    }

    #[test]
    fn zero_multiplicity() {
        let lm = line_matrices(&c3()).unwrap();
        assert_eq!(multiplicity_zero_kirchhoff(&lm.k_minus).unwrap(), 1);
        // the kernel of I - P^T is spanned by the ones vector
        let ones = nalgebra::DVector::from_element(3, 1.0);
        assert_eq!((&lm.k_minus * ones).norm(), 0.0);

        // two disjoint cycles, block diagonal
        let mut k = DMatrix::zeros(5, 5);
        k.view_mut((0, 0), (2, 2))
            .copy_from(&DMatrix::from_row_slice(2, 2, &[1., -1., -1., 1.]));
        let p3 = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 1., 0., 0., 0., 1., 0.]);
        k.view_mut((2, 2), (3, 3)).copy_from(&(DMatrix::identity(3, 3) - p3.transpose()));
        assert_eq!(multiplicity_zero_kirchhoff(&k).unwrap(), 2);
    }
}
