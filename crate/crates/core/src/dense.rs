//! Dense reference routines for small-scale cross-checks.
//!
//! These materialize shift operators, Kronecker products and filter matrices
//! explicitly and never touch the sparse iterated-shift code in
//! [`crate::filtering`], so the two paths can be compared against each other.
//! Intended for test-scale problems only.

use nalgebra::DMatrix;

use crate::graph::{Graph, ProductShiftOperator};

/// Dense `N x N` matrix of a sparse graph shift operator.
pub fn materialize_graph(g: &Graph) -> DMatrix<f64> {
    let n = g.n_nodes();
    let mut m = DMatrix::zeros(n, n);
    for &(i, j, w) in g.edges() {
        m[(i, j)] = w;
    }
    m
}

/// Dense Kronecker product `A ⊗ B`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            for r in 0..br {
                for c in 0..bc {
                    out[(i * br + r, j * bc + c)] = aij * b[(r, c)];
                }
            }
        }
    }
    out
}

/// Dense `NF x NF` matrix of a lazy product shift operator,
/// `sum_ij s_ij (S^i ⊗ S_F^j)`.
pub fn materialize_product_op(op: &ProductShiftOperator) -> DMatrix<f64> {
    let s = materialize_graph(op.node_graph());
    let sf = materialize_graph(op.feature_graph());
    let n = op.n_nodes();
    let f = op.n_features();
    let eye_n = DMatrix::identity(n, n);
    let eye_f = DMatrix::identity(f, f);
    let mut out = DMatrix::zeros(n * f, n * f);
    for t in op.terms() {
        let left = if t.node_power == 0 { &eye_n } else { &s };
        let right = if t.feat_power == 0 { &eye_f } else { &sf };
        out += kron(left, right) * t.coeff;
    }
    out
}

/// Dense matrix of the general product filter `sum_kl h_kl (S^k ⊗ S_F^l)`.
pub fn materialize_product_filter(
    node_g: &Graph,
    feat_g: &Graph,
    h: &crate::filtering::ProductFilterCoeffs,
) -> DMatrix<f64> {
    let s = materialize_graph(node_g);
    let sf = materialize_graph(feat_g);
    let n = node_g.n_nodes();
    let f = feat_g.n_nodes();
    let s_powers = matrix_powers(&s, h.k_order());
    let sf_powers = matrix_powers(&sf, h.l_order());
    let mut out = DMatrix::zeros(n * f, n * f);
    for (k, s_pow) in s_powers.iter().enumerate() {
        for (l, sf_pow) in sf_powers.iter().enumerate() {
            let hkl = h.get(k, l);
            if hkl != 0.0 {
                out += kron(s_pow, sf_pow) * hkl;
            }
        }
    }
    out
}

/// `[I, M, M^2, ..., M^max_power]`.
pub fn matrix_powers(m: &DMatrix<f64>, max_power: usize) -> Vec<DMatrix<f64>> {
    let n = m.nrows();
    let mut powers = Vec::with_capacity(max_power + 1);
    powers.push(DMatrix::identity(n, n));
    for k in 1..=max_power {
        let next = &powers[k - 1] * m;
        powers.push(next);
    }
    powers
}

/// Dense polynomial filter evaluation `(sum_k h_k M^k) x`.
pub fn poly_filter_dense(m: &DMatrix<f64>, h: &[f64], x: &[f64]) -> Vec<f64> {
    let powers = matrix_powers(m, h.len().saturating_sub(1));
    let xv = nalgebra::DVector::from_column_slice(x);
    let mut y = nalgebra::DVector::zeros(x.len());
    for (k, &hk) in h.iter().enumerate() {
        y += &powers[k] * &xv * hk;
    }
    y.as_slice().to_vec()
}

pub fn matvec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let y = m * nalgebra::DVector::from_column_slice(x);
    y.as_slice().to_vec()
}

/// Largest singular value via dense SVD.
pub fn spectral_norm_dense(m: &DMatrix<f64>) -> f64 {
    m.clone().svd(false, false).singular_values.max()
}
