//! Polynomial graph filters and product-graph filters evaluated by iterated
//! sparse shifts.
//!
//! Everything here works on node-major vectors, reinterpreted in place as the
//! column-major `F x N` matrix `Y` from [`crate::signal::reshape_to_matrix`].
//! With that layout, `(S^k ⊗ S_F^l) x = vec(S_F^l Y (S^k)ᵀ)`, so a product
//! filter costs `O(KL (F|E| + N|E_F|))` sparse multiply-adds and no `NF x NF`
//! matrix is ever formed. Powers are always evaluated by repeated shifting of
//! the running vector, never by matrix powers.

use crate::error::{Error, Result};
use crate::graph::{Graph, ProductShiftOperator};

/// Scalar coefficients `h_0..h_K` of a polynomial graph filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoeffs {
    h: Vec<f64>,
}

impl FilterCoeffs {
    pub fn new(h: Vec<f64>) -> Result<Self> {
        if h.is_empty() {
            return Err(Error::InvalidParameter("filter needs at least h_0".into()));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite filter coefficient".into()));
        }
        Ok(FilterCoeffs { h })
    }

    /// Shift order `K`.
    pub fn order(&self) -> usize {
        self.h.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.h
    }
}

/// Coefficients `h_kl` (k = 0..K, l = 0..L) of a product graph filter.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductFilterCoeffs {
    k_order: usize,
    l_order: usize,
    /// Row-major `(K+1) x (L+1)`.
    h: Vec<f64>,
}

impl ProductFilterCoeffs {
    pub fn new(k_order: usize, l_order: usize, h: Vec<f64>) -> Result<Self> {
        if h.len() != (k_order + 1) * (l_order + 1) {
            return Err(Error::InvalidShape(format!(
                "expected {} coefficients for K = {k_order}, L = {l_order}, found {}",
                (k_order + 1) * (l_order + 1),
                h.len()
            )));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite filter coefficient".into()));
        }
        Ok(ProductFilterCoeffs { k_order, l_order, h })
    }

    pub fn from_nested(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k_order = rows.len().checked_sub(1).ok_or_else(|| {
            Error::InvalidParameter("product filter needs at least the k = 0 row".into())
        })?;
        let l_order = rows[0].len().checked_sub(1).ok_or_else(|| {
            Error::InvalidParameter("product filter needs at least the l = 0 column".into())
        })?;
        let mut h = Vec::with_capacity((k_order + 1) * (l_order + 1));
        for row in &rows {
            if row.len() != l_order + 1 {
                return Err(Error::InvalidShape("ragged coefficient rows".into()));
            }
            h.extend_from_slice(row);
        }
        ProductFilterCoeffs::new(k_order, l_order, h)
    }

    pub fn k_order(&self) -> usize {
        self.k_order
    }

    pub fn l_order(&self) -> usize {
        self.l_order
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.h[k * (self.l_order + 1) + l]
    }

    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        (0..=self.k_order)
            .map(|k| (0..=self.l_order).map(|l| self.get(k, l)).collect())
            .collect()
    }
}

/// Thread-local multiply-add counter for the sparse shift stage.
///
/// Only the per-edge products inside shift applications are counted;
/// coefficient scaling and accumulation are not. Tests reset the counter,
/// run one operation on the same thread and assert the exact count.
pub mod shift_ops {
    use std::cell::Cell;

    thread_local! {
        static MADDS: Cell<u64> = const { Cell::new(0) };
    }

    pub fn reset() {
        MADDS.with(|c| c.set(0));
    }

    pub fn count() -> u64 {
        MADDS.with(|c| c.get())
    }

    pub(crate) fn add(n: u64) {
        MADDS.with(|c| c.set(c.get() + n));
    }
}

/// One sparse shift `y = S x`: one multiply-add per stored edge.
pub fn apply_shift(g: &Graph, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != g.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "signal length {} vs {} graph nodes",
            x.len(),
            g.n_nodes()
        )));
    }
    let mut y = vec![0.0; x.len()];
    for &(i, j, w) in g.edges() {
        y[i] += w * x[j];
    }
    shift_ops::add(g.n_edges() as u64);
    Ok(y)
}

/// Right-multiply the implicit `F x N` matrix by `Sᵀ`: for each stored
/// `(i, j, w)` of the node graph, column `i` gains `w *` column `j`.
/// Costs `F * |E|` multiply-adds.
fn node_col_shift(g: &Graph, buf: &[f64], n_features: usize) -> Vec<f64> {
    let mut out = vec![0.0; buf.len()];
    for &(i, j, w) in g.edges() {
        let dst = i * n_features;
        let src = j * n_features;
        for f in 0..n_features {
            out[dst + f] += w * buf[src + f];
        }
    }
    shift_ops::add((g.n_edges() * n_features) as u64);
    out
}

/// Left-multiply the implicit `F x N` matrix by `S_F`: for each stored
/// `(a, b, w)` of the feature graph, row `a` gains `w *` row `b`.
/// Costs `N * |E_F|` multiply-adds.
fn feat_row_shift(gf: &Graph, buf: &[f64], n_nodes: usize, n_features: usize) -> Vec<f64> {
    let mut out = vec![0.0; buf.len()];
    for &(a, b, w) in gf.edges() {
        for i in 0..n_nodes {
            let base = i * n_features;
            out[base + a] += w * buf[base + b];
        }
    }
    shift_ops::add((gf.n_edges() * n_nodes) as u64);
    out
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Evaluate `y = sum_k h_k S^k x` by iterated shifts, cost `O(K |E|)`.
pub fn apply_poly_filter(g: &Graph, h: &FilterCoeffs, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != g.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "signal length {} vs {} graph nodes",
            x.len(),
            g.n_nodes()
        )));
    }
    let coeffs = h.coeffs();
    let mut y = vec![0.0; x.len()];
    axpy(coeffs[0], x, &mut y);
    let mut z = x.to_vec();
    for &hk in &coeffs[1..] {
        z = apply_shift(g, &z)?;
        axpy(hk, &z, &mut y);
    }
    Ok(y)
}

fn check_product_dim(n_nodes: usize, n_features: usize, len: usize) -> Result<()> {
    if len != n_nodes * n_features {
        return Err(Error::DimensionMismatch(format!(
            "signal length {len} vs N*F = {}",
            n_nodes * n_features
        )));
    }
    Ok(())
}

/// Evaluate the general product graph filter
/// `y = sum_k sum_l h_kl (S^k ⊗ S_F^l) x` without forming any `NF x NF`
/// matrix: the row-shift stack `{S_F^l Y}` is built once, then each entry is
/// column-shifted across nodes.
pub fn apply_product_filter(
    node_g: &Graph,
    feat_g: &Graph,
    h: &ProductFilterCoeffs,
    x: &[f64],
) -> Result<Vec<f64>> {
    let n = node_g.n_nodes();
    let f = feat_g.n_nodes();
    check_product_dim(n, f, x.len())?;
    let mut acc = vec![0.0; x.len()];
    let mut row_stack = x.to_vec(); // S_F^l Y, starting at l = 0
    for l in 0..=h.l_order() {
        if l > 0 {
            row_stack = feat_row_shift(feat_g, &row_stack, n, f);
        }
        let mut z = row_stack.clone(); // (S_F^l Y)(S^k)ᵀ, starting at k = 0
        for k in 0..=h.k_order() {
            if k > 0 {
                z = node_col_shift(node_g, &z, f);
            }
            let hkl = h.get(k, l);
            if hkl != 0.0 {
                axpy(hkl, &z, &mut acc);
            }
        }
    }
    Ok(acc)
}

/// All shifted variants `(S^k ⊗ S_F^l) x` for `k = 0..=k_order`,
/// `l = 0..=l_order`, indexed `k * (l_order + 1) + l`. Shares the row-shift
/// stack across `k`, so the cost matches one product-filter evaluation.
pub fn product_term_stack(
    node_g: &Graph,
    feat_g: &Graph,
    k_order: usize,
    l_order: usize,
    x: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let n = node_g.n_nodes();
    let f = feat_g.n_nodes();
    check_product_dim(n, f, x.len())?;
    let mut out = vec![Vec::new(); (k_order + 1) * (l_order + 1)];
    let mut row_stack = x.to_vec();
    for l in 0..=l_order {
        if l > 0 {
            row_stack = feat_row_shift(feat_g, &row_stack, n, f);
        }
        let mut z = row_stack.clone();
        for k in 0..=k_order {
            if k > 0 {
                z = node_col_shift(node_g, &z, f);
            }
            out[k * (l_order + 1) + l] = z.clone();
        }
    }
    Ok(out)
}

/// One application of a lazy product shift operator,
/// `y = sum_ij s_ij (S^i ⊗ S_F^j) x`, expanded term by term through the
/// reshape identity.
pub fn apply_product_shift(op: &ProductShiftOperator, x: &[f64]) -> Result<Vec<f64>> {
    let n = op.n_nodes();
    let f = op.n_features();
    check_product_dim(n, f, x.len())?;
    let mut out = vec![0.0; x.len()];
    for t in op.terms() {
        match (t.node_power, t.feat_power) {
            (0, 0) => axpy(t.coeff, x, &mut out),
            (1, 0) => {
                let z = node_col_shift(op.node_graph(), x, f);
                axpy(t.coeff, &z, &mut out);
            }
            (0, 1) => {
                let z = feat_row_shift(op.feature_graph(), x, n, f);
                axpy(t.coeff, &z, &mut out);
            }
            (1, 1) => {
                let z = feat_row_shift(op.feature_graph(), x, n, f);
                let z = node_col_shift(op.node_graph(), &z, f);
                axpy(t.coeff, &z, &mut out);
            }
            _ => unreachable!("term powers are 0 or 1"),
        }
    }
    Ok(out)
}

/// Evaluate `y = sum_k h_k S_prod^k x` by iterated lazy applications.
pub fn apply_product_shift_filter(
    op: &ProductShiftOperator,
    h: &FilterCoeffs,
    x: &[f64],
) -> Result<Vec<f64>> {
    check_product_dim(op.n_nodes(), op.n_features(), x.len())?;
    let coeffs = h.coeffs();
    let mut y = vec![0.0; x.len()];
    axpy(coeffs[0], x, &mut y);
    let mut z = x.to_vec();
    for &hk in &coeffs[1..] {
        z = apply_product_shift(op, &z)?;
        axpy(hk, &z, &mut y);
    }
    Ok(y)
}

/// Power-iteration estimate of the spectral norm of a lazy product operator.
pub fn product_operator_norm_estimate(
    op: &ProductShiftOperator,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let dim = op.dim();
    let opt = op.transposed();
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + (i as f64) * 0.618).collect();
    let norm = v.iter().map(|e| e * e).sum::<f64>().sqrt();
    v.iter_mut().for_each(|e| *e /= norm);
    let mut sigma = 0.0f64;
    for _ in 0..max_iter {
        let sv = apply_product_shift(op, &v)?;
        let stsv = apply_product_shift(&opt, &sv)?;
        let mu = stsv.iter().map(|e| e * e).sum::<f64>().sqrt();
        if mu == 0.0 {
            return Ok(0.0);
        }
        let next = mu.sqrt();
        let rel = (next - sigma).abs() / next.max(f64::MIN_POSITIVE);
        sigma = next;
        for (vi, wi) in v.iter_mut().zip(&stsv) {
            *vi = wi / mu;
        }
        if rel < tol {
            break;
        }
    }
    Ok(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense;
    use crate::graph::{make_product, ProductKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> Graph {
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if rng.gen::<f64>() < density {
                    t.push((i, j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        Graph::from_triplets(n, t).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn shift_on_zero_graph_is_zero() {
        let g = Graph::edgeless(3);
        let y = apply_shift(&g, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![0.0; 3]);
    }

    #[test]
    fn shift_swaps_two_nodes() {
        let g = Graph::from_triplets(2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap();
        let y = apply_shift(&g, &[3.0, 5.0]).unwrap();
        assert_eq!(y, vec![5.0, 3.0]);
    }

    #[test]
    fn shift_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_graph(&mut rng, 8, 0.4);
        let x = random_vec(&mut rng, 8);
        let y = apply_shift(&g, &x).unwrap();
        let yd = dense::matvec(&dense::materialize_graph(&g), &x);
        for (a, b) in y.iter().zip(&yd) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn shift_rejects_dimension_mismatch() {
        let g = Graph::edgeless(3);
        assert!(apply_shift(&g, &[1.0]).is_err());
    }

    #[test]
    fn poly_filter_identity_and_single_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_graph(&mut rng, 5, 0.5);
        let x = random_vec(&mut rng, 5);
        let id = apply_poly_filter(&g, &FilterCoeffs::new(vec![1.0]).unwrap(), &x).unwrap();
        assert_eq!(id, x);
        let sx = apply_poly_filter(&g, &FilterCoeffs::new(vec![0.0, 1.0]).unwrap(), &x).unwrap();
        assert_eq!(sx, apply_shift(&g, &x).unwrap());
    }

    #[test]
    fn poly_filter_matches_dense_polynomial_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = random_graph(&mut rng, 6, 0.5);
        let h = FilterCoeffs::new(random_vec(&mut rng, 4)).unwrap();
        let x = random_vec(&mut rng, 6);
        let y = apply_poly_filter(&g, &h, &x).unwrap();
        let yd = dense::poly_filter_dense(&dense::materialize_graph(&g), h.coeffs(), &x);
        for (a, b) in y.iter().zip(&yd) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn poly_filter_shift_madds_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = random_graph(&mut rng, 7, 0.5);
        let x = random_vec(&mut rng, 7);
        let k = 3;
        let h = FilterCoeffs::new(vec![1.0; k + 1]).unwrap();
        shift_ops::reset();
        apply_poly_filter(&g, &h, &x).unwrap();
        assert_eq!(shift_ops::count(), (k * g.n_edges()) as u64);
    }

    #[test]
    fn product_filter_identity_terms() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4;
        let f = 3;
        let ng = random_graph(&mut rng, n, 0.5);
        let fg = random_graph(&mut rng, f, 0.7);
        let x = random_vec(&mut rng, n * f);

        // h_00 = 1 only: identity.
        let h = ProductFilterCoeffs::from_nested(vec![vec![1.0]]).unwrap();
        assert_eq!(apply_product_filter(&ng, &fg, &h, &x).unwrap(), x);

        // h_10 = 1 only: (S ⊗ I_F) x, i.e. S applied per feature channel.
        let h = ProductFilterCoeffs::from_nested(vec![vec![0.0], vec![1.0]]).unwrap();
        let y = apply_product_filter(&ng, &fg, &h, &x).unwrap();
        for feat in 0..f {
            let chan: Vec<f64> = (0..n).map(|i| x[i * f + feat]).collect();
            let s_chan = apply_shift(&ng, &chan).unwrap();
            for i in 0..n {
                assert!((y[i * f + feat] - s_chan[i]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn product_filter_matches_dense_kronecker_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 4;
        let f = 3;
        let ng = random_graph(&mut rng, n, 0.5);
        let fg = random_graph(&mut rng, f, 0.7);
        let h = ProductFilterCoeffs::new(2, 2, random_vec(&mut rng, 9)).unwrap();
        let x = random_vec(&mut rng, n * f);
        let y = apply_product_filter(&ng, &fg, &h, &x).unwrap();
        let hd = dense::materialize_product_filter(&ng, &fg, &h);
        let yd = dense::matvec(&hd, &x);
        for (a, b) in y.iter().zip(&yd) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn product_shift_filter_collapses_to_plain_gvar() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ng = random_graph(&mut rng, 5, 0.5);
        let fg = Graph::edgeless(1);
        let op = make_product(&ng, &fg, ProductKind::Cartesian).unwrap();
        let x = random_vec(&mut rng, 5);
        let h = FilterCoeffs::new(vec![0.0, 1.0]).unwrap();
        let y = apply_product_shift_filter(&op, &h, &x).unwrap();
        assert_eq!(y, apply_shift(&ng, &x).unwrap());
        let hid = FilterCoeffs::new(vec![1.0]).unwrap();
        assert_eq!(apply_product_shift_filter(&op, &hid, &x).unwrap(), x);
    }

    #[test]
    fn product_shift_filter_matches_dense_cartesian_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ng = random_graph(&mut rng, 4, 0.6);
        let fg = random_graph(&mut rng, 2, 0.8);
        let op = make_product(&ng, &fg, ProductKind::Cartesian).unwrap();
        let h = FilterCoeffs::new(random_vec(&mut rng, 3)).unwrap();
        let x = random_vec(&mut rng, 8);
        let y = apply_product_shift_filter(&op, &h, &x).unwrap();
        let sd = dense::materialize_product_op(&op);
        let yd = dense::poly_filter_dense(&sd, h.coeffs(), &x);
        for (a, b) in y.iter().zip(&yd) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    // Cartesian powers expand binomially because S ⊗ I and I ⊗ S_F commute:
    // S_prod^k = sum_m C(k, m) S^m ⊗ S_F^(k-m). Deriving h_kl from h_k that
    // way must reproduce the product-shift filter exactly.
    #[test]
    fn cartesian_filter_equals_binomial_expansion() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let n = rng.gen_range(2..=5);
            let f = rng.gen_range(2..=3);
            let ng = random_graph(&mut rng, n, 0.5);
            let fg = random_graph(&mut rng, f, 0.7);
            let op = make_product(&ng, &fg, ProductKind::Cartesian).unwrap();
            let kmax = 3;
            let h = FilterCoeffs::new(random_vec(&mut rng, kmax + 1)).unwrap();
            let x = random_vec(&mut rng, n * f);

            let mut hkl = vec![vec![0.0; kmax + 1]; kmax + 1];
            for (k, &hk) in h.coeffs().iter().enumerate() {
                for m in 0..=k {
                    hkl[m][k - m] += hk * binomial(k, m);
                }
            }
            let expanded = ProductFilterCoeffs::from_nested(hkl).unwrap();

            let via_op = apply_product_shift_filter(&op, &h, &x).unwrap();
            let via_expansion = apply_product_filter(&ng, &fg, &expanded, &x).unwrap();
            for (a, b) in via_op.iter().zip(&via_expansion) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    fn binomial(n: usize, k: usize) -> f64 {
        let mut v = 1.0;
        for i in 0..k {
            v = v * (n - i) as f64 / (i + 1) as f64;
        }
        v
    }

    #[test]
    fn filters_are_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ng = random_graph(&mut rng, 5, 0.5);
        let fg = random_graph(&mut rng, 3, 0.6);
        let h = ProductFilterCoeffs::new(2, 1, random_vec(&mut rng, 6)).unwrap();
        let x = random_vec(&mut rng, 15);
        let z = random_vec(&mut rng, 15);
        let (a, b) = (0.7, -1.3);
        let combo: Vec<f64> = x.iter().zip(&z).map(|(xi, zi)| a * xi + b * zi).collect();
        let lhs = apply_product_filter(&ng, &fg, &h, &combo).unwrap();
        let fx = apply_product_filter(&ng, &fg, &h, &x).unwrap();
        let fz = apply_product_filter(&ng, &fg, &h, &z).unwrap();
        for i in 0..15 {
            assert!((lhs[i] - (a * fx[i] + b * fz[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_estimate_matches_dense_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ng = random_graph(&mut rng, 4, 0.6);
        let fg = random_graph(&mut rng, 3, 0.6);
        let op = make_product(&ng, &fg, ProductKind::Strong).unwrap();
        let est = product_operator_norm_estimate(&op, 1e-12, 5000).unwrap();
        let svd = dense::spectral_norm_dense(&dense::materialize_product_op(&op));
        assert!((est - svd).abs() < 1e-6 * svd.max(1.0), "{est} vs {svd}");
    }
}
