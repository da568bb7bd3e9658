//! Sparse graph shift operators and product-graph algebra.
//!
//! A [`Graph`] stores a sparse shift operator as row-sorted `(row, col, weight)`
//! triples. All powers of the operator are evaluated by iterated sparse
//! shifts, so nothing here ever materializes a dense matrix; dense forms only
//! appear in the [`crate::dense`] reference routines.

mod knn;
mod product;

pub use knn::{build_knn_graph, load_points_csv, save_points_csv, KnnWeighting};
pub use product::{make_product, product_edge_count, ProductKind, ProductShiftOperator, ProductTerm};

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Sparse weighted graph shift operator over `n_nodes` vertices.
///
/// Entries are directed: a stored `(i, j, w)` contributes `w * x[j]` to row
/// `i` of a shift `S x`. Exact-zero weights are dropped at construction, so
/// the stored entry count is the directed edge count `|E|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    /// Row-sorted, duplicate-free triples.
    edges: Vec<(usize, usize, f64)>,
    is_symmetric: bool,
}

impl Graph {
    /// Build a graph from directed weighted triples.
    ///
    /// Validates index bounds, finiteness and duplicates; drops exact zeros;
    /// sorts by `(row, col)` and detects symmetry.
    pub fn from_triplets(n_nodes: usize, triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut edges: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for (i, j, w) in triplets {
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::InvalidInput(format!(
                    "edge ({i}, {j}) out of bounds for {n_nodes} nodes"
                )));
            }
            if !w.is_finite() {
                return Err(Error::InvalidInput(format!("edge ({i}, {j}) has non-finite weight")));
            }
            if w != 0.0 {
                edges.push((i, j, w));
            }
        }
        edges.sort_unstable_by_key(|e| (e.0, e.1));
        for pair in edges.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::InvalidInput(format!(
                    "duplicate edge ({}, {})",
                    pair[0].0, pair[0].1
                )));
            }
        }
        let mut g = Graph {
            n_nodes,
            edges,
            is_symmetric: false,
        };
        g.is_symmetric = g.detect_symmetry();
        Ok(g)
    }

    /// Graph with no edges.
    pub fn edgeless(n_nodes: usize) -> Self {
        Graph {
            n_nodes,
            edges: Vec::new(),
            is_symmetric: true,
        }
    }

    /// Fully connected graph (no self loops) with unit weights.
    pub fn complete(n_nodes: usize) -> Result<Self> {
        let mut t = Vec::with_capacity(n_nodes * n_nodes.saturating_sub(1));
        for i in 0..n_nodes {
            for j in 0..n_nodes {
                if i != j {
                    t.push((i, j, 1.0));
                }
            }
        }
        Graph::from_triplets(n_nodes, t)
    }

    /// Undirected path 0-1-...-(n-1) with unit weights.
    pub fn path(n_nodes: usize) -> Result<Self> {
        let mut t = Vec::new();
        for i in 1..n_nodes {
            t.push((i - 1, i, 1.0));
            t.push((i, i - 1, 1.0));
        }
        Graph::from_triplets(n_nodes, t)
    }

    /// Undirected ring with unit weights.
    pub fn ring(n_nodes: usize) -> Result<Self> {
        if n_nodes < 3 {
            return Graph::path(n_nodes);
        }
        let mut t = Vec::new();
        for i in 0..n_nodes {
            let j = (i + 1) % n_nodes;
            t.push((i, j, 1.0));
            t.push((j, i, 1.0));
        }
        Graph::from_triplets(n_nodes, t)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of stored directed entries.
    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.is_symmetric
    }

    /// Row-sorted `(row, col, weight)` triples.
    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    /// Weight of entry `(i, j)` if stored.
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.edges
            .binary_search_by(|e| (e.0, e.1).cmp(&(i, j)))
            .ok()
            .map(|idx| self.edges[idx].2)
    }

    /// Graph with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut g = self.clone();
        for e in &mut g.edges {
            e.2 *= factor;
        }
        g
    }

    /// Transposed operator (all triples flipped).
    pub fn transposed(&self) -> Self {
        let mut edges: Vec<(usize, usize, f64)> =
            self.edges.iter().map(|&(i, j, w)| (j, i, w)).collect();
        edges.sort_unstable_by_key(|e| (e.0, e.1));
        Graph {
            n_nodes: self.n_nodes,
            edges,
            is_symmetric: self.is_symmetric,
        }
    }

    fn detect_symmetry(&self) -> bool {
        self.edges
            .iter()
            .all(|&(i, j, w)| self.weight(j, i) == Some(w))
    }

    /// Plain sparse matvec `y = S x`, used internally where the instrumented
    /// shift in [`crate::filtering`] is not wanted.
    pub(crate) fn matvec(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for &(i, j, w) in &self.edges {
            out[i] += w * x[j];
        }
    }

    /// Write the edge list as CSV with header `src,dst,weight`.
    pub fn save_edges_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        writeln!(w, "src,dst,weight")?;
        for &(i, j, wt) in &self.edges {
            writeln!(w, "{},{},{:.17e}", i, j, wt)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Load an edge-list CSV with header `src,dst,weight` and 0-based indices.
    ///
    /// The node count is taken as `max index + 1` unless `n_nodes` is given.
    pub fn load_edges_csv(path: &Path, n_nodes: Option<usize>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
        let mut triplets = Vec::new();
        let mut max_idx = 0usize;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Format {
                    row,
                    msg: format!("expected 3 columns, found {}", rec.len()),
                });
            }
            let parse = |field: &str, what: &str| -> Result<f64> {
                field.trim().parse::<f64>().map_err(|_| Error::Format {
                    row,
                    msg: format!("cannot parse {what} `{field}`"),
                })
            };
            let src = parse(&rec[0], "src")? as usize;
            let dst = parse(&rec[1], "dst")? as usize;
            let weight = parse(&rec[2], "weight")?;
            if !weight.is_finite() {
                return Err(Error::Format {
                    row,
                    msg: "non-finite weight".into(),
                });
            }
            max_idx = max_idx.max(src).max(dst);
            triplets.push((src, dst, weight));
        }
        let n = n_nodes.unwrap_or(max_idx + 1);
        Graph::from_triplets(n, triplets)
    }
}

/// Rescale a shift operator to unit spectral norm.
///
/// The norm is estimated by power iteration on `SᵀS`, stopping when the
/// relative change of the estimate drops below `tol` or after `max_iter`
/// iterations.
pub fn normalize_shift(g: &Graph, tol: f64, max_iter: usize) -> Result<Graph> {
    if tol <= 0.0 {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    if g.n_edges() == 0 {
        return Err(Error::DegenerateGraph(
            "cannot normalize a graph with no edges".into(),
        ));
    }
    let sigma = spectral_norm_estimate(g, tol, max_iter);
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::DegenerateGraph(
            "spectral norm estimate vanished".into(),
        ));
    }
    Ok(g.scaled(1.0 / sigma))
}

/// Power-iteration estimate of the largest singular value of `S`.
pub fn spectral_norm_estimate(g: &Graph, tol: f64, max_iter: usize) -> f64 {
    let n = g.n_nodes();
    let gt = g.transposed();
    // Deterministic start vector with varying entries so it is unlikely to be
    // orthogonal to the dominant singular vector.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64) * 0.618).collect();
    let norm = l2_norm(&v);
    v.iter_mut().for_each(|e| *e /= norm);

    let mut sv = vec![0.0; n];
    let mut stsv = vec![0.0; n];
    let mut sigma = 0.0f64;
    for _ in 0..max_iter {
        g.matvec(&v, &mut sv);
        gt.matvec(&sv, &mut stsv);
        let mu = l2_norm(&stsv);
        if mu == 0.0 {
            return 0.0;
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
    sigma
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|e| e * e).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_bounds_and_duplicates() {
        assert!(Graph::from_triplets(2, vec![(0, 2, 1.0)]).is_err());
        assert!(Graph::from_triplets(2, vec![(0, 1, 1.0), (0, 1, 2.0)]).is_err());
        assert!(Graph::from_triplets(2, vec![(0, 1, f64::NAN)]).is_err());
    }

    #[test]
    fn drops_zero_weights() {
        let g = Graph::from_triplets(3, vec![(0, 1, 0.0), (1, 2, 2.0)]).unwrap();
        assert_eq!(g.n_edges(), 1);
    }

    #[test]
    fn symmetry_detection() {
        let sym = Graph::from_triplets(2, vec![(0, 1, 3.0), (1, 0, 3.0)]).unwrap();
        assert!(sym.is_symmetric());
        let asym = Graph::from_triplets(2, vec![(0, 1, 3.0), (1, 0, 2.0)]).unwrap();
        assert!(!asym.is_symmetric());
    }

    #[test]
    fn normalize_single_self_loop() {
        let g = Graph::from_triplets(1, vec![(0, 0, 4.0)]).unwrap();
        let n = normalize_shift(&g, 1e-12, 500).unwrap();
        assert!((n.weight(0, 0).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn normalize_rejects_edgeless() {
        let g = Graph::edgeless(3);
        assert!(matches!(
            normalize_shift(&g, 1e-9, 100),
            Err(Error::DegenerateGraph(_))
        ));
    }

    #[test]
    fn normalize_matches_dense_eigendecomposition() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let mut t = Vec::new();
        for i in 0..6usize {
            for j in 0..6usize {
                if rng.gen::<f64>() < 0.5 {
                    t.push((i, j, rng.gen_range(-2.0..2.0)));
                }
            }
        }
        let g = Graph::from_triplets(6, t).unwrap();
        let tol = 1e-12;
        let normalized = normalize_shift(&g, tol, 10000).unwrap();
        let dense_norm = crate::dense::spectral_norm_dense(&crate::dense::materialize_graph(&normalized));
        assert!((dense_norm - 1.0).abs() < 1e-6, "dense norm {dense_norm}");
        let est = spectral_norm_estimate(&normalized, tol, 10000);
        assert!(est >= 1.0 - 10.0 * tol && est <= 1.0 + 10.0 * tol);
    }

    #[test]
    fn normalize_is_idempotent_up_to_tol() {
        let g = Graph::from_triplets(
            4,
            vec![(0, 1, 1.5), (1, 0, 1.5), (1, 2, -0.7), (2, 1, -0.7), (2, 3, 0.3), (3, 2, 0.3)],
        )
        .unwrap();
        let tol = 1e-10;
        let once = normalize_shift(&g, tol, 2000).unwrap();
        let twice = normalize_shift(&once, tol, 2000).unwrap();
        for (a, b) in once.edges().iter().zip(twice.edges()) {
            assert!((a.2 - b.2).abs() <= 10.0 * tol * a.2.abs().max(1.0));
        }
    }

    #[test]
    fn edge_csv_round_trip() {
        let g = Graph::from_triplets(3, vec![(0, 1, 0.123456789012345), (2, 0, -4.5)]).unwrap();
        let dir = std::env::temp_dir().join("pgvar_graph_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("edges.csv");
        g.save_edges_csv(&path).unwrap();
        let back = Graph::load_edges_csv(&path, Some(3)).unwrap();
        assert_eq!(g, back);
        std::fs::remove_dir_all(&dir).ok();
    }
}
