use std::path::Path;

use super::Graph;
use crate::error::{Error, Result};

/// Edge weighting for kNN graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnnWeighting {
    /// Every kept edge has weight 1.
    Binary,
    /// `w_ij = exp(-d_ij^2 / sigma^2)` with `sigma` the mean kNN distance.
    Gaussian,
}

/// Build a symmetrized k-nearest-neighbor graph from a point cloud.
///
/// Each node gets directed edges to its `k` nearest neighbors by Euclidean
/// distance (self excluded, ties broken by node index); the result is then
/// symmetrized with the union rule: an edge is kept if present in either
/// direction, with weight `max` of the two.
pub fn build_knn_graph(points: &[Vec<f64>], k: usize, weighting: KnnWeighting) -> Result<Graph> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty point cloud".into()));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k >= n {
        return Err(Error::InvalidParameter(format!(
            "k = {k} requires at least {} points, found {n}",
            k + 1
        )));
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(Error::InvalidInput("points must have at least one coordinate".into()));
    }
    for (i, p) in points.iter().enumerate() {
        if p.len() != dim {
            return Err(Error::InvalidInput(format!(
                "point {i} has {} coordinates, expected {dim}",
                p.len()
            )));
        }
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("point {i} has a non-finite coordinate")));
        }
    }

    // Directed kNN selection, O(N^2 D). Point clouds here are a few hundred
    // nodes, so a spatial index would not pay for itself.
    let mut neighbors: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut dist_sum = 0.0;
    for i in 0..n {
        let mut cand: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (euclidean(&points[i], &points[j]), j))
            .collect();
        cand.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        cand.truncate(k);
        dist_sum += cand.iter().map(|(d, _)| d).sum::<f64>();
        neighbors.push(cand.into_iter().map(|(d, j)| (j, d)).collect());
    }
    let sigma = dist_sum / (n * k) as f64;

    let weight_of = |d: f64| -> f64 {
        match weighting {
            KnnWeighting::Binary => 1.0,
            KnnWeighting::Gaussian => {
                if d == 0.0 || sigma == 0.0 {
                    1.0
                } else {
                    (-d * d / (sigma * sigma)).exp()
                }
            }
        }
    };

    // Union/max symmetrization.
    let mut weights: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    for (i, nbrs) in neighbors.iter().enumerate() {
        for &(j, d) in nbrs {
            let w = weight_of(d);
            for key in [(i, j), (j, i)] {
                let slot = weights.entry(key).or_insert(w);
                if w > *slot {
                    *slot = w;
                }
            }
        }
    }
    let triplets: Vec<(usize, usize, f64)> =
        weights.into_iter().map(|((i, j), w)| (i, j, w)).collect();
    Graph::from_triplets(n, triplets)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Load a point cloud CSV with header `node,c1,...,cD`.
///
/// The `node` column must run 0, 1, 2, ... in order.
pub fn load_points_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
    let mut points = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Format {
                row,
                msg: "expected a node index and at least one coordinate".into(),
            });
        }
        let node: usize = rec[0].trim().parse().map_err(|_| Error::Format {
            row,
            msg: format!("cannot parse node index `{}`", &rec[0]),
        })?;
        if node != row {
            return Err(Error::Format {
                row,
                msg: format!("node index {node} out of order"),
            });
        }
        let mut coords = Vec::with_capacity(rec.len() - 1);
        for field in rec.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Format {
                row,
                msg: format!("cannot parse coordinate `{field}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Format {
                    row,
                    msg: "non-finite coordinate".into(),
                });
            }
            coords.push(v);
        }
        if let Some(first) = points.first() {
            let first: &Vec<f64> = first;
            if coords.len() != first.len() {
                return Err(Error::Format {
                    row,
                    msg: format!("ragged row: {} coordinates, expected {}", coords.len(), first.len()),
                });
            }
        }
        points.push(coords);
    }
    Ok(points)
}

/// Write a point cloud CSV with header `node,c1,...,cD`.
pub fn save_points_csv(points: &[Vec<f64>], path: &Path) -> Result<()> {
    use std::io::Write;
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    let dim = points.first().map_or(0, |p| p.len());
    let header: Vec<String> = std::iter::once("node".to_string())
        .chain((1..=dim).map(|d| format!("c{d}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (i, p) in points.iter().enumerate() {
        let vals: Vec<String> = p.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(w, "{},{}", i, vals.join(","))?;
    }
    w.flush()?;
    Ok(())
}
