//! Multi-dimensional graph-signal sequences: node-major layout, preprocessing,
//! temporal splits and CSV I/O.
//!
//! A length-`N*F` signal is node-major: entry `i*F + f` holds feature `f` of
//! node `i`. Equivalently the signal is the column-major flattening of the
//! `F x N` matrix whose column `i` is the node signal of node `i`; the
//! filtering module leans on that identity.

use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A `T`-step sequence of `N*F`-dimensional node-major signals.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSequence {
    n_nodes: usize,
    n_features: usize,
    n_steps: usize,
    /// Row-major `T x (N*F)` data.
    data: Vec<f64>,
}

impl SignalSequence {
    /// Build a sequence from `T` rows of length `N*F`; all entries must be finite.
    pub fn from_rows(n_nodes: usize, n_features: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = n_nodes * n_features;
        if width == 0 {
            return Err(Error::InvalidParameter("sequence needs nodes and features".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * width);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::InvalidShape(format!(
                    "step {t} has {} entries, expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("step {t} has a non-finite entry")));
            }
            data.extend_from_slice(row);
        }
        Ok(SignalSequence {
            n_nodes,
            n_features,
            n_steps: rows.len(),
            data,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Signal width `N * F`.
    pub fn width(&self) -> usize {
        self.n_nodes * self.n_features
    }

    /// The signal at step `t`.
    pub fn step(&self, t: usize) -> &[f64] {
        let w = self.width();
        &self.data[t * w..(t + 1) * w]
    }

    /// Rows as a vector of owned signals.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_steps).map(|t| self.step(t).to_vec()).collect()
    }

    /// Extract one feature channel as an `N`-node, single-feature sequence.
    pub fn channel(&self, feature: usize) -> Result<SignalSequence> {
        if feature >= self.n_features {
            return Err(Error::InvalidParameter(format!(
                "feature {feature} out of range for F = {}",
                self.n_features
            )));
        }
        let mut data = Vec::with_capacity(self.n_steps * self.n_nodes);
        for t in 0..self.n_steps {
            let row = self.step(t);
            for i in 0..self.n_nodes {
                data.push(row[i * self.n_features + feature]);
            }
        }
        Ok(SignalSequence {
            n_nodes: self.n_nodes,
            n_features: 1,
            n_steps: self.n_steps,
            data,
        })
    }

    /// Sub-sequence over the step range.
    pub fn slice_steps(&self, range: Range<usize>) -> Result<SignalSequence> {
        if range.end > self.n_steps || range.start > range.end {
            return Err(Error::InvalidParameter(format!(
                "step range {range:?} out of bounds for T = {}",
                self.n_steps
            )));
        }
        let w = self.width();
        Ok(SignalSequence {
            n_nodes: self.n_nodes,
            n_features: self.n_features,
            n_steps: range.end - range.start,
            data: self.data[range.start * w..range.end * w].to_vec(),
        })
    }
}

/// Centering and scaling applied by [`preprocess`]: per-entry temporal mean
/// plus one global scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessTransform {
    pub mean: Vec<f64>,
    pub scale: f64,
}

impl PreprocessTransform {
    /// Identity transform for signals of the given width.
    pub fn identity(width: usize) -> Self {
        PreprocessTransform {
            mean: vec![0.0; width],
            scale: 1.0,
        }
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .map(|(v, m)| (v - m) / self.scale)
            .collect()
    }

    pub fn invert_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .map(|(v, m)| v * self.scale + m)
            .collect()
    }

    pub fn apply(&self, seq: &SignalSequence) -> Result<SignalSequence> {
        let rows = (0..seq.n_steps()).map(|t| self.apply_row(seq.step(t))).collect();
        SignalSequence::from_rows(seq.n_nodes(), seq.n_features(), rows)
    }

    pub fn invert(&self, seq: &SignalSequence) -> Result<SignalSequence> {
        let rows = (0..seq.n_steps()).map(|t| self.invert_row(seq.step(t))).collect();
        SignalSequence::from_rows(seq.n_nodes(), seq.n_features(), rows)
    }
}

/// Center each entry at its temporal mean, then scale everything by the global
/// maximum absolute value so the output has unit maximum.
pub fn preprocess(seq: &SignalSequence) -> Result<(SignalSequence, PreprocessTransform)> {
    if seq.n_steps() < 2 {
        return Err(Error::InvalidParameter("preprocessing needs at least 2 steps".into()));
    }
    let w = seq.width();
    let t_len = seq.n_steps() as f64;
    let mut mean = vec![0.0; w];
    for t in 0..seq.n_steps() {
        for (m, v) in mean.iter_mut().zip(seq.step(t)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= t_len);

    let mut max_abs = 0.0f64;
    for t in 0..seq.n_steps() {
        for (v, m) in seq.step(t).iter().zip(&mean) {
            max_abs = max_abs.max((v - m).abs());
        }
    }
    if max_abs == 0.0 {
        return Err(Error::DegenerateScale(
            "sequence is constant; nothing remains after centering".into(),
        ));
    }
    let transform = PreprocessTransform { mean, scale: max_abs };
    let out = transform.apply(seq)?;
    Ok((out, transform))
}

/// Dense `F x N` matrix whose column `i` is the node signal of node `i`.
///
/// Stored column-major, so the backing buffer of [`reshape_to_matrix`] output
/// is byte-identical to the node-major input vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_features: usize,
    n_nodes: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.n_features
    }

    pub fn n_cols(&self) -> usize {
        self.n_nodes
    }

    pub fn get(&self, feature: usize, node: usize) -> f64 {
        self.data[node * self.n_features + feature]
    }

    /// Column `i`: the node signal of node `i`.
    pub fn column(&self, node: usize) -> &[f64] {
        &self.data[node * self.n_features..(node + 1) * self.n_features]
    }

    /// Column-major flattening; reproduces the original node-major vector.
    pub fn flatten(&self) -> Vec<f64> {
        self.data.clone()
    }
}

/// View a node-major vector as the `F x N` matrix `Y` with `vec(Y) == x`.
pub fn reshape_to_matrix(x: &[f64], n_nodes: usize, n_features: usize) -> Result<FeatureMatrix> {
    if x.len() != n_nodes * n_features {
        return Err(Error::InvalidShape(format!(
            "vector length {} does not equal N*F = {}",
            x.len(),
            n_nodes * n_features
        )));
    }
    Ok(FeatureMatrix {
        n_features,
        n_nodes,
        data: x.to_vec(),
    })
}

/// Load a sequence CSV with header `t,v0,...,v{NF-1}`.
///
/// The file only carries the combined width, so the caller names the feature
/// count; the node count is `width / n_features`.
pub fn load_sequence(path: &Path, n_features: usize) -> Result<SignalSequence> {
    if n_features == 0 {
        return Err(Error::InvalidParameter("n_features must be at least 1".into()));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
    let mut width: Option<usize> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut prev_t: Option<i64> = None;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::Format {
                row,
                msg: "expected a time index and at least one value".into(),
            });
        }
        let t: i64 = rec[0].trim().parse().map_err(|_| Error::Format {
            row,
            msg: format!("cannot parse time index `{}`", &rec[0]),
        })?;
        if let Some(p) = prev_t {
            if t <= p {
                return Err(Error::Format {
                    row,
                    msg: format!("non-monotone time index {t} after {p}"),
                });
            }
        }
        prev_t = Some(t);
        let w = rec.len() - 1;
        match width {
            None => width = Some(w),
            Some(expect) if expect != w => {
                return Err(Error::Format {
                    row,
                    msg: format!("ragged row: {w} values, expected {expect}"),
                })
            }
            _ => {}
        }
        let mut vals = Vec::with_capacity(w);
        for field in rec.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Format {
                row,
                msg: format!("cannot parse value `{field}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Format {
                    row,
                    msg: "non-finite value".into(),
                });
            }
            vals.push(v);
        }
        rows.push(vals);
    }
    let width = width.ok_or_else(|| Error::InvalidInput("empty sequence file".into()))?;
    if width % n_features != 0 {
        return Err(Error::InvalidShape(format!(
            "{width} columns are not divisible by F = {n_features}"
        )));
    }
    SignalSequence::from_rows(width / n_features, n_features, rows)
}

/// Write a sequence CSV with header `t,v0,...,v{NF-1}` and round-trip-safe
/// float formatting.
pub fn save_sequence(seq: &SignalSequence, path: &Path) -> Result<()> {
    save_sequence_from(seq, path, 0)
}

/// Like [`save_sequence`] but with the time column starting at `t0`, for
/// prediction files aligned to a truth timeline.
pub fn save_sequence_from(seq: &SignalSequence, path: &Path, t0: usize) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((0..seq.width()).map(|i| format!("v{i}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for t in 0..seq.n_steps() {
        let vals: Vec<String> = seq.step(t).iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(w, "{},{}", t0 + t, vals.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Load a prediction CSV, returning the sequence and the time index of its
/// first row.
pub fn load_sequence_with_offset(path: &Path, n_features: usize) -> Result<(SignalSequence, usize)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path)?;
    let first = rdr
        .records()
        .next()
        .transpose()?
        .ok_or_else(|| Error::InvalidInput("empty sequence file".into()))?;
    let t0: usize = first[0].trim().parse().map_err(|_| Error::Format {
        row: 0,
        msg: format!("cannot parse time index `{}`", &first[0]),
    })?;
    let seq = load_sequence(path, n_features)?;
    Ok((seq, t0))
}

/// Contiguous temporal split into training, validation and test ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

impl Split {
    /// End of the in-sample (train + validation) region.
    pub fn in_sample_end(&self) -> usize {
        self.val.end
    }
}

/// Split `t_total` steps into contiguous train/validation/test segments.
///
/// The first `floor(in_fraction * T)` steps are in-sample; of those the first
/// `floor(train_fraction * in)` are training and the rest validation; the
/// remaining steps are test. Temporal order is preserved, nothing is
/// shuffled. Every segment must have at least `min_segment` steps (pass the
/// maximum lag plus one when fitting).
pub fn split_series(
    t_total: usize,
    in_fraction: f64,
    train_fraction: f64,
    min_segment: usize,
) -> Result<Split> {
    if !(0.0 < in_fraction && in_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "in_fraction must be in (0, 1), got {in_fraction}"
        )));
    }
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let in_len = (in_fraction * t_total as f64).floor() as usize;
    let train_len = (train_fraction * in_len as f64).floor() as usize;
    let val_len = in_len - train_len;
    let test_len = t_total - in_len;
    let need = min_segment.max(1);
    for (name, len) in [("training", train_len), ("validation", val_len), ("test", test_len)] {
        if len < need {
            return Err(Error::InsufficientData {
                segment: match name {
                    "training" => "training",
                    "validation" => "validation",
                    _ => "test",
                },
                have: len,
                need,
            });
        }
    }
    Ok(Split {
        train: 0..train_len,
        val: train_len..in_len,
        test: in_len..t_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: Vec<Vec<f64>>, n: usize, f: usize) -> SignalSequence {
        SignalSequence::from_rows(n, f, rows).unwrap()
    }

    #[test]
    fn preprocess_two_point_centering() {
        let s = seq(vec![vec![1.0], vec![3.0]], 1, 1);
        let (out, tr) = preprocess(&s).unwrap();
        assert_eq!(tr.mean, vec![2.0]);
        assert_eq!(tr.scale, 1.0);
        assert_eq!(out.step(0), &[-1.0]);
        assert_eq!(out.step(1), &[1.0]);
    }

    #[test]
    fn preprocess_idempotent_on_normalized_data() {
        let s = seq(vec![vec![-1.0, 0.5], vec![1.0, -0.5]], 1, 2);
        let (out, tr) = preprocess(&s).unwrap();
        assert_eq!(tr.mean, vec![0.0, 0.0]);
        assert_eq!(tr.scale, 1.0);
        assert_eq!(out, s);
    }

    #[test]
    fn preprocess_rejects_constant_sequence() {
        let s = seq(vec![vec![5.0], vec![5.0], vec![5.0]], 1, 1);
        assert!(matches!(preprocess(&s), Err(Error::DegenerateScale(_))));
    }

    #[test]
    fn preprocess_round_trip() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..6).map(|_| rng.gen_range(-5.0..5.0)).collect())
            .collect();
        let s = seq(rows, 3, 2);
        let (out, tr) = preprocess(&s).unwrap();
        // Per-entry mean ~ 0 and unit max.
        for e in 0..s.width() {
            let m: f64 = (0..out.n_steps()).map(|t| out.step(t)[e]).sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-12);
        }
        let max = (0..out.n_steps())
            .flat_map(|t| out.step(t).to_vec())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((max - 1.0).abs() < 1e-12);
        let back = tr.invert(&out).unwrap();
        for t in 0..s.n_steps() {
            for (a, b) in back.step(t).iter().zip(s.step(t)) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn reshape_layout_definition() {
        let x = [1.0, 2.0, 3.0, 4.0]; // a, b, c, d
        let y = reshape_to_matrix(&x, 2, 2).unwrap();
        // Y = [[a, c], [b, d]]
        assert_eq!(y.get(0, 0), 1.0);
        assert_eq!(y.get(0, 1), 3.0);
        assert_eq!(y.get(1, 0), 2.0);
        assert_eq!(y.get(1, 1), 4.0);
        assert_eq!(y.flatten(), x.to_vec());
    }

    #[test]
    fn reshape_single_node() {
        let x = [7.0, 8.0, 9.0];
        let y = reshape_to_matrix(&x, 1, 3).unwrap();
        assert_eq!(y.n_cols(), 1);
        assert_eq!(y.column(0), &x);
    }

    #[test]
    fn reshape_rejects_bad_length() {
        assert!(matches!(
            reshape_to_matrix(&[1.0, 2.0, 3.0], 2, 2),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn sequence_csv_parse() {
        let dir = std::env::temp_dir().join("pgvar_seq_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("seq.csv");
        std::fs::write(&path, "t,v0,v1\n0,0.5,-0.5\n1,0.25,-0.25\n").unwrap();
        let s = load_sequence(&path, 2).unwrap();
        assert_eq!(s.n_steps(), 2);
        assert_eq!(s.n_nodes(), 1);
        assert_eq!(s.step(1), &[0.25, -0.25]);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn sequence_csv_rejects_bad_rows() {
        let dir = std::env::temp_dir().join("pgvar_seq_bad_test");
        std::fs::create_dir_all(&dir).unwrap();
        let ragged = dir.join("ragged.csv");
        std::fs::write(&ragged, "t,v0,v1\n0,1.0,2.0\n1,1.0\n").unwrap();
        assert!(matches!(load_sequence(&ragged, 1), Err(Error::Format { row: 1, .. })));
        let nonmono = dir.join("nonmono.csv");
        std::fs::write(&nonmono, "t,v0\n1,1.0\n0,2.0\n").unwrap();
        assert!(matches!(load_sequence(&nonmono, 1), Err(Error::Format { row: 1, .. })));
        let nan = dir.join("nan.csv");
        std::fs::write(&nan, "t,v0\n0,NaN\n").unwrap();
        assert!(matches!(load_sequence(&nan, 1), Err(Error::Format { row: 0, .. })));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn mesh_scale_sequence_dimensions() {
        // 251 nodes with 3 coordinates over 59 steps: 753 value columns.
        let rows: Vec<Vec<f64>> = (0..59)
            .map(|t| (0..753).map(|e| ((t * 753 + e) % 97) as f64 * 0.01).collect())
            .collect();
        let s = seq(rows, 251, 3);
        let dir = std::env::temp_dir().join("pgvar_seq_dog_shape_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("seq.csv");
        save_sequence(&s, &path).unwrap();
        let back = load_sequence(&path, 3).unwrap();
        assert_eq!(back.n_steps(), 59);
        assert_eq!(back.n_nodes(), 251);
        assert_eq!(back.width(), 753);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn sequence_csv_round_trip_bitwise() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..6).map(|_| rng.gen::<f64>() * 1e3 - 500.0).collect())
            .collect();
        let s = seq(rows, 2, 3);
        let dir = std::env::temp_dir().join("pgvar_seq_rt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("seq.csv");
        save_sequence(&s, &path).unwrap();
        let back = load_sequence(&path, 3).unwrap();
        for t in 0..s.n_steps() {
            for (a, b) in s.step(t).iter().zip(back.step(t)) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn split_paper_counts() {
        let s = split_series(59, 0.9, 0.7, 1).unwrap();
        assert_eq!(s.train, 0..37);
        assert_eq!(s.val, 37..53);
        assert_eq!(s.test, 53..59);
    }

    #[test]
    fn split_floor_arithmetic() {
        let s = split_series(10, 0.5, 0.5, 1).unwrap();
        assert_eq!(s.train, 0..2);
        assert_eq!(s.val, 2..5);
        assert_eq!(s.test, 5..10);
    }

    #[test]
    fn split_rejects_short_segment() {
        let err = split_series(8, 0.5, 0.7, 3);
        match err {
            Err(Error::InsufficientData { segment, .. }) => assert_eq!(segment, "training"),
            other => panic!("expected insufficient data, got {other:?}"),
        }
    }

    #[test]
    fn split_exhaustive_cover_and_disjoint() {
        let fracs = [0.1, 0.25, 0.5, 0.6, 0.7, 0.75, 0.8, 0.9];
        for t in 3..=30usize {
            for &inf in &fracs {
                for &trf in &fracs {
                    let Ok(s) = split_series(t, inf, trf, 1) else { continue };
                    assert_eq!(s.train.start, 0);
                    assert_eq!(s.train.end, s.val.start);
                    assert_eq!(s.val.end, s.test.start);
                    assert_eq!(s.test.end, t);
                    assert!(!s.train.is_empty() && !s.val.is_empty() && !s.test.is_empty());
                }
            }
        }
    }

    #[test]
    fn channel_extraction() {
        let s = seq(vec![vec![1.0, 2.0, 3.0, 4.0]], 2, 2);
        let c1 = s.channel(1).unwrap();
        assert_eq!(c1.step(0), &[2.0, 4.0]);
        assert!(s.channel(2).is_err());
    }
}
