//! The four predictor families and their one-step / rollout recursions.
//!
//! Coefficients are stored in the sign convention of the autoregression
//! `x_t = -sum_p H_p x_{t-p} + e_t`; prediction applies the leading minus.

mod io;

pub use io::{load_model, save_model, ModelDocument};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::filtering::{
    apply_poly_filter, apply_product_filter, apply_product_shift_filter, FilterCoeffs,
    ProductFilterCoeffs,
};
use crate::graph::{Graph, ProductShiftOperator};
use crate::signal::SignalSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    Var,
    Gvar,
    Pgvar,
    Gpgvar,
}

impl ModelFamily {
    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::Var => "var",
            ModelFamily::Gvar => "gvar",
            ModelFamily::Pgvar => "pgvar",
            ModelFamily::Gpgvar => "gpgvar",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "var" => Ok(ModelFamily::Var),
            "gvar" => Ok(ModelFamily::Gvar),
            "pgvar" => Ok(ModelFamily::Pgvar),
            "gpgvar" => Ok(ModelFamily::Gpgvar),
            other => Err(Error::InvalidParameter(format!("unknown model family `{other}`"))),
        }
    }
}

/// Per-lag graph-filter coefficients of a multi-channel model: one filter per
/// lag, either shared by every feature channel or separate per channel.
#[derive(Debug, Clone, PartialEq)]
pub enum GvarCoeffs {
    /// `coeffs[p]` applied to every channel.
    Shared(Vec<FilterCoeffs>),
    /// `coeffs[f][p]`, one independent model per channel.
    PerChannel(Vec<Vec<FilterCoeffs>>),
}

impl GvarCoeffs {
    fn lag_order(&self) -> usize {
        match self {
            GvarCoeffs::Shared(c) => c.len(),
            GvarCoeffs::PerChannel(c) => c[0].len(),
        }
    }

    fn shift_order(&self) -> usize {
        match self {
            GvarCoeffs::Shared(c) => c[0].order(),
            GvarCoeffs::PerChannel(c) => c[0][0].order(),
        }
    }

    fn channel(&self, f: usize) -> &[FilterCoeffs] {
        match self {
            GvarCoeffs::Shared(c) => c,
            GvarCoeffs::PerChannel(c) => &c[f],
        }
    }
}

/// Fitted parameters of one predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    /// Classical dense VAR with `P` full lag matrices.
    Var { lag_matrices: Vec<DMatrix<f64>> },
    /// Graph VAR: one polynomial filter in `S` per lag, run per feature channel.
    Gvar {
        graph: Graph,
        n_features: usize,
        coeffs: GvarCoeffs,
    },
    /// Product-graph VAR: polynomial filters in the lazy product shift.
    Pgvar {
        op: ProductShiftOperator,
        /// `coeffs[p]`, each of shift order `K`.
        coeffs: Vec<FilterCoeffs>,
    },
    /// Generalized product-graph VAR: bivariate filters in `(S^k ⊗ S_F^l)`.
    Gpgvar {
        node_graph: Graph,
        feature_graph: Graph,
        /// `coeffs[p]`, each `(K+1) x (L+1)`.
        coeffs: Vec<ProductFilterCoeffs>,
    },
}

impl ModelParams {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelParams::Var { .. } => ModelFamily::Var,
            ModelParams::Gvar { .. } => ModelFamily::Gvar,
            ModelParams::Pgvar { .. } => ModelFamily::Pgvar,
            ModelParams::Gpgvar { .. } => ModelFamily::Gpgvar,
        }
    }

    /// Lag order `P`.
    pub fn lag_order(&self) -> usize {
        match self {
            ModelParams::Var { lag_matrices } => lag_matrices.len(),
            ModelParams::Gvar { coeffs, .. } => coeffs.lag_order(),
            ModelParams::Pgvar { coeffs, .. } => coeffs.len(),
            ModelParams::Gpgvar { coeffs, .. } => coeffs.len(),
        }
    }

    /// `(K, L)` shift orders where applicable.
    pub fn shift_orders(&self) -> (Option<usize>, Option<usize>) {
        match self {
            ModelParams::Var { .. } => (None, None),
            ModelParams::Gvar { coeffs, .. } => (Some(coeffs.shift_order()), None),
            ModelParams::Pgvar { coeffs, .. } => (Some(coeffs[0].order()), None),
            ModelParams::Gpgvar { coeffs, .. } => {
                (Some(coeffs[0].k_order()), Some(coeffs[0].l_order()))
            }
        }
    }

    /// Signal width `N * F` the model predicts.
    pub fn width(&self) -> usize {
        match self {
            ModelParams::Var { lag_matrices } => lag_matrices[0].nrows(),
            ModelParams::Gvar { graph, n_features, .. } => graph.n_nodes() * n_features,
            ModelParams::Pgvar { op, .. } => op.dim(),
            ModelParams::Gpgvar { node_graph, feature_graph, .. } => {
                node_graph.n_nodes() * feature_graph.n_nodes()
            }
        }
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        match self {
            ModelParams::Var { lag_matrices } => {
                lag_matrices.len() * lag_matrices[0].nrows() * lag_matrices[0].ncols()
            }
            ModelParams::Gvar { coeffs, .. } => match coeffs {
                GvarCoeffs::Shared(c) => c.len() * (c[0].order() + 1),
                GvarCoeffs::PerChannel(c) => {
                    c.len() * c[0].len() * (c[0][0].order() + 1)
                }
            },
            ModelParams::Pgvar { coeffs, .. } => coeffs.len() * (coeffs[0].order() + 1),
            ModelParams::Gpgvar { coeffs, .. } => {
                coeffs.len() * (coeffs[0].k_order() + 1) * (coeffs[0].l_order() + 1)
            }
        }
    }
}

fn check_history(m: &ModelParams, history: &[&[f64]]) -> Result<usize> {
    let p = m.lag_order();
    if history.len() < p {
        return Err(Error::InvalidParameter(format!(
            "history has {} entries, model needs {p} lags",
            history.len()
        )));
    }
    let w = m.width();
    for (idx, h) in history.iter().take(p).enumerate() {
        if h.len() != w {
            return Err(Error::DimensionMismatch(format!(
                "history entry {idx} has length {}, expected {w}",
                h.len()
            )));
        }
    }
    Ok(p)
}

/// One-step prediction `x̂_t = -sum_p H_p x_{t-p}`.
///
/// `history[0]` is the most recent signal `x_{t-1}`, `history[p-1]` is `x_{t-p}`.
pub fn predict_one_step(m: &ModelParams, history: &[&[f64]]) -> Result<Vec<f64>> {
    let p_order = check_history(m, history)?;
    let w = m.width();
    let mut acc = vec![0.0; w];
    match m {
        ModelParams::Var { lag_matrices } => {
            for (a, lag) in lag_matrices.iter().zip(history) {
                let xv = nalgebra::DVector::from_column_slice(lag);
                let y = a * xv;
                for (ai, yi) in acc.iter_mut().zip(y.iter()) {
                    *ai += yi;
                }
            }
        }
        ModelParams::Gvar { graph, n_features, coeffs } => {
            let n = graph.n_nodes();
            let f_count = *n_features;
            let mut chan = vec![0.0; n];
            for (p, lag) in history.iter().take(p_order).enumerate() {
                for f in 0..f_count {
                    for i in 0..n {
                        chan[i] = lag[i * f_count + f];
                    }
                    let y = apply_poly_filter(graph, &coeffs.channel(f)[p], &chan)?;
                    for i in 0..n {
                        acc[i * f_count + f] += y[i];
                    }
                }
            }
        }
        ModelParams::Pgvar { op, coeffs } => {
            for p in 0..p_order {
                let y = apply_product_shift_filter(op, &coeffs[p], history[p])?;
                for (ai, yi) in acc.iter_mut().zip(&y) {
                    *ai += yi;
                }
            }
        }
        ModelParams::Gpgvar { node_graph, feature_graph, coeffs } => {
            for p in 0..p_order {
                let y = apply_product_filter(node_graph, feature_graph, &coeffs[p], history[p])?;
                for (ai, yi) in acc.iter_mut().zip(&y) {
                    *ai += yi;
                }
            }
        }
    }
    acc.iter_mut().for_each(|v| *v = -*v);
    Ok(acc)
}

/// How a rollout feeds its lags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionMode {
    /// Ground-truth lags at every step (one-step-ahead evaluation).
    TeacherForced,
    /// The model's own predictions once past `t_start`.
    Recursive,
}

/// Predict steps `t_start..t_end` of `seq`.
pub fn rollout(
    m: &ModelParams,
    seq: &SignalSequence,
    t_start: usize,
    t_end: usize,
    mode: PredictionMode,
) -> Result<Vec<Vec<f64>>> {
    let p = m.lag_order();
    if t_start < p {
        return Err(Error::InvalidParameter(format!(
            "t_start = {t_start} leaves fewer than P = {p} lags"
        )));
    }
    if t_end > seq.n_steps() || t_start > t_end {
        return Err(Error::InvalidParameter(format!(
            "range {t_start}..{t_end} out of bounds for T = {}",
            seq.n_steps()
        )));
    }
    if seq.width() != m.width() {
        return Err(Error::DimensionMismatch(format!(
            "sequence width {} vs model width {}",
            seq.width(),
            m.width()
        )));
    }
    let mut preds: Vec<Vec<f64>> = Vec::with_capacity(t_end - t_start);
    for t in t_start..t_end {
        let history: Vec<&[f64]> = (1..=p)
            .map(|lag| {
                let s = t - lag;
                match mode {
                    PredictionMode::TeacherForced => seq.step(s),
                    PredictionMode::Recursive => {
                        if s >= t_start {
                            preds[s - t_start].as_slice()
                        } else {
                            seq.step(s)
                        }
                    }
                }
            })
            .collect();
        preds.push(predict_one_step(m, &history)?);
    }
    Ok(preds)
}

/// Collapse a product-graph model onto the plain graph family it nests.
///
/// A Cartesian-product model whose feature graph has no edges acts as the
/// same polynomial filter in `S` on every channel; a bivariate model with
/// `L = 0` does likewise. Anything else is not reducible.
pub fn reduce_model(m: &ModelParams) -> Result<ModelParams> {
    match m {
        ModelParams::Pgvar { op, coeffs } => {
            let preset_cartesian = matches!(op.kind(), crate::graph::ProductKind::Cartesian);
            if !preset_cartesian {
                return Err(Error::Unsupported(
                    "only the cartesian preset reduces to a plain graph model".into(),
                ));
            }
            if op.feature_graph().n_edges() != 0 {
                return Err(Error::Unsupported(
                    "feature graph has edges; the product does not collapse".into(),
                ));
            }
            Ok(ModelParams::Gvar {
                graph: op.node_graph().clone(),
                n_features: op.n_features(),
                coeffs: GvarCoeffs::Shared(coeffs.clone()),
            })
        }
        ModelParams::Gpgvar { node_graph, feature_graph, coeffs } => {
            if coeffs[0].l_order() != 0 {
                return Err(Error::Unsupported(
                    "feature-shift order is nonzero; the model does not collapse".into(),
                ));
            }
            let shared: Result<Vec<FilterCoeffs>> = coeffs
                .iter()
                .map(|c| {
                    FilterCoeffs::new((0..=c.k_order()).map(|k| c.get(k, 0)).collect())
                })
                .collect();
            Ok(ModelParams::Gvar {
                graph: node_graph.clone(),
                n_features: feature_graph.n_nodes(),
                coeffs: GvarCoeffs::Shared(shared?),
            })
        }
        _ => Err(Error::Unsupported(
            "only product-graph models reduce to plain graph models".into(),
        )),
    }
}

/// Dense `NF x NF` lag matrices `H_p` of any family, built from the dense
/// reference routines. Small scales only.
pub fn dense_lag_matrices(m: &ModelParams) -> Vec<DMatrix<f64>> {
    use crate::dense;
    match m {
        ModelParams::Var { lag_matrices } => lag_matrices.clone(),
        ModelParams::Gvar { graph, n_features, coeffs } => {
            let s = dense::materialize_graph(graph);
            let k_max = coeffs.shift_order();
            let powers = dense::matrix_powers(&s, k_max);
            let f_count = *n_features;
            let w = graph.n_nodes() * f_count;
            (0..coeffs.lag_order())
                .map(|p| {
                    let mut h_p = DMatrix::zeros(w, w);
                    for f in 0..f_count {
                        let mut sel = DMatrix::zeros(f_count, f_count);
                        sel[(f, f)] = 1.0;
                        for (k, &hk) in coeffs.channel(f)[p].coeffs().iter().enumerate() {
                            if hk != 0.0 {
                                h_p += dense::kron(&powers[k], &sel) * hk;
                            }
                        }
                    }
                    h_p
                })
                .collect()
        }
        ModelParams::Pgvar { op, coeffs } => {
            let sd = dense::materialize_product_op(op);
            let k_max = coeffs.iter().map(|c| c.order()).max().unwrap_or(0);
            let powers = dense::matrix_powers(&sd, k_max);
            coeffs
                .iter()
                .map(|c| {
                    let mut h_p = DMatrix::zeros(sd.nrows(), sd.ncols());
                    for (k, &hk) in c.coeffs().iter().enumerate() {
                        if hk != 0.0 {
                            h_p += &powers[k] * hk;
                        }
                    }
                    h_p
                })
                .collect()
        }
        ModelParams::Gpgvar { node_graph, feature_graph, coeffs } => coeffs
            .iter()
            .map(|c| dense::materialize_product_filter(node_graph, feature_graph, c))
            .collect(),
    }
}
