//! Least-squares fitting, closed-form MSE via autocorrelations, and
//! grid-search model selection.
//!
//! The primary fitting path is empirical least squares on the regression form:
//! regressors are the shifted lag signals computed once per `(p, k, l)` through
//! the filtering module, and the normal equations are solved with a Cholesky
//! factorization (optionally ridge-stabilized). The autocorrelation trace
//! expression is kept as a small-scale cross-check of the same objective.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{apply_product_shift, apply_shift, product_term_stack, FilterCoeffs, ProductFilterCoeffs};
use crate::graph::{Graph, ProductShiftOperator};
use crate::metrics::rnmse;
use crate::models::{
    dense_lag_matrices, rollout, GvarCoeffs, ModelFamily, ModelParams, PredictionMode,
};
use crate::signal::{split_series, SignalSequence, Split};

/// Which graph structure a family is fitted against.
#[derive(Debug, Clone)]
pub enum ModelStructure {
    Var,
    Gvar { graph: Graph },
    Pgvar { op: ProductShiftOperator },
    Gpgvar { node_graph: Graph, feature_graph: Graph },
}

impl ModelStructure {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelStructure::Var => ModelFamily::Var,
            ModelStructure::Gvar { .. } => ModelFamily::Gvar,
            ModelStructure::Pgvar { .. } => ModelFamily::Pgvar,
            ModelStructure::Gpgvar { .. } => ModelFamily::Gpgvar,
        }
    }
}

/// Grid and split configuration for [`grid_search`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub p_grid: Vec<usize>,
    /// Node-shift orders; ignored for the dense VAR family.
    pub k_grid: Vec<usize>,
    /// Feature-shift orders; used by the bivariate family only.
    pub l_grid: Vec<usize>,
    /// `None` picks the per-fit default `1e-8 * tr(Gram) / Q`.
    pub ridge_lambda: Option<f64>,
    pub in_fraction: f64,
    pub train_fraction: f64,
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p_grid.is_empty() {
            return Err(Error::InvalidParameter("empty P grid".into()));
        }
        if self.p_grid.contains(&0) {
            return Err(Error::InvalidParameter("lag order P must be at least 1".into()));
        }
        if self.k_grid.is_empty() {
            return Err(Error::InvalidParameter("empty K grid".into()));
        }
        if self.l_grid.is_empty() {
            return Err(Error::InvalidParameter("empty L grid".into()));
        }
        if let Some(l) = self.ridge_lambda {
            if l < 0.0 || !l.is_finite() {
                return Err(Error::InvalidParameter("ridge_lambda must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// Regressor cache: shifted variants of every lag step in a range,
/// `stacks[s - lo][idx]` with `idx` flattening `k` (and `l`).
struct ShiftStacks {
    stacks: Vec<Vec<Vec<f64>>>,
    lo: usize,
}

impl ShiftStacks {
    fn get(&self, s: usize, idx: usize) -> &[f64] {
        &self.stacks[s - self.lo][idx]
    }
}

fn build_stacks<Fst>(seq: &SignalSequence, range: Range<usize>, per_step: Fst) -> Result<ShiftStacks>
where
    Fst: Fn(&[f64]) -> Result<Vec<Vec<f64>>>,
{
    let lo = range.start;
    let mut stacks = Vec::with_capacity(range.len());
    for s in range {
        stacks.push(per_step(seq.step(s))?);
    }
    Ok(ShiftStacks { stacks, lo })
}

/// Assemble the least-squares design for a graph-filter family over the time
/// window `window` (every `t` in it must satisfy `t >= p_order`).
///
/// Rows are the entries of `x_t` stacked over `t`; column `(p, k[, l])` holds
/// the matching shifted lag signal. The column count equals the model's
/// parameter count: `P(K+1)` for the univariate filters, `P(K+1)(L+1)` for
/// the bivariate one.
pub fn build_regression(
    seq: &SignalSequence,
    structure: &ModelStructure,
    p_order: usize,
    k_order: usize,
    l_order: usize,
    window: Range<usize>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if p_order == 0 {
        return Err(Error::InvalidParameter("lag order P must be at least 1".into()));
    }
    if window.start < p_order || window.end > seq.n_steps() || window.is_empty() {
        return Err(Error::InsufficientData {
            segment: "training",
            have: window.len(),
            need: 1,
        });
    }
    let w = seq.width();
    let n_t = window.len();
    let m_rows = n_t * w;
    // Lags reach from window.start - P up to window.end - 2 inclusive.
    let lag_range = (window.start - p_order)..(window.end - 1);

    let (stacks, per_lag): (ShiftStacks, usize) = match structure {
        ModelStructure::Var => {
            return Err(Error::Unsupported(
                "dense VAR is fitted by multivariate least squares, not the regression column form"
                    .into(),
            ))
        }
        ModelStructure::Gvar { graph } => {
            if seq.n_features() != 1 || seq.width() != graph.n_nodes() {
                return Err(Error::DimensionMismatch(
                    "plain graph regression expects a single-channel sequence on the node graph"
                        .into(),
                ));
            }
            let g = graph.clone();
            let st = build_stacks(seq, lag_range, move |x| {
                let mut out = Vec::with_capacity(k_order + 1);
                out.push(x.to_vec());
                for k in 1..=k_order {
                    let next = apply_shift(&g, &out[k - 1])?;
                    out.push(next);
                }
                Ok(out)
            })?;
            (st, k_order + 1)
        }
        ModelStructure::Pgvar { op } => {
            if seq.n_nodes() != op.n_nodes() || seq.n_features() != op.n_features() {
                return Err(Error::DimensionMismatch(
                    "sequence does not match the product operator dimensions".into(),
                ));
            }
            let op = op.clone();
            let st = build_stacks(seq, lag_range, move |x| {
                let mut out = Vec::with_capacity(k_order + 1);
                out.push(x.to_vec());
                for k in 1..=k_order {
                    let next = apply_product_shift(&op, &out[k - 1])?;
                    out.push(next);
                }
                Ok(out)
            })?;
            (st, k_order + 1)
        }
        ModelStructure::Gpgvar { node_graph, feature_graph } => {
            if seq.n_nodes() != node_graph.n_nodes() || seq.n_features() != feature_graph.n_nodes()
            {
                return Err(Error::DimensionMismatch(
                    "sequence does not match the factor graph dimensions".into(),
                ));
            }
            let ng = node_graph.clone();
            let fg = feature_graph.clone();
            let st = build_stacks(seq, lag_range, move |x| {
                product_term_stack(&ng, &fg, k_order, l_order, x)
            })?;
            (st, (k_order + 1) * (l_order + 1))
        }
    };

    let q = p_order * per_lag;
    let mut design = DMatrix::zeros(m_rows, q);
    let mut target = DVector::zeros(m_rows);
    for (ti, t) in window.clone().enumerate() {
        let row0 = ti * w;
        target.rows_mut(row0, w).copy_from_slice(seq.step(t));
        for p in 1..=p_order {
            for idx in 0..per_lag {
                let col = (p - 1) * per_lag + idx;
                let src = stacks.get(t - p, idx);
                for (e, &v) in src.iter().enumerate() {
                    design[(row0 + e, col)] = v;
                }
            }
        }
    }
    Ok((design, target))
}

/// Result of one normal-equations solve, with the negated solution
/// (the autoregression coefficients `h = -a`).
#[derive(Debug, Clone)]
pub struct LsqSolution {
    /// Autoregression coefficients in the stored sign convention.
    pub h: Vec<f64>,
    pub lambda_used: f64,
    /// Gram-matrix condition estimate (max/min eigenvalue).
    pub gram_condition: f64,
    pub residual_sum_squares: f64,
    pub n_rows: usize,
}

impl LsqSolution {
    /// Per-entry residual variance `SSE / M`.
    pub fn residual_variance(&self) -> f64 {
        self.residual_sum_squares / self.n_rows as f64
    }
}

fn gram_condition_estimate(gram: &DMatrix<f64>) -> f64 {
    let eig = gram.clone().symmetric_eigen();
    let max_e = eig.eigenvalues.max();
    let min_e = eig.eigenvalues.min();
    if min_e > 0.0 {
        max_e / min_e
    } else {
        f64::INFINITY
    }
}

/// Solve `min_a ||target - design a||^2 + lambda ||a||^2` by Cholesky on the
/// normal equations and return `h = -a`.
///
/// `ridge_lambda = None` uses the default `1e-8 * tr(Gram) / Q`; an explicit
/// `Some(0.0)` solves the bare normal equations and fails with a
/// rank-deficiency error if the Gram matrix is not positive definite.
pub fn least_squares_fit(
    design: &DMatrix<f64>,
    target: &DVector<f64>,
    ridge_lambda: Option<f64>,
) -> Result<LsqSolution> {
    let m = design.nrows();
    let q = design.ncols();
    if m < q {
        return Err(Error::InsufficientData {
            segment: "training",
            have: m,
            need: q,
        });
    }
    let gram = design.transpose() * design;
    let rhs = design.transpose() * target;
    let lambda = match ridge_lambda {
        Some(l) => l,
        None => 1e-8 * gram.trace() / q as f64,
    };
    let mut reg = gram.clone();
    for i in 0..q {
        reg[(i, i)] += lambda;
    }
    let chol = nalgebra::Cholesky::new(reg).ok_or_else(|| {
        Error::RankDeficient(format!("Gram matrix of {q} columns is not positive definite"))
    })?;
    let a = chol.solve(&rhs);

    let residual = target - design * &a;
    let residual_sum_squares = residual.norm_squared();
    Ok(LsqSolution {
        h: a.iter().map(|v| -v).collect(),
        lambda_used: lambda,
        gram_condition: gram_condition_estimate(&gram),
        residual_sum_squares,
        n_rows: m,
    })
}

/// Empirical autocorrelation matrices `R_p` for `p = 0..=p_max`, all averaged
/// over the same fixed window `t = p_max..T-1` so every lag shares the sample
/// count. Negative lags are served as transposes.
#[derive(Debug, Clone)]
pub struct AutocorrelationSet {
    width: usize,
    p_max: usize,
    mats: Vec<DMatrix<f64>>,
}

impl AutocorrelationSet {
    pub fn p_max(&self) -> usize {
        self.p_max
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `R_q`, with `R_{-q} = R_qᵀ`.
    pub fn lag(&self, q: i64) -> Result<DMatrix<f64>> {
        let a = q.unsigned_abs() as usize;
        if a > self.p_max {
            return Err(Error::InvalidInput(format!(
                "lag {q} beyond computed maximum {}",
                self.p_max
            )));
        }
        if q >= 0 {
            Ok(self.mats[a].clone())
        } else {
            Ok(self.mats[a].transpose())
        }
    }
}

/// Biased empirical autocorrelations with the fixed window `t = P..T-1`.
pub fn empirical_autocorrelation(seq: &SignalSequence, p_max: usize) -> Result<AutocorrelationSet> {
    let t_len = seq.n_steps();
    if t_len <= p_max {
        return Err(Error::InsufficientData {
            segment: "training",
            have: t_len,
            need: p_max + 1,
        });
    }
    let w = seq.width();
    let count = (t_len - p_max) as f64;
    let mut mats = Vec::with_capacity(p_max + 1);
    for p in 0..=p_max {
        let mut r = DMatrix::zeros(w, w);
        for t in p_max..t_len {
            let xt = DVector::from_column_slice(seq.step(t));
            let xl = DVector::from_column_slice(seq.step(t - p));
            r += xt * xl.transpose();
        }
        mats.push(r / count);
    }
    Ok(AutocorrelationSet {
        width: w,
        p_max,
        mats,
    })
}

/// Prediction MSE of a model evaluated through the autocorrelation trace
/// expression, with the lag matrices materialized densely. Cross-check only:
/// the width is capped at 64.
pub fn mse_closed_form(m: &ModelParams, r: &AutocorrelationSet) -> Result<f64> {
    let w = m.width();
    if w > 64 {
        return Err(Error::Unsupported(format!(
            "dense closed-form MSE is limited to width 64, got {w}"
        )));
    }
    if r.width() != w {
        return Err(Error::DimensionMismatch(format!(
            "autocorrelation width {} vs model width {w}",
            r.width()
        )));
    }
    let p_order = m.lag_order();
    if r.p_max() < p_order {
        return Err(Error::InvalidInput(format!(
            "need lags up to {p_order}, autocorrelations stop at {}",
            r.p_max()
        )));
    }
    let h = dense_lag_matrices(m);
    // E||x_t + sum_p H_p x_{t-p}||^2 expanded in traces. The middle terms use
    // R_{-p} = R_pᵀ so the expression stays exact for asymmetric lags.
    let mut mse = r.lag(0)?.trace();
    for (p_idx, hp) in h.iter().enumerate() {
        let p = (p_idx + 1) as i64;
        mse += (hp * r.lag(-p)?).trace();
        mse += (r.lag(p)? * hp.transpose()).trace();
    }
    for (p1_idx, hp1) in h.iter().enumerate() {
        for (p2_idx, hp2) in h.iter().enumerate() {
            let q = (p2_idx as i64) - (p1_idx as i64);
            mse += (hp1 * r.lag(q)? * hp2.transpose()).trace();
        }
    }
    Ok(mse)
}

/// One evaluated grid point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPointRecord {
    pub p: usize,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub param_count: usize,
    pub val_rnmse: f64,
}

/// Outcome of a grid search: selected orders, refit diagnostics and the
/// rNMSE of each protocol stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub family: String,
    pub selected_p: usize,
    pub selected_k: Option<usize>,
    pub selected_l: Option<usize>,
    pub param_count: usize,
    /// rNMSE of the training-segment fit on its own window.
    pub train_rnmse: f64,
    /// Selection metric: one-step teacher-forced rNMSE on validation.
    pub val_rnmse: f64,
    /// One-step teacher-forced rNMSE of the in-sample refit on the test segment.
    pub test_rnmse: f64,
    /// Per-entry residual variance of the refit.
    pub residual_variance: f64,
    /// Gram condition estimate of the refit normal equations.
    pub gram_condition: f64,
    pub lambda_used: f64,
    pub split: Split,
    /// Every evaluated grid point, sorted by `(p, k, l)`.
    pub grid: Vec<GridPointRecord>,
}

/// A fitted model together with its report.
#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub model: ModelParams,
    pub report: FitReport,
}

/// Fit one family at fixed orders over `window`.
pub fn fit_model(
    seq: &SignalSequence,
    structure: &ModelStructure,
    p_order: usize,
    k_order: usize,
    l_order: usize,
    ridge_lambda: Option<f64>,
    window: Range<usize>,
) -> Result<(ModelParams, LsqSolution)> {
    match structure {
        ModelStructure::Var => fit_var(seq, p_order, ridge_lambda, window),
        ModelStructure::Gvar { graph } => {
            let f_count = seq.n_features();
            let chan_structure = ModelStructure::Gvar { graph: graph.clone() };
            let mut channels = Vec::with_capacity(f_count);
            let mut worst_cond = 0.0f64;
            let mut sse = 0.0;
            let mut rows = 0usize;
            let mut lambda_used = 0.0f64;
            for f in 0..f_count {
                let chan = seq.channel(f)?;
                let (design, target) =
                    build_regression(&chan, &chan_structure, p_order, k_order, 0, window.clone())?;
                let sol = least_squares_fit(&design, &target, ridge_lambda)?;
                let per_lag = k_order + 1;
                let filters: Result<Vec<FilterCoeffs>> = (0..p_order)
                    .map(|p| FilterCoeffs::new(sol.h[p * per_lag..(p + 1) * per_lag].to_vec()))
                    .collect();
                channels.push(filters?);
                worst_cond = worst_cond.max(sol.gram_condition);
                sse += sol.residual_sum_squares;
                rows += sol.n_rows;
                lambda_used = lambda_used.max(sol.lambda_used);
            }
            let model = ModelParams::Gvar {
                graph: graph.clone(),
                n_features: f_count,
                coeffs: GvarCoeffs::PerChannel(channels),
            };
            Ok((
                model,
                LsqSolution {
                    h: Vec::new(),
                    lambda_used,
                    gram_condition: worst_cond,
                    residual_sum_squares: sse,
                    n_rows: rows,
                },
            ))
        }
        ModelStructure::Pgvar { op } => {
            let (design, target) = build_regression(seq, structure, p_order, k_order, 0, window)?;
            let sol = least_squares_fit(&design, &target, ridge_lambda)?;
            let per_lag = k_order + 1;
            let coeffs: Result<Vec<FilterCoeffs>> = (0..p_order)
                .map(|p| FilterCoeffs::new(sol.h[p * per_lag..(p + 1) * per_lag].to_vec()))
                .collect();
            let model = ModelParams::Pgvar {
                op: op.clone(),
                coeffs: coeffs?,
            };
            Ok((model, sol))
        }
        ModelStructure::Gpgvar { node_graph, feature_graph } => {
            let (design, target) =
                build_regression(seq, structure, p_order, k_order, l_order, window)?;
            let sol = least_squares_fit(&design, &target, ridge_lambda)?;
            let per_lag = (k_order + 1) * (l_order + 1);
            let coeffs: Result<Vec<ProductFilterCoeffs>> = (0..p_order)
                .map(|p| {
                    ProductFilterCoeffs::new(
                        k_order,
                        l_order,
                        sol.h[p * per_lag..(p + 1) * per_lag].to_vec(),
                    )
                })
                .collect();
            let model = ModelParams::Gpgvar {
                node_graph: node_graph.clone(),
                feature_graph: feature_graph.clone(),
                coeffs: coeffs?,
            };
            Ok((model, sol))
        }
    }
}

/// Dense VAR fit: multivariate least squares with a shared lag-stacked design.
fn fit_var(
    seq: &SignalSequence,
    p_order: usize,
    ridge_lambda: Option<f64>,
    window: Range<usize>,
) -> Result<(ModelParams, LsqSolution)> {
    if p_order == 0 {
        return Err(Error::InvalidParameter("lag order P must be at least 1".into()));
    }
    if window.start < p_order || window.end > seq.n_steps() || window.is_empty() {
        return Err(Error::InsufficientData {
            segment: "training",
            have: window.len(),
            need: 1,
        });
    }
    let w = seq.width();
    let q = p_order * w;
    let n_t = window.len();
    if n_t < q {
        return Err(Error::InsufficientData {
            segment: "training",
            have: n_t,
            need: q,
        });
    }
    let mut x = DMatrix::zeros(n_t, q);
    let mut y = DMatrix::zeros(n_t, w);
    for (ti, t) in window.enumerate() {
        for p in 1..=p_order {
            for e in 0..w {
                x[(ti, (p - 1) * w + e)] = seq.step(t - p)[e];
            }
        }
        for e in 0..w {
            y[(ti, e)] = seq.step(t)[e];
        }
    }
    let gram = x.transpose() * &x;
    let lambda = match ridge_lambda {
        Some(l) => l,
        None => 1e-8 * gram.trace() / q as f64,
    };
    let mut reg = gram.clone();
    for i in 0..q {
        reg[(i, i)] += lambda;
    }
    let chol = nalgebra::Cholesky::new(reg).ok_or_else(|| {
        Error::RankDeficient(format!("Gram matrix of {q} columns is not positive definite"))
    })?;
    let rhs = x.transpose() * &y;
    let b = chol.solve(&rhs);

    let residual = &y - &x * &b;
    let residual_sum_squares = residual.iter().map(|v| v * v).sum();

    let lag_matrices: Vec<DMatrix<f64>> = (0..p_order)
        .map(|p| -b.rows(p * w, w).transpose())
        .collect();
    Ok((
        ModelParams::Var { lag_matrices },
        LsqSolution {
            h: Vec::new(),
            lambda_used: lambda,
            gram_condition: gram_condition_estimate(&gram),
            residual_sum_squares,
            n_rows: n_t * w,
        },
    ))
}

/// One-step teacher-forced rNMSE over a step range.
pub fn teacher_forced_rnmse(
    m: &ModelParams,
    seq: &SignalSequence,
    range: Range<usize>,
) -> Result<f64> {
    let preds = rollout(m, seq, range.start, range.end, PredictionMode::TeacherForced)?;
    let truth: Vec<Vec<f64>> = range.map(|t| seq.step(t).to_vec()).collect();
    rnmse(&preds, &truth)
}

fn grid_tuples(structure: &ModelStructure, config: &FitConfig) -> Vec<(usize, usize, usize)> {
    let mut p_grid = config.p_grid.clone();
    p_grid.sort_unstable();
    p_grid.dedup();
    let mut k_grid = config.k_grid.clone();
    k_grid.sort_unstable();
    k_grid.dedup();
    let mut l_grid = config.l_grid.clone();
    l_grid.sort_unstable();
    l_grid.dedup();
    let (use_k, use_l) = match structure {
        ModelStructure::Var => (false, false),
        ModelStructure::Gvar { .. } | ModelStructure::Pgvar { .. } => (true, false),
        ModelStructure::Gpgvar { .. } => (true, true),
    };
    let ks = if use_k { k_grid } else { vec![0] };
    let ls = if use_l { l_grid } else { vec![0] };
    let mut tuples = Vec::new();
    for &p in &p_grid {
        for &k in &ks {
            for &l in &ls {
                tuples.push((p, k, l));
            }
        }
    }
    tuples
}

/// Grid-search model selection following the train/validation/test protocol.
///
/// Every `(P, K, L)` tuple is fitted on the training segment and scored by
/// one-step teacher-forced rNMSE on the validation segment; the best tuple
/// (ties broken by parameter count, then `P`, `K`, `L`) is refitted on the
/// full in-sample segment and scored on the test segment. Grid points are
/// evaluated in parallel; the outcome is deterministic regardless of
/// schedule.
pub fn grid_search(
    seq: &SignalSequence,
    structure: &ModelStructure,
    config: &FitConfig,
) -> Result<GridSearchOutcome> {
    config.validate()?;
    let p_max = *config.p_grid.iter().max().expect("validated non-empty");
    let split = split_series(
        seq.n_steps(),
        config.in_fraction,
        config.train_fraction,
        p_max + 1,
    )?;
    let tuples = grid_tuples(structure, config);

    struct Evaluated {
        p: usize,
        k: usize,
        l: usize,
        param_count: usize,
        val_rnmse: f64,
        train_rnmse: f64,
    }

    let results: Vec<Result<Evaluated>> = tuples
        .par_iter()
        .map(|&(p, k, l)| {
            let (model, _sol) = fit_model(
                seq,
                structure,
                p,
                k,
                l,
                config.ridge_lambda,
                p..split.train.end,
            )?;
            let train_rnmse = teacher_forced_rnmse(&model, seq, p..split.train.end)?;
            let val_rnmse = teacher_forced_rnmse(&model, seq, split.val.clone())?;
            Ok(Evaluated {
                p,
                k,
                l,
                param_count: model.param_count(),
                val_rnmse,
                train_rnmse,
            })
        })
        .collect();

    let mut evaluated = Vec::new();
    let mut first_err: Option<String> = None;
    for r in results {
        match r {
            Ok(e) if e.val_rnmse.is_finite() => evaluated.push(e),
            Ok(e) => {
                first_err.get_or_insert(format!(
                    "tuple (P={}, K={}, L={}) produced a non-finite validation rNMSE",
                    e.p, e.k, e.l
                ));
            }
            Err(err) => {
                first_err.get_or_insert(err.to_string());
            }
        }
    }
    if evaluated.is_empty() {
        return Err(Error::GridFailed(
            first_err.unwrap_or_else(|| "empty grid".into()),
        ));
    }

    let best = evaluated
        .iter()
        .min_by(|a, b| {
            (a.val_rnmse, a.param_count, a.p, a.k, a.l)
                .partial_cmp(&(b.val_rnmse, b.param_count, b.p, b.k, b.l))
                .expect("finite rnmse values")
        })
        .expect("non-empty");

    let (refit, sol) = fit_model(
        seq,
        structure,
        best.p,
        best.k,
        best.l,
        config.ridge_lambda,
        best.p..split.in_sample_end(),
    )?;
    let test_rnmse = teacher_forced_rnmse(&refit, seq, split.test.clone())?;

    let family = structure.family();
    let with_k = !matches!(structure, ModelStructure::Var);
    let with_l = matches!(structure, ModelStructure::Gpgvar { .. });
    let mut grid: Vec<GridPointRecord> = evaluated
        .iter()
        .map(|e| GridPointRecord {
            p: e.p,
            k: with_k.then_some(e.k),
            l: with_l.then_some(e.l),
            param_count: e.param_count,
            val_rnmse: e.val_rnmse,
        })
        .collect();
    grid.sort_by_key(|g| (g.p, g.k, g.l));

    let report = FitReport {
        family: family.name().to_string(),
        selected_p: best.p,
        selected_k: with_k.then_some(best.k),
        selected_l: with_l.then_some(best.l),
        param_count: refit.param_count(),
        train_rnmse: best.train_rnmse,
        val_rnmse: best.val_rnmse,
        test_rnmse,
        residual_variance: sol.residual_variance(),
        gram_condition: sol.gram_condition,
        lambda_used: sol.lambda_used,
        split,
        grid,
    };
    Ok(GridSearchOutcome { model: refit, report })
}
