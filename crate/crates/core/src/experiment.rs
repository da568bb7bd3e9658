//! Experiment orchestration: load or generate data, build graphs, sweep
//! in-sample fractions and model families, and emit plot-ready reports.
//!
//! Runs are reproducible bit for bit from the same config: all randomness is
//! seeded through the config, reports avoid timestamps and unordered maps,
//! and every output file is written atomically.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{grid_search, FitConfig, FitReport, ModelStructure};
use crate::graph::{
    build_knn_graph, load_points_csv, make_product, normalize_shift, Graph, KnnWeighting,
    ProductKind,
};
use crate::metrics::{evaluate, EvalReport};
use crate::models::{rollout, PredictionMode};
use crate::signal::{load_sequence, preprocess, SignalSequence};
use crate::synth::{gen_moving_mesh, FeatureTopology, MeshOptions};

const NORM_TOL: f64 = 1e-10;
const NORM_ITERS: usize = 5000;

/// Where the experiment's data comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Sequence CSV plus either a point-cloud CSV (kNN graph is built from
    /// it) or an edge-list CSV with a ready-made graph.
    Files {
        sequence: String,
        n_features: usize,
        #[serde(default)]
        points: Option<String>,
        #[serde(default)]
        edges: Option<String>,
    },
    /// Synthetic moving mesh generated from the experiment seed.
    SyntheticMesh {
        n_nodes: usize,
        n_steps: usize,
        #[serde(default)]
        mesh: Option<MeshOptions>,
    },
}

fn default_knn() -> usize {
    10
}

fn default_train_fraction() -> f64 {
    0.7
}

fn default_in_fractions() -> Vec<f64> {
    vec![0.5, 0.6, 0.7, 0.8, 0.9]
}

fn default_true() -> bool {
    true
}

/// Full experiment description; see the repository README for the schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataSource,
    /// Families to compare, e.g. `["gvar", "pgvar"]`.
    pub families: Vec<String>,
    #[serde(default = "default_knn")]
    pub knn: usize,
    #[serde(default)]
    pub knn_binary: bool,
    #[serde(default = "default_true")]
    pub normalize: bool,
    #[serde(default)]
    pub product: Option<String>,
    #[serde(default)]
    pub feature_topology: Option<String>,
    pub p_grid: Vec<usize>,
    pub k_grid: Vec<usize>,
    #[serde(default)]
    pub l_grid: Vec<usize>,
    #[serde(default)]
    pub ridge_lambda: Option<f64>,
    #[serde(default = "default_in_fractions")]
    pub in_fractions: Vec<f64>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Evaluate rNMSE in original units instead of preprocessed space.
    #[serde(default)]
    pub rnmse_original_units: bool,
}

/// One (family, in-fraction) experiment cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellReport {
    pub family: String,
    pub in_fraction: f64,
    pub fit: FitReport,
    pub eval: EvalReport,
}

/// Everything an experiment run produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub n_nodes: usize,
    pub n_features: usize,
    pub n_steps: usize,
    pub cells: Vec<CellReport>,
}

pub fn parse_product_kind(s: &str) -> Result<ProductKind> {
    match s.to_ascii_lowercase().as_str() {
        "cartesian" => Ok(ProductKind::Cartesian),
        "kronecker" => Ok(ProductKind::Kronecker),
        "strong" => Ok(ProductKind::Strong),
        other => Err(Error::InvalidParameter(format!("unknown product kind `{other}`"))),
    }
}

/// Graphs resolved for an experiment, shared by all cells.
pub struct ResolvedGraphs {
    pub node_graph: Graph,
    pub feature_graph: Graph,
}

type ResolvedData = (SignalSequence, Option<Vec<Vec<f64>>>, Option<Graph>);

fn resolve_data(config: &ExperimentConfig) -> Result<ResolvedData> {
    match &config.data {
        DataSource::Files {
            sequence,
            n_features,
            points,
            edges,
        } => {
            let seq = load_sequence(Path::new(sequence), *n_features)
                .map_err(|e| e.in_stage("load sequence"))?;
            let pts = match points {
                Some(p) => Some(load_points_csv(Path::new(p)).map_err(|e| e.in_stage("load points"))?),
                None => None,
            };
            let graph = match edges {
                Some(p) => Some(
                    Graph::load_edges_csv(Path::new(p), Some(seq.n_nodes()))
                        .map_err(|e| e.in_stage("load graph"))?,
                ),
                None => None,
            };
            if pts.is_none() && graph.is_none() {
                return Err(Error::InvalidParameter(
                    "file data source needs either `points` or `edges`".into(),
                ));
            }
            Ok((seq, pts, graph))
        }
        DataSource::SyntheticMesh { n_nodes, n_steps, mesh } => {
            let opts = mesh.clone().unwrap_or_default();
            let (points, seq) = gen_moving_mesh(*n_nodes, *n_steps, config.seed, &opts)
                .map_err(|e| e.in_stage("generate mesh"))?;
            Ok((seq, Some(points), None))
        }
    }
}

/// Build (and optionally normalize) the node and feature graphs for a run.
pub fn resolve_graphs(
    config: &ExperimentConfig,
    points: Option<&[Vec<f64>]>,
    ready: Option<Graph>,
    n_features: usize,
) -> Result<ResolvedGraphs> {
    let node_graph = match (ready, points) {
        (Some(g), _) => g,
        (None, Some(pts)) => {
            let weighting = if config.knn_binary {
                KnnWeighting::Binary
            } else {
                KnnWeighting::Gaussian
            };
            build_knn_graph(pts, config.knn, weighting).map_err(|e| e.in_stage("build knn graph"))?
        }
        (None, None) => {
            return Err(Error::InvalidParameter(
                "no graph source available".into(),
            ))
        }
    };
    let topology = match &config.feature_topology {
        Some(s) => FeatureTopology::parse(s)?,
        None => FeatureTopology::Complete,
    };
    let feature_graph = topology.build(n_features)?;
    let (node_graph, feature_graph) = if config.normalize {
        let ng = normalize_shift(&node_graph, NORM_TOL, NORM_ITERS)
            .map_err(|e| e.in_stage("normalize node graph"))?;
        let fg = if feature_graph.n_edges() > 0 {
            normalize_shift(&feature_graph, NORM_TOL, NORM_ITERS)
                .map_err(|e| e.in_stage("normalize feature graph"))?
        } else {
            feature_graph
        };
        (ng, fg)
    } else {
        (node_graph, feature_graph)
    };
    Ok(ResolvedGraphs {
        node_graph,
        feature_graph,
    })
}

/// Build the fit structure for one family name.
pub fn structure_for_family(
    family: &str,
    graphs: &ResolvedGraphs,
    product: Option<&str>,
) -> Result<ModelStructure> {
    let family = crate::models::ModelFamily::parse(family)?;
    let kind = match product {
        Some(s) => parse_product_kind(s)?,
        None => ProductKind::Cartesian,
    };
    Ok(match family {
        crate::models::ModelFamily::Var => ModelStructure::Var,
        crate::models::ModelFamily::Gvar => ModelStructure::Gvar {
            graph: graphs.node_graph.clone(),
        },
        crate::models::ModelFamily::Pgvar => ModelStructure::Pgvar {
            op: make_product(&graphs.node_graph, &graphs.feature_graph, kind)?,
        },
        crate::models::ModelFamily::Gpgvar => ModelStructure::Gpgvar {
            node_graph: graphs.node_graph.clone(),
            feature_graph: graphs.feature_graph.clone(),
        },
    })
}

/// Run the full protocol in memory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.families.is_empty() {
        return Err(Error::InvalidParameter("no families configured".into()));
    }
    if config.in_fractions.is_empty() {
        return Err(Error::InvalidParameter("no in-sample fractions configured".into()));
    }
    let (raw_seq, points, ready_graph) = resolve_data(config)?;
    let graphs = resolve_graphs(config, points.as_deref(), ready_graph, raw_seq.n_features())?;
    let (seq, transform) = preprocess(&raw_seq).map_err(|e| e.in_stage("preprocess"))?;

    struct Cell {
        family: String,
        in_fraction: f64,
    }
    let mut cells = Vec::new();
    for family in &config.families {
        for &in_fraction in &config.in_fractions {
            cells.push(Cell {
                family: family.clone(),
                in_fraction,
            });
        }
    }

    let reports: Vec<Result<CellReport>> = cells
        .par_iter()
        .map(|cell| {
            let structure = structure_for_family(&cell.family, &graphs, config.product.as_deref())?;
            let fit_config = FitConfig {
                p_grid: config.p_grid.clone(),
                k_grid: config.k_grid.clone(),
                l_grid: if config.l_grid.is_empty() {
                    vec![0]
                } else {
                    config.l_grid.clone()
                },
                ridge_lambda: config.ridge_lambda,
                in_fraction: cell.in_fraction,
                train_fraction: config.train_fraction,
            };
            let outcome = grid_search(&seq, &structure, &fit_config).map_err(|e| {
                e.in_stage(format!(
                    "grid search ({}, in-fraction {})",
                    cell.family, cell.in_fraction
                ))
            })?;
            let split = outcome.report.split.clone();
            let preds = rollout(
                &outcome.model,
                &seq,
                split.test.start,
                split.test.end,
                PredictionMode::TeacherForced,
            )?;
            let truth: Vec<Vec<f64>> = split.test.clone().map(|t| seq.step(t).to_vec()).collect();
            let (preds, truth) = if config.rnmse_original_units {
                (
                    preds.iter().map(|r| transform.invert_row(r)).collect(),
                    truth.iter().map(|r| transform.invert_row(r)).collect(),
                )
            } else {
                (preds, truth)
            };
            let eval = evaluate(&preds, &truth, seq.n_features())
                .map_err(|e| e.in_stage(format!("evaluate ({})", cell.family)))?;
            Ok(CellReport {
                family: cell.family.clone(),
                in_fraction: cell.in_fraction,
                fit: outcome.report,
                eval,
            })
        })
        .collect();

    let mut out = Vec::with_capacity(reports.len());
    for r in reports {
        out.push(r?);
    }
    Ok(ExperimentReport {
        seed: config.seed,
        n_nodes: seq.n_nodes(),
        n_features: seq.n_features(),
        n_steps: seq.n_steps(),
        cells: out,
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Run the protocol and write per-cell JSON reports plus a comparison CSV
/// (`in_fraction,family,test_rnmse`) into `out_dir`.
pub fn run_experiment_to_dir(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    let report = run_experiment(config)?;
    std::fs::create_dir_all(out_dir)?;

    let mut comparison = String::from("in_fraction,family,test_rnmse\n");
    for cell in &report.cells {
        comparison.push_str(&format!(
            "{},{},{:.17e}\n",
            cell.in_fraction, cell.family, cell.fit.test_rnmse
        ));
    }
    write_atomic(&out_dir.join("comparison.csv"), comparison.as_bytes())?;

    for cell in &report.cells {
        let name = format!(
            "report_{}_in{:02}.json",
            cell.family,
            (cell.in_fraction * 100.0).round() as u32
        );
        let json = serde_json::to_string_pretty(cell)?;
        write_atomic(&out_dir.join(name), (json + "\n").as_bytes())?;
    }

    let summary = serde_json::to_string_pretty(&report)?;
    write_atomic(&out_dir.join("experiment.json"), (summary + "\n").as_bytes())?;
    Ok(report)
}

/// Convenience for callers composing paths.
pub fn comparison_csv_path(out_dir: &Path) -> PathBuf {
    out_dir.join("comparison.csv")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            seed,
            data: DataSource::SyntheticMesh {
                n_nodes: 20,
                n_steps: 60,
                mesh: None,
            },
            families: vec!["pgvar".into()],
            knn: 3,
            knn_binary: false,
            normalize: true,
            product: Some("cartesian".into()),
            feature_topology: None,
            p_grid: vec![1],
            k_grid: vec![1],
            l_grid: vec![],
            ridge_lambda: None,
            in_fractions: vec![0.7],
            train_fraction: 0.7,
            rnmse_original_units: false,
        }
    }

    #[test]
    fn degenerate_single_cell_pipeline() {
        let report = run_experiment(&small_config(5)).unwrap();
        assert_eq!(report.cells.len(), 1);
        let cell = &report.cells[0];
        assert_eq!(cell.family, "pgvar");
        assert!(cell.fit.test_rnmse.is_finite());
        assert_eq!(cell.eval.n_steps, cell.fit.split.test.len());
    }

    #[test]
    fn comparison_csv_rows_per_fraction() {
        let mut config = small_config(6);
        config.families = vec!["gvar".into(), "pgvar".into()];
        config.in_fractions = vec![0.6, 0.8];
        let dir = tempfile::tempdir().unwrap();
        run_experiment_to_dir(&config, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
        let lines: Vec<&str> = csv.trim().lines().collect();
        assert_eq!(lines[0], "in_fraction,family,test_rnmse");
        assert_eq!(lines.len(), 1 + 4);
    }

    #[test]
    fn runs_are_byte_identical() {
        let config = small_config(7);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        run_experiment_to_dir(&config, d1.path()).unwrap();
        run_experiment_to_dir(&config, d2.path()).unwrap();
        for entry in std::fs::read_dir(d1.path()).unwrap() {
            let entry = entry.unwrap();
            let a = std::fs::read(entry.path()).unwrap();
            let b = std::fs::read(d2.path().join(entry.file_name())).unwrap();
            assert_eq!(a, b, "file {:?} differs", entry.file_name());
        }
    }
}
