//! Model serialization: one JSON document plus edge-list CSVs for the graphs
//! it references.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{GvarCoeffs, ModelFamily, ModelParams};
use crate::error::{Error, Result};
use crate::filtering::{FilterCoeffs, ProductFilterCoeffs};
use crate::graph::{make_product, Graph, ProductKind, ProductTerm};
use crate::signal::PreprocessTransform;

/// On-disk model description. Graph fields hold file names relative to the
/// document's directory. Field order is fixed by this declaration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub family: String,
    pub p: usize,
    pub k: Option<usize>,
    pub l: Option<usize>,
    pub n_nodes: usize,
    pub n_features: usize,
    pub gvar_mode: Option<String>,
    pub product_kind: Option<String>,
    pub product_terms: Option<Vec<(u8, u8, f64)>>,
    /// Nested coefficient arrays; shape depends on `family`:
    /// var `[p][row][col]`, gvar `[channel][p][k]`, pgvar `[p][k]`,
    /// gpgvar `[p][k][l]`.
    pub coeffs: Value,
    pub node_graph: Option<String>,
    pub feature_graph: Option<String>,
    pub preprocess: Option<PreprocessTransform>,
}

fn coeffs_to_value(m: &ModelParams) -> Value {
    match m {
        ModelParams::Var { lag_matrices } => {
            let nested: Vec<Vec<Vec<f64>>> = lag_matrices
                .iter()
                .map(|a| {
                    (0..a.nrows())
                        .map(|r| (0..a.ncols()).map(|c| a[(r, c)]).collect())
                        .collect()
                })
                .collect();
            serde_json::to_value(nested).expect("numeric arrays serialize")
        }
        ModelParams::Gvar { coeffs, .. } => {
            let per_channel: Vec<Vec<Vec<f64>>> = match coeffs {
                GvarCoeffs::Shared(c) => {
                    vec![c.iter().map(|f| f.coeffs().to_vec()).collect()]
                }
                GvarCoeffs::PerChannel(chans) => chans
                    .iter()
                    .map(|c| c.iter().map(|f| f.coeffs().to_vec()).collect())
                    .collect(),
            };
            serde_json::to_value(per_channel).expect("numeric arrays serialize")
        }
        ModelParams::Pgvar { coeffs, .. } => {
            let nested: Vec<Vec<f64>> = coeffs.iter().map(|c| c.coeffs().to_vec()).collect();
            serde_json::to_value(nested).expect("numeric arrays serialize")
        }
        ModelParams::Gpgvar { coeffs, .. } => {
            let nested: Vec<Vec<Vec<f64>>> = coeffs.iter().map(|c| c.to_nested()).collect();
            serde_json::to_value(nested).expect("numeric arrays serialize")
        }
    }
}

fn graph_dims(m: &ModelParams) -> (usize, usize) {
    match m {
        ModelParams::Var { lag_matrices } => (lag_matrices[0].nrows(), 1),
        ModelParams::Gvar { graph, n_features, .. } => (graph.n_nodes(), *n_features),
        ModelParams::Pgvar { op, .. } => (op.n_nodes(), op.n_features()),
        ModelParams::Gpgvar { node_graph, feature_graph, .. } => {
            (node_graph.n_nodes(), feature_graph.n_nodes())
        }
    }
}

/// Write `model.json` plus sibling `<stem>.node_graph.csv` /
/// `<stem>.feature_graph.csv` files as needed.
pub fn save_model(
    m: &ModelParams,
    preprocess: Option<&PreprocessTransform>,
    path: &Path,
) -> Result<()> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidParameter("model path needs a file name".into()))?;
    let dir = path.parent().map(PathBuf::from).unwrap_or_default();

    let node_graph_file = format!("{stem}.node_graph.csv");
    let feature_graph_file = format!("{stem}.feature_graph.csv");
    let (node_graph, feature_graph) = match m {
        ModelParams::Var { .. } => (None, None),
        ModelParams::Gvar { graph, .. } => {
            graph.save_edges_csv(&dir.join(&node_graph_file))?;
            (Some(node_graph_file), None)
        }
        ModelParams::Pgvar { op, .. } => {
            op.node_graph().save_edges_csv(&dir.join(&node_graph_file))?;
            op.feature_graph().save_edges_csv(&dir.join(&feature_graph_file))?;
            (Some(node_graph_file), Some(feature_graph_file))
        }
        ModelParams::Gpgvar { node_graph, feature_graph, .. } => {
            node_graph.save_edges_csv(&dir.join(&node_graph_file))?;
            feature_graph.save_edges_csv(&dir.join(&feature_graph_file))?;
            (Some(node_graph_file), Some(feature_graph_file))
        }
    };

    let (k, l) = m.shift_orders();
    let (n_nodes, n_features) = graph_dims(m);
    let doc = ModelDocument {
        family: m.family().name().to_string(),
        p: m.lag_order(),
        k,
        l,
        n_nodes,
        n_features,
        gvar_mode: match m {
            ModelParams::Gvar { coeffs: GvarCoeffs::Shared(_), .. } => Some("shared".into()),
            ModelParams::Gvar { coeffs: GvarCoeffs::PerChannel(_), .. } => {
                Some("per_channel".into())
            }
            _ => None,
        },
        product_kind: match m {
            ModelParams::Pgvar { op, .. } => Some(op.kind().name().to_string()),
            _ => None,
        },
        product_terms: match m {
            ModelParams::Pgvar { op, .. } => Some(
                op.terms()
                    .iter()
                    .map(|t| (t.node_power, t.feat_power, t.coeff))
                    .collect(),
            ),
            _ => None,
        },
        coeffs: coeffs_to_value(m),
        node_graph,
        feature_graph,
        preprocess: preprocess.cloned(),
    };
    let json = serde_json::to_string_pretty(&doc)?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

fn parse_scalar_rows(v: &Value) -> Result<Vec<FilterCoeffs>> {
    let rows: Vec<Vec<f64>> = serde_json::from_value(v.clone())?;
    rows.into_iter().map(FilterCoeffs::new).collect()
}

/// Read a model document and rebuild the parameters, loading referenced
/// graph files relative to the document location.
pub fn load_model(path: &Path) -> Result<(ModelParams, Option<PreprocessTransform>)> {
    let text = std::fs::read_to_string(path)?;
    let doc: ModelDocument = serde_json::from_str(&text)?;
    let dir = path.parent().map(PathBuf::from).unwrap_or_default();
    let family = ModelFamily::parse(&doc.family)?;

    let load_graph = |name: &Option<String>, n: usize, what: &str| -> Result<Graph> {
        let file = name
            .as_ref()
            .ok_or_else(|| Error::InvalidInput(format!("model document lacks a {what} reference")))?;
        Graph::load_edges_csv(&dir.join(file), Some(n))
    };

    let model = match family {
        ModelFamily::Var => {
            let nested: Vec<Vec<Vec<f64>>> = serde_json::from_value(doc.coeffs.clone())?;
            let w = doc.n_nodes * doc.n_features;
            let lag_matrices: Result<Vec<_>> = nested
                .into_iter()
                .map(|rows| {
                    if rows.len() != w || rows.iter().any(|r| r.len() != w) {
                        return Err(Error::InvalidShape("lag matrix shape mismatch".into()));
                    }
                    Ok(nalgebra::DMatrix::from_fn(w, w, |r, c| rows[r][c]))
                })
                .collect();
            ModelParams::Var { lag_matrices: lag_matrices? }
        }
        ModelFamily::Gvar => {
            let graph = load_graph(&doc.node_graph, doc.n_nodes, "node graph")?;
            let chans: Vec<Value> = serde_json::from_value(doc.coeffs.clone())?;
            let parsed: Result<Vec<Vec<FilterCoeffs>>> =
                chans.iter().map(parse_scalar_rows).collect();
            let parsed = parsed?;
            let coeffs = match doc.gvar_mode.as_deref() {
                Some("shared") => GvarCoeffs::Shared(parsed.into_iter().next().ok_or_else(
                    || Error::InvalidInput("shared gvar document has no coefficients".into()),
                )?),
                _ => GvarCoeffs::PerChannel(parsed),
            };
            ModelParams::Gvar {
                graph,
                n_features: doc.n_features,
                coeffs,
            }
        }
        ModelFamily::Pgvar => {
            let node_graph = load_graph(&doc.node_graph, doc.n_nodes, "node graph")?;
            let feature_graph = load_graph(&doc.feature_graph, doc.n_features, "feature graph")?;
            let kind = match doc.product_kind.as_deref() {
                Some("cartesian") => ProductKind::Cartesian,
                Some("kronecker") => ProductKind::Kronecker,
                Some("strong") => ProductKind::Strong,
                Some("custom") => {
                    let terms = doc
                        .product_terms
                        .as_ref()
                        .ok_or_else(|| Error::InvalidInput("custom product lacks terms".into()))?
                        .iter()
                        .map(|&(i, j, s)| ProductTerm::new(i, j, s))
                        .collect();
                    ProductKind::Custom(terms)
                }
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown product kind {other:?}"
                    )))
                }
            };
            let op = make_product(&node_graph, &feature_graph, kind)?;
            ModelParams::Pgvar {
                op,
                coeffs: parse_scalar_rows(&doc.coeffs)?,
            }
        }
        ModelFamily::Gpgvar => {
            let node_graph = load_graph(&doc.node_graph, doc.n_nodes, "node graph")?;
            let feature_graph = load_graph(&doc.feature_graph, doc.n_features, "feature graph")?;
            let nested: Vec<Vec<Vec<f64>>> = serde_json::from_value(doc.coeffs.clone())?;
            let coeffs: Result<Vec<ProductFilterCoeffs>> = nested
                .into_iter()
                .map(ProductFilterCoeffs::from_nested)
                .collect();
            ModelParams::Gpgvar {
                node_graph,
                feature_graph,
                coeffs: coeffs?,
            }
        }
    };
    Ok((model, doc.preprocess))
}
