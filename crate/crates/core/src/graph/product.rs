use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};

/// One term `s_ij * (S^i ⊗ S_F^j)` of a product shift operator.
///
/// `node_power` and `feat_power` are 0 or 1; `coeff` is a real scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductTerm {
    pub node_power: u8,
    pub feat_power: u8,
    pub coeff: f64,
}

impl ProductTerm {
    pub fn new(node_power: u8, feat_power: u8, coeff: f64) -> Self {
        ProductTerm {
            node_power,
            feat_power,
            coeff,
        }
    }
}

/// The standard product-graph types, plus free term coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum ProductKind {
    Cartesian,
    Kronecker,
    Strong,
    Custom(Vec<ProductTerm>),
}

impl ProductKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProductKind::Cartesian => "cartesian",
            ProductKind::Kronecker => "kronecker",
            ProductKind::Strong => "strong",
            ProductKind::Custom(_) => "custom",
        }
    }
}

/// Lazy shift operator of a product graph on `N * F` vertices.
///
/// Represents `S_prod = sum_ij s_ij (S^i ⊗ S_F^j)` as the two factor graphs
/// plus the term list; the `NF x NF` matrix is never formed. Application
/// lives in [`crate::filtering`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProductShiftOperator {
    node_graph: Graph,
    feature_graph: Graph,
    kind: ProductKind,
    terms: Vec<ProductTerm>,
}

impl ProductShiftOperator {
    pub fn node_graph(&self) -> &Graph {
        &self.node_graph
    }

    pub fn feature_graph(&self) -> &Graph {
        &self.feature_graph
    }

    pub fn kind(&self) -> &ProductKind {
        &self.kind
    }

    pub fn terms(&self) -> &[ProductTerm] {
        &self.terms
    }

    pub fn n_nodes(&self) -> usize {
        self.node_graph.n_nodes()
    }

    pub fn n_features(&self) -> usize {
        self.feature_graph.n_nodes()
    }

    /// Dimension of signals this operator acts on, exactly `N * F`.
    pub fn dim(&self) -> usize {
        self.n_nodes() * self.n_features()
    }

    /// Operator with every term coefficient multiplied by `factor`.
    ///
    /// The result is tagged `Custom` unless the factor is 1.
    pub fn with_scaled_terms(&self, factor: f64) -> Self {
        if factor == 1.0 {
            return self.clone();
        }
        let terms: Vec<ProductTerm> = self
            .terms
            .iter()
            .map(|t| ProductTerm::new(t.node_power, t.feat_power, t.coeff * factor))
            .collect();
        ProductShiftOperator {
            node_graph: self.node_graph.clone(),
            feature_graph: self.feature_graph.clone(),
            kind: ProductKind::Custom(terms.clone()),
            terms,
        }
    }

    /// Operator for the transposed shift: graphs transposed, terms unchanged.
    pub fn transposed(&self) -> Self {
        ProductShiftOperator {
            node_graph: self.node_graph.transposed(),
            feature_graph: self.feature_graph.transposed(),
            kind: self.kind.clone(),
            terms: self.terms.clone(),
        }
    }

    /// Sparse multiply-add count of one operator application.
    pub fn shift_madds_per_apply(&self) -> usize {
        let f_e = self.n_features() * self.node_graph.n_edges();
        let n_ef = self.n_nodes() * self.feature_graph.n_edges();
        self.terms
            .iter()
            .map(|t| match (t.node_power, t.feat_power) {
                (0, 0) => 0,
                (1, 0) => f_e,
                (0, 1) => n_ef,
                (1, 1) => f_e + n_ef,
                _ => unreachable!("term powers are 0 or 1"),
            })
            .sum()
    }
}

/// Combine a node graph and a feature graph into a lazy product shift operator.
pub fn make_product(node_graph: &Graph, feature_graph: &Graph, kind: ProductKind) -> Result<ProductShiftOperator> {
    if node_graph.n_nodes() == 0 || feature_graph.n_nodes() == 0 {
        return Err(Error::InvalidInput("product factors must be non-empty".into()));
    }
    let terms = match &kind {
        ProductKind::Cartesian => vec![ProductTerm::new(1, 0, 1.0), ProductTerm::new(0, 1, 1.0)],
        ProductKind::Kronecker => vec![ProductTerm::new(1, 1, 1.0)],
        ProductKind::Strong => vec![
            ProductTerm::new(1, 0, 1.0),
            ProductTerm::new(0, 1, 1.0),
            ProductTerm::new(1, 1, 1.0),
        ],
        ProductKind::Custom(ts) => {
            if ts.is_empty() {
                return Err(Error::InvalidParameter("custom product needs at least one term".into()));
            }
            for t in ts {
                if t.node_power > 1 || t.feat_power > 1 {
                    return Err(Error::InvalidParameter(
                        "custom product term powers must be 0 or 1".into(),
                    ));
                }
                if !t.coeff.is_finite() {
                    return Err(Error::InvalidParameter("non-finite custom term coefficient".into()));
                }
            }
            ts.clone()
        }
    };
    Ok(ProductShiftOperator {
        node_graph: node_graph.clone(),
        feature_graph: feature_graph.clone(),
        kind,
        terms,
    })
}

/// Directed edge count of a Cartesian product graph, `F|E| + N|E_F|`.
pub fn product_edge_count(op: &ProductShiftOperator) -> Result<usize> {
    match op.kind() {
        ProductKind::Cartesian => Ok(op.n_features() * op.node_graph().n_edges()
            + op.n_nodes() * op.feature_graph().n_edges()),
        other => Err(Error::Unsupported(format!(
            "edge count formula applies to the cartesian product, not {}",
            other.name()
        ))),
    }
}
