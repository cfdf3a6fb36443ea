use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("cycle detected through edge {from} -> {to}")]
    Cycle { from: NodeId, to: NodeId },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("cost node {0} must be scalar, got shape {1:?}")]
    CostShape(NodeId, Vec<usize>),

    #[error("input node {0} cannot have parents")]
    InputWithParents(NodeId),

    #[error("node {0} is not a parameter input")]
    NotAParam(NodeId),

    #[error("unknown op '{0}'")]
    UnknownOp(String),

    #[error("unknown distribution '{0}'")]
    UnknownDist(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("invalid distribution parameter: {0}")]
    InvalidParam(String),

    #[error("value outside distribution support: {0}")]
    OutOfSupport(String),

    #[error("node {0} is not reparameterizable (only Gaussian nodes with parent-supplied parameters are)")]
    NotReparameterizable(NodeId),

    #[error("trace is missing a value for node {0}")]
    IncompleteTrace(NodeId),

    #[error("baseline for node {node} reads node {input}, which {node} influences")]
    BaselineScope { node: NodeId, input: NodeId },

    #[error("differentiability requirements fail for param {theta}: {violations} violating edge(s)")]
    ConditionViolated { theta: NodeId, violations: usize },

    #[error("op '{0}' has no registered second-order rule")]
    SecondOrderUnsupported(String),

    #[error("cost node {0} takes a positive value on the enumerated support")]
    PositiveCost(NodeId),

    #[error("node {0} does not have finite support")]
    NonFiniteSupport(NodeId),

    #[error("cost node {0} is deterministically influenced by a parameter")]
    DirectCostInfluence(NodeId),

    #[error("enumeration needs {0} configurations, above the limit")]
    SupportTooLarge(u128),

    #[error("continuous node {0} cannot be enumerated (dimension or family unsupported)")]
    UnsupportedContinuous(NodeId),

    #[error("unknown builtin example '{0}'")]
    UnknownExample(String),

    #[error("graph file error at node {node}: {msg}")]
    GraphLoad { node: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("cannot read {path}: {source}")]
    File { path: String, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
