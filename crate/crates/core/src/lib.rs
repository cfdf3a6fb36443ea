//! Gradient estimation for stochastic computation graphs.
//!
//! A graph mixes deterministic functions with conditional distributions. The
//! library samples traces, builds a differentiable surrogate loss per trace,
//! and averages its gradient into an unbiased estimate of the gradient of the
//! expected total cost. Exact answers for small graphs come from enumeration.

pub mod baseline;
pub mod builtins;
pub mod cli;
pub mod dist;
pub mod error;
pub mod estimate;
pub mod format;
pub mod graph;
pub mod hvp;
pub mod influence;
pub mod ops;
pub mod oracle;
pub mod reverse;
pub mod rng;
pub mod surrogate;
pub mod tape;
pub mod tensor;
pub mod trace;

pub use baseline::{Baseline, BaselineSpec};
pub use builtins::{builtin, BuiltinExample, BUILTIN_NAMES};
pub use dist::{reparameterize, DistributionSpec, Family, TableDist};
pub use error::{Error, Result};
pub use estimate::{estimate, per_trace_gradient, EstimateConfig, GradientEstimate, Method, ParamEstimate};
pub use format::{graph_from_json, graph_to_json, load_graph};
pub use graph::{Graph, GraphBuilder, Node, NodeId, NodeKind};
pub use hvp::hessian_vector_product;
pub use influence::{DifferentiabilityReport, Influence, InfluenceIndex};
pub use ops::{parse_op, Builtin, OpSpec, Operator};
pub use oracle::{
    enumerate, exact_estimator_moments, exact_expectation, exact_gradient, exact_gradients, mm_bound_gap,
    optimal_baseline, SupportDescriptor,
};
pub use reverse::grad_algorithm1;
pub use surrogate::{build_surrogate, build_surrogate_with, grad_surrogate, SurrogateForm, SurrogateLoss};
pub use tape::{Tape, Var};
pub use tensor::{Shape, Value};
pub use trace::{downstream_costs, forward_eval, sample_trace, Inputs, Trace};
