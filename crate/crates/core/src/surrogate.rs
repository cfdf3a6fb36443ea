//! Surrogate loss construction.
//!
//! For one trace the surrogate is the deterministic scalar
//!
//! ```text
//! L = sum_w log p(w | DEPS_w) * (Q̂_w - b_w) + sum_c c(DEPS_c)
//! ```
//!
//! where `w` ranges over stochastic nodes deterministically influenced by some
//! param, and `Q̂_w`, `b_w` and every sampled value are baked in as constants.
//! Its gradient is an unbiased estimate of the gradient of the expected cost.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::baseline::BaselineSpec;
use crate::error::Result;
use crate::graph::{Graph, NodeId, NodeKind};
use crate::ops::Builtin;
use crate::tape::{Tape, Var};
use crate::tensor::Value;
use crate::trace::{all_downstream_costs, Trace};

/// How each score term enters the surrogate. Both give the same gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurrogateForm {
    /// `log p(ŵ | DEPS_w) * weight`
    #[default]
    LogProb,
    /// `p(ŵ | DEPS_w) / P̂_w * weight`, with `P̂_w` the sampled probability held constant.
    Ratio,
}

#[derive(Debug, Clone)]
pub struct ScoreTerm {
    pub node: NodeId,
    pub q_hat: f64,
    pub baseline: f64,
    /// Slot holding `log p(ŵ | DEPS_w)` on the surrogate tape.
    pub logprob: Var,
}

impl ScoreTerm {
    pub fn weight(&self) -> f64 {
        self.q_hat - self.baseline
    }
}

#[derive(Debug, Clone)]
pub struct SurrogateLoss {
    pub tape: Tape,
    pub output: Var,
    pub terms: Vec<ScoreTerm>,
    node_vars: Vec<Var>,
}

impl SurrogateLoss {
    pub fn value(&self) -> f64 {
        self.tape.value(self.output).item()
    }

    pub fn node_var(&self, id: NodeId) -> Var {
        self.node_vars[id.index()]
    }

    pub fn term(&self, node: NodeId) -> Option<&ScoreTerm> {
        self.terms.iter().find(|t| t.node == node)
    }

    /// Gradient of the surrogate with respect to each of `params`.
    pub fn gradients(&self, params: &[NodeId]) -> Result<BTreeMap<NodeId, Value>> {
        let adj = self.tape.backward(&[(self.output, Value::scalar(1.0))])?;
        Ok(params
            .iter()
            .map(|&p| {
                let v = self.node_var(p);
                (p, adj.get_or_zeros(v, self.tape.value(v)))
            })
            .collect())
    }
}

/// Builds the surrogate for one trace. Deterministic nodes that no param
/// deterministically influences enter as constants, so their ops are never
/// differentiated.
pub fn build_surrogate(graph: &Graph, trace: &Trace, baselines: &BaselineSpec) -> Result<SurrogateLoss> {
    build_surrogate_with(graph, trace, baselines, SurrogateForm::LogProb)
}

pub fn build_surrogate_with(
    graph: &Graph,
    trace: &Trace,
    baselines: &BaselineSpec,
    form: SurrogateForm,
) -> Result<SurrogateLoss> {
    baselines.validate(graph)?;
    let q_hat = all_downstream_costs(graph, trace)?;
    let index = graph.index();
    let mut tape = Tape::new();
    let mut vars: Vec<Option<Var>> = vec![None; graph.len()];
    let mut terms = Vec::new();
    let mut pieces = Vec::new();

    for &id in graph.topo_order() {
        let node = graph.node(id);
        let value = trace.value(id)?;
        let parent_vars = |vars: &[Option<Var>]| -> Vec<Var> {
            node.parents.iter().map(|p| vars[p.index()].expect("topological order")).collect()
        };
        let var = match &node.kind {
            NodeKind::Input if graph.is_param(id) => tape.variable(value.clone()),
            NodeKind::Input => tape.constant(value.clone()),
            NodeKind::Stochastic(dist) => {
                if index.param_live(id) {
                    let params = parent_vars(&vars);
                    let logprob = dist.expand_log_prob(&mut tape, &params, value)?;
                    let term = ScoreTerm { node: id, q_hat: q_hat[id.index()], baseline: baselines.value(id, trace)?, logprob };
                    let weighted = match form {
                        SurrogateForm::LogProb => tape.op(Builtin::Scale(term.weight()), &[logprob])?,
                        SurrogateForm::Ratio => {
                            let sampled = trace.logprob(id).unwrap_or_else(|| tape.value(logprob).item());
                            let shifted = tape.op(Builtin::Offset(-sampled), &[logprob])?;
                            let ratio = tape.op(Builtin::Exp, &[shifted])?;
                            tape.op(Builtin::Scale(term.weight()), &[ratio])?
                        }
                    };
                    pieces.push(weighted);
                    terms.push(term);
                }
                tape.constant(value.clone())
            }
            NodeKind::Deterministic(op) | NodeKind::Cost(op) => {
                let var = if index.param_live(id) {
                    tape.apply(op, &parent_vars(&vars))?
                } else {
                    tape.constant(value.clone())
                };
                if node.kind.is_cost() {
                    pieces.push(var);
                }
                var
            }
        };
        vars[id.index()] = Some(var);
    }

    let output = if pieces.is_empty() {
        tape.constant(Value::scalar(0.0))
    } else {
        let stacked = tape.op(Builtin::Concat, &pieces)?;
        tape.op(Builtin::Sum, &[stacked])?
    };
    Ok(SurrogateLoss { tape, output, terms, node_vars: vars.into_iter().map(|v| v.expect("all nodes")).collect() })
}

/// Per-trace gradient estimate for `theta` by backpropagation through the surrogate.
pub fn grad_surrogate(graph: &Graph, trace: &Trace, baselines: &BaselineSpec, theta: NodeId) -> Result<Value> {
    graph.validate_differentiability(theta)?.into_result()?;
    let s = build_surrogate(graph, trace, baselines)?;
    Ok(s.gradients(&[theta])?.remove(&theta).expect("requested param"))
}

/// Per-trace estimates for several params from one surrogate; no validation.
pub(crate) fn surrogate_gradients(
    graph: &Graph,
    trace: &Trace,
    baselines: &BaselineSpec,
    params: &[NodeId],
    form: SurrogateForm,
) -> Result<BTreeMap<NodeId, Value>> {
    build_surrogate_with(graph, trace, baselines, form)?.gradients(params)
}
