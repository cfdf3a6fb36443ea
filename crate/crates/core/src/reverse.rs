//! The explicit backward pass over a stochastic computation graph.
//!
//! `g_v` starts at one on cost nodes and zero elsewhere. Nodes are visited in
//! reverse topological order; for each edge `(w, v)` with `w` non-stochastic,
//! a stochastic child contributes `∂/∂w log p(v̂ | parents) * (Q̂_v - b_v)` and a
//! deterministic child contributes its vector-Jacobian product `(∂v/∂w)ᵀ g_v`.
//! Only nodes that a param reaches deterministically are visited; nothing
//! else can feed back into a param.

use std::collections::BTreeMap;

use crate::baseline::BaselineSpec;
use crate::error::Result;
use crate::graph::{Graph, NodeId, NodeKind};
use crate::tensor::Value;
use crate::trace::{all_downstream_costs, Trace};

pub fn grad_algorithm1(graph: &Graph, trace: &Trace, baselines: &BaselineSpec, theta: NodeId) -> Result<Value> {
    graph.validate_differentiability(theta)?.into_result()?;
    baselines.validate(graph)?;
    Ok(reverse_gradients(graph, trace, baselines, &[theta])?.remove(&theta).expect("requested param"))
}

pub(crate) fn reverse_gradients(
    graph: &Graph,
    trace: &Trace,
    baselines: &BaselineSpec,
    params: &[NodeId],
) -> Result<BTreeMap<NodeId, Value>> {
    let index = graph.index();
    let q_hat = all_downstream_costs(graph, trace)?;
    let relevant = |w: NodeId| graph.is_param(w) || index.param_live(w);

    let mut g: Vec<Option<Value>> = vec![None; graph.len()];
    for c in graph.costs() {
        g[c.index()] = Some(Value::scalar(1.0));
    }
    let add = |g: &mut Vec<Option<Value>>, w: NodeId, contribution: &Value, k: f64| match &mut g[w.index()] {
        Some(acc) => acc.add_scaled(contribution, k),
        None => g[w.index()] = Some(contribution.scaled(k)),
    };

    for &v in graph.topo_order().iter().rev() {
        if !index.param_live(v) {
            continue;
        }
        let node = graph.node(v);
        let args: Vec<&Value> = node.parents.iter().map(|&p| trace.value(p)).collect::<Result<_>>()?;
        match &node.kind {
            NodeKind::Input => {}
            NodeKind::Stochastic(dist) => {
                let weight = q_hat[v.index()] - baselines.value(v, trace)?;
                let scores = dist.score(&args, trace.value(v)?)?;
                for (&w, score) in node.parents.iter().zip(scores) {
                    if graph.node(w).kind.is_stochastic() || !relevant(w) {
                        continue;
                    }
                    if let Some(score) = score {
                        add(&mut g, w, &score, weight);
                    }
                }
            }
            NodeKind::Deterministic(op) | NodeKind::Cost(op) => {
                let Some(gv) = g[v.index()].clone() else { continue };
                let grads = op.vjp(&args, trace.value(v)?, &gv)?;
                for (&w, grad) in node.parents.iter().zip(grads) {
                    if graph.node(w).kind.is_stochastic() || !relevant(w) {
                        continue;
                    }
                    if let Some(grad) = grad {
                        add(&mut g, w, &grad, 1.0);
                    }
                }
            }
        }
    }

    Ok(params
        .iter()
        .map(|&p| (p, g[p.index()].take().unwrap_or_else(|| Value::zeros(&graph.node(p).shape))))
        .collect())
}
