//! The majorization bound behind the surrogate loss.
//!
//! When every cost is nonpositive and no cost depends deterministically on
//! `θ`, the expected cost at `θ_new` is bounded above by the expected
//! surrogate built around `θ_old`:
//!
//! ```text
//! E_new[sum c] <= E_old[sum c + sum_v (log p_new(v̂) - log p_old(v̂)) Q̂_v]
//! ```
//!
//! with equality at `θ_new = θ_old`. It follows from `exp(x) >= 1 + x` applied
//! to the likelihood ratio of each downstream factor.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::Value;
use crate::trace::{all_downstream_costs, Inputs, Trace};

use super::{enumerate, Configuration, SupportDescriptor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmBound {
    /// Expected total cost at the new parameter.
    pub lhs: f64,
    /// Expected surrogate around the old parameter, evaluated at the new one.
    pub rhs: f64,
}

impl MmBound {
    pub fn gap(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn holds(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }
}

pub fn mm_bound_gap(graph: &Graph, inputs: &Inputs, theta: NodeId, theta_old: &Value, theta_new: &Value) -> Result<MmBound> {
    graph.check_param(theta)?;
    if let Some(s) = graph.stochastic_nodes().find(|&s| !graph.node(s).kind.dist().expect("stochastic").is_finite_support()) {
        return Err(Error::NonFiniteSupport(s));
    }
    if let Some(c) = graph.costs().find(|&c| graph.index().det_influences(theta, c)) {
        return Err(Error::DirectCostInfluence(c));
    }
    let at = |value: &Value| -> Inputs {
        let mut i = inputs.clone();
        i.insert(theta, value.clone());
        i
    };
    let (inputs_old, inputs_new) = (at(theta_old), at(theta_new));
    let support = SupportDescriptor::default();

    let mut lhs = 0.0;
    for c in enumerate(graph, &inputs_new, &support)? {
        lhs += c.weight * checked_total_cost(graph, &c)?;
    }

    let mut rhs = 0.0;
    for c in enumerate(graph, &inputs_old, &support)? {
        let total = checked_total_cost(graph, &c)?;
        let q_hat = all_downstream_costs(graph, &c.trace)?;
        let assignment: BTreeMap<NodeId, Value> =
            graph.stochastic_nodes().map(|s| Ok((s, c.trace.value(s)?.clone()))).collect::<Result<_>>()?;
        let moved = Trace::from_assignment(graph, &inputs_new, &assignment)?;
        let mut correction = 0.0;
        for s in graph.stochastic_nodes() {
            let q = q_hat[s.index()];
            if q == 0.0 {
                continue;
            }
            let old = c.trace.logprob(s).expect("stochastic");
            let new = moved.logprob(s).expect("stochastic");
            correction += (new - old) * q;
        }
        rhs += c.weight * (total + correction);
    }
    Ok(MmBound { lhs, rhs })
}

fn checked_total_cost(graph: &Graph, config: &Configuration) -> Result<f64> {
    let mut total = 0.0;
    for c in graph.costs() {
        let v = config.trace.value(c)?.item();
        if v > 0.0 {
            return Err(Error::PositiveCost(c));
        }
        total += v;
    }
    Ok(total)
}
