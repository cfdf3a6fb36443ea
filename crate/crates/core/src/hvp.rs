//! Unbiased Hessian-vector products of the expected cost.
//!
//! The per-trace gradient `g(θ)` is itself a deterministic function of `θ`
//! and the sampled trace, so `c' = <g(θ), v>` is a cost whose expectation is
//! `<∇ E[cost], v>`. Two details keep its gradient unbiased. Inside `g`, each
//! `Q̂_w` stays a function of `θ` (costs may depend on `θ` directly), and the
//! outer gradient carries score terms of its own, since differentiating `c'`
//! pathwise alone misses the dependence of the sampling distribution on `θ`.
//! The estimate is
//!
//! ```text
//! ∇_θ c' + c' * sum_w ∇_θ log p(ŵ | DEPS_w)
//! ```
//!
//! with `w` over stochastic nodes a param deterministically influences.

use crate::baseline::BaselineSpec;
use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::ops::Builtin;
use crate::surrogate::build_surrogate;
use crate::tape::{Tape, Var};
use crate::tensor::Value;
use crate::trace::Trace;

/// One trace's estimate of `H v`, where `H` is the Hessian of the expected
/// total cost with respect to `theta`.
pub fn hessian_vector_product(graph: &Graph, trace: &Trace, theta: NodeId, v: &Value) -> Result<Value> {
    graph.check_param(theta)?;
    let shape = &graph.node(theta).shape;
    if v.shape() != &shape[..] {
        return Err(Error::Shape(format!("direction has shape {:?}, param {theta} has {:?}", v.shape(), shape)));
    }
    graph.validate_differentiability(theta)?.into_result()?;

    let s = build_surrogate(graph, trace, &BaselineSpec::none())?;
    let mut tape = s.tape.clone();
    let theta_var = s.node_var(theta);

    // g = sum_w Q̂_w ∇ log p_w + ∇ sum_c c, with each Q̂_w recorded as a
    // function of θ rather than a constant so that the second pass sees it.
    let one = tape.constant(Value::scalar(1.0));
    let mut seeds: Vec<(Var, Var)> = graph.costs().map(|c| (s.node_var(c), one)).collect();
    for term in &s.terms {
        let downstream: Vec<Var> =
            graph.costs().filter(|&c| graph.index().influences(term.node, c)).map(|c| s.node_var(c)).collect();
        let q_hat = sum_vars(&mut tape, &downstream)?;
        seeds.push((term.logprob, q_hat));
    }
    let first = tape.backward_graph(&seeds)?;
    let Some(grad) = first[theta_var.index()] else {
        return Ok(Value::zeros(shape));
    };

    let direction = tape.constant(v.clone());
    let prod = tape.op(Builtin::Mul, &[grad, direction])?;
    let inner = tape.op(Builtin::Sum, &[prod])?;
    let inner_value = tape.value(inner).item();

    let logprobs: Vec<Var> = s.terms.iter().map(|t| t.logprob).collect();
    let total_logprob = sum_vars(&mut tape, &logprobs)?;
    let weighted = tape.op(Builtin::Scale(inner_value), &[total_logprob])?;
    let objective = tape.op(Builtin::Add, &[inner, weighted])?;

    let adj = tape.backward(&[(objective, Value::scalar(1.0))])?;
    Ok(adj.get_or_zeros(theta_var, tape.value(theta_var)))
}

fn sum_vars(tape: &mut Tape, vars: &[Var]) -> Result<Var> {
    if vars.is_empty() {
        return Ok(tape.constant(Value::scalar(0.0)));
    }
    let stacked = tape.op(Builtin::Concat, vars)?;
    tape.op(Builtin::Sum, &[stacked])
}
