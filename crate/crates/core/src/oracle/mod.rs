//! Exact answers for small graphs.
//!
//! Discrete stochastic nodes are summed over their support; Gaussian nodes
//! of dimension at most two are integrated with tensor-product Gauss–Hermite
//! rules. Gradients differentiate the enumerated sum directly: discrete
//! outcomes carry their probability as a differentiable weight and
//! quadrature points move with the mean and scale. No score-function
//! estimator is involved, so the oracle is independent of the estimators it
//! checks. Quadrature gradients assume the integrand is smooth in the
//! Gaussian value.

mod bound;
pub mod quadrature;

use std::collections::BTreeMap;

use crate::baseline::BaselineSpec;
use crate::dist::DistributionSpec;
use crate::error::{Error, Result};
use crate::estimate::{per_trace_gradient, Method};
use crate::graph::{Graph, NodeId, NodeKind};
use crate::ops::Builtin;
use crate::surrogate::build_surrogate;
use crate::tape::{Tape, Var};
use crate::tensor::Value;
use crate::trace::{all_downstream_costs, Inputs, Trace};

pub use bound::{mm_bound_gap, MmBound};

/// Limits for enumeration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SupportDescriptor {
    /// Gauss–Hermite points per Gaussian dimension.
    pub quadrature_order: usize,
    pub max_configurations: u128,
}

impl Default for SupportDescriptor {
    fn default() -> Self {
        Self { quadrature_order: 20, max_configurations: 1_000_000 }
    }
}

impl SupportDescriptor {
    pub fn with_order(quadrature_order: usize) -> Self {
        Self { quadrature_order, ..Self::default() }
    }
}

/// How one stochastic node was assigned in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Choice {
    Outcome { value: Value, prob: f64 },
    /// Standard-normal point `z`; the node value is `mean + scale * z`.
    Quadrature { z: Value, weight: f64 },
}

#[derive(Debug, Clone)]
pub struct Configuration {
    pub trace: Trace,
    /// Probability for discrete configurations; probability times quadrature
    /// weight once Gaussian nodes are involved.
    pub weight: f64,
    pub choices: BTreeMap<NodeId, Choice>,
}

/// Upper bound on the number of configurations, before zero-probability pruning.
pub fn configuration_bound(graph: &Graph, support: &SupportDescriptor) -> Result<u128> {
    if support.quadrature_order < 2 {
        return Err(Error::InvalidArgument(format!("quadrature order {} is below 2", support.quadrature_order)));
    }
    let mut total: u128 = 1;
    for s in graph.stochastic_nodes() {
        let node = graph.node(s);
        let dist = node.kind.dist().expect("stochastic");
        let count: u128 = match dist {
            DistributionSpec::Bernoulli | DistributionSpec::BernoulliLogit => {
                let d = node.shape.iter().product::<usize>() as u32;
                if d > 100 {
                    return Err(Error::SupportTooLarge(u128::MAX));
                }
                1u128.checked_shl(d).unwrap_or(u128::MAX)
            }
            DistributionSpec::Categorical | DistributionSpec::CategoricalLogits => {
                graph.node(node.parents[0]).shape[0] as u128
            }
            DistributionSpec::CategoricalTable(t) => t.outcomes() as u128,
            DistributionSpec::Gaussian | DistributionSpec::GaussianLogSigma | DistributionSpec::StandardNormal(_) => {
                let d = node.shape.iter().product::<usize>();
                if node.shape.len() > 1 || d > 2 {
                    return Err(Error::UnsupportedContinuous(s));
                }
                (support.quadrature_order as u128).pow(d as u32)
            }
        };
        total = total.saturating_mul(count);
    }
    if total > support.max_configurations {
        return Err(Error::SupportTooLarge(total));
    }
    Ok(total)
}

fn require_finite_support(graph: &Graph) -> Result<()> {
    match graph.stochastic_nodes().find(|&s| !graph.node(s).kind.dist().expect("stochastic").is_finite_support()) {
        Some(s) => Err(Error::UnsupportedContinuous(s)),
        None => Ok(()),
    }
}

struct Enumerator<'a> {
    graph: &'a Graph,
    inputs: &'a Inputs,
    rule: (Vec<f64>, Vec<f64>),
    values: Vec<Option<Value>>,
    logprobs: Vec<Option<f64>>,
    choices: BTreeMap<NodeId, Choice>,
    out: Vec<Configuration>,
}

impl Enumerator<'_> {
    fn args(&self, id: NodeId) -> Vec<&Value> {
        self.graph.node(id).parents.iter().map(|p| self.values[p.index()].as_ref().expect("topological")).collect()
    }

    fn descend(&mut self, pos: usize, weight: f64) -> Result<()> {
        let order = self.graph.topo_order();
        if pos == order.len() {
            self.out.push(Configuration {
                trace: Trace::from_parts(self.values.clone(), self.logprobs.clone()),
                weight,
                choices: self.choices.clone(),
            });
            return Ok(());
        }
        let id = order[pos];
        let node = self.graph.node(id);
        match &node.kind {
            NodeKind::Input => {
                let v = self
                    .inputs
                    .get(&id)
                    .ok_or_else(|| Error::InvalidArgument(format!("no value for input {}", self.graph.label(id))))?;
                self.values[id.index()] = Some(v.clone());
                self.descend(pos + 1, weight)
            }
            NodeKind::Deterministic(op) | NodeKind::Cost(op) => {
                let v = op.forward(&self.args(id))?;
                self.values[id.index()] = Some(v);
                self.descend(pos + 1, weight)
            }
            NodeKind::Stochastic(dist) => {
                let params: Vec<Value> = self.args(id).into_iter().cloned().collect();
                let refs: Vec<&Value> = params.iter().collect();
                let branches: Vec<(Value, f64, Choice)> = match dist.support(&refs)? {
                    Some(outcomes) => outcomes
                        .into_iter()
                        .map(|(value, prob)| (value.clone(), prob, Choice::Outcome { value, prob }))
                        .collect(),
                    None => self.quadrature_points(dist, &refs, &node.shape)?,
                };
                for (value, w, choice) in branches {
                    self.logprobs[id.index()] = Some(dist.log_prob(&refs, &value)?);
                    self.values[id.index()] = Some(value);
                    self.choices.insert(id, choice);
                    self.descend(pos + 1, weight * w)?;
                }
                self.choices.remove(&id);
                Ok(())
            }
        }
    }

    fn quadrature_points(&self, dist: &DistributionSpec, params: &[&Value], shape: &[usize]) -> Result<Vec<(Value, f64, Choice)>> {
        let d: usize = shape.iter().product();
        let (z, w) = &self.rule;
        let n = z.len();
        let (mean, scale): (Vec<f64>, Vec<f64>) = match dist {
            DistributionSpec::Gaussian => (params[0].data().to_vec(), params[1].data().to_vec()),
            DistributionSpec::GaussianLogSigma => {
                (params[0].data().to_vec(), params[1].data().iter().map(|s| s.exp()).collect())
            }
            _ => (vec![0.0; d], vec![1.0; d]),
        };
        let mut points = Vec::with_capacity(n.pow(d as u32));
        for flat in 0..n.pow(d as u32) {
            let mut rem = flat;
            let mut zs = vec![0.0; d];
            let mut weight = 1.0;
            for k in (0..d).rev() {
                zs[k] = z[rem % n];
                weight *= w[rem % n];
                rem /= n;
            }
            let xs: Vec<f64> = (0..d).map(|k| mean[k] + scale[k] * zs[k]).collect();
            let zv = Value::new(shape.to_vec(), zs)?;
            points.push((Value::new(shape.to_vec(), xs)?, weight, Choice::Quadrature { z: zv, weight }));
        }
        Ok(points)
    }
}

/// Every joint assignment with positive probability, depth first in
/// topological order.
pub fn enumerate(graph: &Graph, inputs: &Inputs, support: &SupportDescriptor) -> Result<Vec<Configuration>> {
    configuration_bound(graph, support)?;
    let mut e = Enumerator {
        graph,
        inputs,
        rule: quadrature::standard_normal_rule(support.quadrature_order),
        values: vec![None; graph.len()],
        logprobs: vec![None; graph.len()],
        choices: BTreeMap::new(),
        out: Vec::new(),
    };
    e.descend(0, 1.0)?;
    Ok(e.out)
}

fn total_cost(graph: &Graph, trace: &Trace) -> Result<f64> {
    graph.costs().map(|c| trace.value(c).map(Value::item)).sum()
}

/// `E[sum of costs]`.
pub fn exact_expectation(graph: &Graph, inputs: &Inputs, support: &SupportDescriptor) -> Result<f64> {
    enumerate(graph, inputs, support)?.iter().map(|c| Ok(c.weight * total_cost(graph, &c.trace)?)).sum()
}

/// `∇_θ E[sum of costs]` by differentiating the enumerated sum.
pub fn exact_gradient(graph: &Graph, inputs: &Inputs, theta: NodeId, support: &SupportDescriptor) -> Result<Value> {
    Ok(exact_gradients(graph, inputs, &[theta], support)?.remove(&theta).expect("requested param"))
}

pub fn exact_gradients(
    graph: &Graph,
    inputs: &Inputs,
    params: &[NodeId],
    support: &SupportDescriptor,
) -> Result<BTreeMap<NodeId, Value>> {
    for &p in params {
        graph.check_param(p)?;
    }
    let mut totals: BTreeMap<NodeId, Value> =
        params.iter().map(|&p| (p, Value::zeros(&graph.node(p).shape))).collect();
    for config in enumerate(graph, inputs, support)? {
        let (tape, objective, vars) = weighted_cost_tape(graph, inputs, &config)?;
        let adj = tape.backward(&[(objective, Value::scalar(1.0))])?;
        for &p in params {
            if let Some(g) = adj.get(vars[p.index()]) {
                totals.get_mut(&p).expect("param").add_assign(g);
            }
        }
    }
    Ok(totals)
}

/// Records `weight(θ) * sum of costs(θ)` for one configuration.
fn weighted_cost_tape(graph: &Graph, inputs: &Inputs, config: &Configuration) -> Result<(Tape, Var, Vec<Var>)> {
    let mut tape = Tape::new();
    let mut vars: Vec<Option<Var>> = vec![None; graph.len()];
    let mut log_weights = Vec::new();
    let mut fixed_weight = 1.0;
    let mut costs = Vec::new();
    for &id in graph.topo_order() {
        let node = graph.node(id);
        let parents: Vec<Var> = node.parents.iter().map(|p| vars[p.index()].expect("topological")).collect();
        let var = match &node.kind {
            NodeKind::Input => {
                let v = inputs[&id].clone();
                if graph.is_param(id) {
                    tape.variable(v)
                } else {
                    tape.constant(v)
                }
            }
            NodeKind::Deterministic(op) => tape.apply(op, &parents)?,
            NodeKind::Cost(op) => {
                let v = tape.apply(op, &parents)?;
                costs.push(v);
                v
            }
            NodeKind::Stochastic(dist) => match &config.choices[&id] {
                Choice::Outcome { value, .. } => {
                    log_weights.push(dist.expand_log_prob(&mut tape, &parents, value)?);
                    tape.constant(value.clone())
                }
                Choice::Quadrature { z, weight } => {
                    fixed_weight *= weight;
                    let z = tape.constant(z.clone());
                    match dist {
                        DistributionSpec::StandardNormal(_) => z,
                        _ => {
                            let scale = match dist {
                                DistributionSpec::GaussianLogSigma => tape.op(Builtin::Exp, &[parents[1]])?,
                                _ => parents[1],
                            };
                            let noise = tape.op(Builtin::Mul, &[z, scale])?;
                            tape.op(Builtin::Add, &[parents[0], noise])?
                        }
                    }
                }
            },
        };
        vars[id.index()] = Some(var);
    }
    let cost = sum_vars(&mut tape, &costs)?;
    let weighted = if log_weights.is_empty() {
        cost
    } else {
        let lw = sum_vars(&mut tape, &log_weights)?;
        let w = tape.op(Builtin::Exp, &[lw])?;
        tape.op(Builtin::Mul, &[w, cost])?
    };
    let objective = tape.op(Builtin::Scale(fixed_weight), &[weighted])?;
    Ok((tape, objective, vars.into_iter().map(|v| v.expect("all nodes")).collect()))
}

fn sum_vars(tape: &mut Tape, vars: &[Var]) -> Result<Var> {
    if vars.is_empty() {
        return Ok(tape.constant(Value::scalar(0.0)));
    }
    let stacked = tape.op(Builtin::Concat, vars)?;
    tape.op(Builtin::Sum, &[stacked])
}

/// Exact mean and per-component variance of the single-trace estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorMoments {
    pub mean: Value,
    pub variance: Value,
}

/// Moments of the per-trace gradient estimate under the exact sampling
/// distribution. Finite-support graphs only.
pub fn exact_estimator_moments(
    graph: &Graph,
    inputs: &Inputs,
    theta: NodeId,
    baselines: &BaselineSpec,
    method: Method,
) -> Result<EstimatorMoments> {
    require_finite_support(graph)?;
    let configs = enumerate(graph, inputs, &SupportDescriptor::default())?;
    let mut samples = Vec::with_capacity(configs.len());
    for c in &configs {
        let g = per_trace_gradient(graph, &c.trace, baselines, &[theta], method)?.remove(&theta).expect("requested");
        samples.push((c.weight, g));
    }
    let mut mean = Value::zeros(&graph.node(theta).shape);
    for (w, g) in &samples {
        mean.add_scaled(g, *w);
    }
    let mut variance = Value::zeros(mean.shape());
    for (w, g) in &samples {
        let d = g.zip_map(&mean, |a, b| (a - b) * (a - b));
        variance.add_scaled(&d, *w);
    }
    Ok(EstimatorMoments { mean, variance })
}

/// The variance-minimizing constant baseline for one stochastic node and a
/// scalar param, `E[Q̂ s²] / E[s²]` with `s = ∂_θ log p(v̂ | DEPS_v)`.
/// Finite-support graphs only.
pub fn optimal_baseline(graph: &Graph, inputs: &Inputs, theta: NodeId, node: NodeId) -> Result<f64> {
    graph.check_param(theta)?;
    if graph.node(theta).shape.iter().product::<usize>() != 1 {
        return Err(Error::InvalidArgument("optimal baseline needs a scalar param".into()));
    }
    if !graph.try_node(node)?.kind.is_stochastic() {
        return Err(Error::InvalidArgument(format!("node {node} is not stochastic")));
    }
    require_finite_support(graph)?;
    let (mut num, mut den) = (0.0, 0.0);
    for c in enumerate(graph, inputs, &SupportDescriptor::default())? {
        let s = build_surrogate(graph, &c.trace, &BaselineSpec::none())?;
        let Some(term) = s.term(node) else { return Ok(0.0) };
        let adj = s.tape.backward(&[(term.logprob, Value::scalar(1.0))])?;
        let score = adj.get(s.node_var(theta)).map_or(0.0, |g| g.data()[0]);
        let q = all_downstream_costs(graph, &c.trace)?[node.index()];
        num += c.weight * q * score * score;
        den += c.weight * score * score;
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}
