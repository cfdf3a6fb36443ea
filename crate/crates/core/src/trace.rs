//! Sampled traces and deterministic forward evaluation.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId, NodeKind};
use crate::rng::node_stream;
use crate::tape::{Tape, Var};
use crate::tensor::Value;

/// Values for input nodes, keyed by node.
pub type Inputs = BTreeMap<NodeId, Value>;

/// One joint assignment of node values, with the log-probability of every
/// stochastic node at its sampled value.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    values: Vec<Option<Value>>,
    logprobs: Vec<Option<f64>>,
    pub seed: u64,
    pub sample_index: u64,
}

impl Trace {
    /// A trace with no values, to be filled with [`set_value`](Trace::set_value).
    pub fn empty(graph: &Graph) -> Self {
        Self { values: vec![None; graph.len()], logprobs: vec![None; graph.len()], seed: 0, sample_index: 0 }
    }

    pub(crate) fn from_parts(values: Vec<Option<Value>>, logprobs: Vec<Option<f64>>) -> Self {
        Self { values, logprobs, seed: 0, sample_index: 0 }
    }

    pub fn value(&self, id: NodeId) -> Result<&Value> {
        self.values.get(id.index()).and_then(|v| v.as_ref()).ok_or(Error::IncompleteTrace(id))
    }

    pub fn set_value(&mut self, id: NodeId, value: Value) {
        self.values[id.index()] = Some(value);
    }

    pub fn logprob(&self, id: NodeId) -> Option<f64> {
        self.logprobs.get(id.index()).copied().flatten()
    }

    pub fn logprobs(&self) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.logprobs.iter().enumerate().filter_map(|(i, lp)| lp.map(|lp| (NodeId(i), lp)))
    }

    /// Sum of stochastic log-probabilities: the log-density of the joint sample.
    pub fn joint_logprob(&self) -> f64 {
        self.logprobs().map(|(_, lp)| lp).sum()
    }

    /// Evaluates every node in topological order. Stochastic values come from
    /// `stochastic` when present there, otherwise from `draw`.
    fn build(
        graph: &Graph,
        inputs: &Inputs,
        stochastic: &BTreeMap<NodeId, Value>,
        mut draw: impl FnMut(NodeId, &crate::dist::DistributionSpec, &[&Value]) -> Result<Value>,
    ) -> Result<Self> {
        let mut trace = Trace::empty(graph);
        for &id in graph.topo_order() {
            let node = graph.node(id);
            let value = match &node.kind {
                NodeKind::Input => {
                    let v = inputs
                        .get(&id)
                        .ok_or_else(|| Error::InvalidArgument(format!("no value for input {}", graph.label(id))))?;
                    if v.shape() != &node.shape[..] {
                        return Err(Error::Shape(format!(
                            "input {} expects shape {:?}, got {:?}",
                            graph.label(id),
                            node.shape,
                            v.shape()
                        )));
                    }
                    v.clone()
                }
                NodeKind::Deterministic(op) | NodeKind::Cost(op) => {
                    let args: Vec<&Value> = node.parents.iter().map(|&p| trace.value(p)).collect::<Result<_>>()?;
                    let v = op.forward(&args)?;
                    if !v.is_finite() {
                        return Err(Error::NonFinite(format!("{} at node {}", op.name(), graph.label(id))));
                    }
                    v
                }
                NodeKind::Stochastic(dist) => {
                    let args: Vec<&Value> = node.parents.iter().map(|&p| trace.value(p)).collect::<Result<_>>()?;
                    let v = match stochastic.get(&id) {
                        Some(v) => v.clone(),
                        None => draw(id, dist, &args)?,
                    };
                    trace.logprobs[id.index()] = Some(dist.log_prob(&args, &v)?);
                    v
                }
            };
            trace.values[id.index()] = Some(value);
        }
        Ok(trace)
    }

    /// Completes a trace from fixed values for every stochastic node.
    pub fn from_assignment(graph: &Graph, inputs: &Inputs, stochastic: &BTreeMap<NodeId, Value>) -> Result<Self> {
        Self::build(graph, inputs, stochastic, |id, _, _| Err(Error::IncompleteTrace(id)))
    }
}

/// Draws one joint sample. Bitwise reproducible for a given `(seed, sample_index)`.
pub fn sample_trace(graph: &Graph, inputs: &Inputs, seed: u64, sample_index: u64) -> Result<Trace> {
    let mut trace = Trace::build(graph, inputs, &BTreeMap::new(), |id, dist, args| {
        let mut rng = node_stream(seed, sample_index, id);
        dist.sample(args, &mut rng)
    })?;
    trace.seed = seed;
    trace.sample_index = sample_index;
    Ok(trace)
}

/// `Q̂_v`: the sampled cost values of every cost node that `v` influences.
pub fn downstream_costs(graph: &Graph, trace: &Trace, v: NodeId) -> Result<f64> {
    graph.try_node(v)?;
    graph
        .costs()
        .filter(|&c| graph.index().influences(v, c))
        .map(|c| trace.value(c).map(Value::item))
        .sum()
}

/// `Q̂_v` for every node at once.
pub fn all_downstream_costs(graph: &Graph, trace: &Trace) -> Result<Vec<f64>> {
    let costs: Vec<(NodeId, f64)> =
        graph.costs().map(|c| Ok((c, trace.value(c)?.item()))).collect::<Result<_>>()?;
    Ok(graph
        .nodes()
        .iter()
        .map(|n| costs.iter().filter(|(c, _)| graph.index().influences(n.id, *c)).map(|(_, x)| x).sum())
        .collect())
}

/// A graph evaluated onto a [`Tape`], every node a tracked slot.
#[derive(Debug, Clone)]
pub struct GraphTape {
    pub tape: Tape,
    vars: Vec<Var>,
}

impl GraphTape {
    pub fn var(&self, id: NodeId) -> Var {
        self.vars[id.index()]
    }

    pub fn value(&self, id: NodeId) -> &Value {
        self.tape.value(self.vars[id.index()])
    }

    /// Adjoint of `sum <seed, node>` for every node; pure reverse
    /// accumulation, stochastic nodes are plain leaves.
    pub fn backward(&self, seeds: &BTreeMap<NodeId, Value>) -> Result<BTreeMap<NodeId, Value>> {
        let seeds: Vec<(Var, Value)> = seeds.iter().map(|(id, s)| (self.var(*id), s.clone())).collect();
        let adj = self.tape.backward(&seeds)?;
        Ok(self
            .vars
            .iter()
            .enumerate()
            .map(|(i, &v)| (NodeId(i), adj.get_or_zeros(v, self.tape.value(v))))
            .collect())
    }
}

/// Evaluates deterministic and cost nodes from inputs and given stochastic values.
pub fn forward_eval(graph: &Graph, inputs: &Inputs, stochastic: &BTreeMap<NodeId, Value>) -> Result<GraphTape> {
    let mut tape = Tape::new();
    let mut vars: Vec<Option<Var>> = vec![None; graph.len()];
    for &id in graph.topo_order() {
        let node = graph.node(id);
        let var = match &node.kind {
            NodeKind::Input => {
                let v = inputs
                    .get(&id)
                    .ok_or_else(|| Error::InvalidArgument(format!("no value for input {}", graph.label(id))))?;
                tape.variable(v.clone())
            }
            NodeKind::Stochastic(_) => tape.variable(stochastic.get(&id).cloned().ok_or(Error::IncompleteTrace(id))?),
            NodeKind::Deterministic(op) | NodeKind::Cost(op) => {
                let args: Vec<Var> = node.parents.iter().map(|p| vars[p.index()].expect("topological")).collect();
                tape.apply(op, &args)?
            }
        };
        vars[id.index()] = Some(var);
    }
    Ok(GraphTape { tape, vars: vars.into_iter().map(|v| v.expect("all nodes")).collect() })
}

/// [`forward_eval`] with stochastic values read from a trace.
pub fn forward_eval_trace(graph: &Graph, inputs: &Inputs, trace: &Trace) -> Result<GraphTape> {
    let stochastic = graph.stochastic_nodes().map(|s| Ok((s, trace.value(s)?.clone()))).collect::<Result<_>>()?;
    forward_eval(graph, inputs, &stochastic)
}
