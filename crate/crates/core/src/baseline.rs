//! Per-node baselines subtracted from `Q̂_v` in the score terms.
//!
//! A baseline for stochastic node `v` may read only nodes that `v` does not
//! influence; under that restriction the estimator mean is unchanged.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::Value;
use crate::trace::Trace;

pub type BaselineFnPtr = Arc<dyn Fn(&[&Value]) -> f64 + Send + Sync>;

/// A baseline computed from declared input nodes of the trace.
#[derive(Clone)]
pub struct BaselineFn {
    inputs: Vec<NodeId>,
    f: BaselineFnPtr,
}

impl BaselineFn {
    pub fn inputs(&self) -> &[NodeId] {
        &self.inputs
    }
}

impl fmt::Debug for BaselineFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BaselineFn").field("inputs", &self.inputs).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum Baseline {
    None,
    Constant(f64),
    /// `b <- decay * b + (1 - decay) * mean(Q̂_v)` after each estimate; starts at 0.
    MovingAverage { decay: f64, value: f64 },
    Function(BaselineFn),
}

impl Baseline {
    pub fn moving_average(decay: f64) -> Self {
        Baseline::MovingAverage { decay, value: 0.0 }
    }

    pub fn tag(&self) -> String {
        match self {
            Baseline::None => "none".into(),
            Baseline::Constant(c) => format!("const:{c}"),
            Baseline::MovingAverage { decay, .. } => format!("avg:{decay}"),
            Baseline::Function(_) => "function".into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BaselineSpec {
    per_node: BTreeMap<NodeId, Baseline>,
}

impl BaselineSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// The same baseline kind on every stochastic node. Function baselines
    /// must be attached per node with [`with_function`](Self::with_function).
    pub fn uniform(graph: &Graph, baseline: Baseline) -> Result<Self> {
        if matches!(baseline, Baseline::Function(_)) {
            return Err(Error::InvalidArgument("function baselines are attached per node".into()));
        }
        Ok(Self { per_node: graph.stochastic_nodes().map(|s| (s, baseline.clone())).collect() })
    }

    pub fn set(&mut self, node: NodeId, baseline: Baseline) -> &mut Self {
        self.per_node.insert(node, baseline);
        self
    }

    /// Attaches `f(values of inputs)` as the baseline of `node`, checking that
    /// every input lies outside the set of nodes `node` influences.
    pub fn with_function(
        &mut self,
        graph: &Graph,
        node: NodeId,
        inputs: &[NodeId],
        f: impl Fn(&[&Value]) -> f64 + Send + Sync + 'static,
    ) -> Result<&mut Self> {
        let baseline = Baseline::Function(BaselineFn { inputs: inputs.to_vec(), f: Arc::new(f) });
        check_scope(graph, node, &baseline)?;
        self.per_node.insert(node, baseline);
        Ok(self)
    }

    pub fn get(&self, node: NodeId) -> &Baseline {
        self.per_node.get(&node).unwrap_or(&Baseline::None)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Baseline)> {
        self.per_node.iter().map(|(k, v)| (*k, v))
    }

    pub fn validate(&self, graph: &Graph) -> Result<()> {
        self.per_node.iter().try_for_each(|(&node, b)| check_scope(graph, node, b))
    }

    /// `b_v` for one trace.
    pub fn value(&self, node: NodeId, trace: &Trace) -> Result<f64> {
        Ok(match self.get(node) {
            Baseline::None => 0.0,
            Baseline::Constant(c) => *c,
            Baseline::MovingAverage { value, .. } => *value,
            Baseline::Function(bf) => {
                let args: Vec<&Value> = bf.inputs.iter().map(|&i| trace.value(i)).collect::<Result<_>>()?;
                (bf.f)(&args)
            }
        })
    }

    /// Folds one estimate's mean `Q̂_v` per node into the moving averages.
    pub fn update(&mut self, mean_q: &BTreeMap<NodeId, f64>) {
        for (node, b) in self.per_node.iter_mut() {
            if let (Baseline::MovingAverage { decay, value }, Some(q)) = (b, mean_q.get(node)) {
                *value = *decay * *value + (1.0 - *decay) * q;
            }
        }
    }

    pub fn has_moving_average(&self) -> bool {
        self.per_node.values().any(|b| matches!(b, Baseline::MovingAverage { .. }))
    }

    pub fn tag(&self) -> String {
        let mut tags: Vec<String> = self.per_node.values().map(Baseline::tag).collect();
        tags.sort();
        tags.dedup();
        match tags.len() {
            0 => "none".into(),
            1 => tags.remove(0),
            _ => "mixed".into(),
        }
    }
}

fn check_scope(graph: &Graph, node: NodeId, baseline: &Baseline) -> Result<()> {
    let n = graph.try_node(node)?;
    if !n.kind.is_stochastic() {
        return Err(Error::InvalidArgument(format!("baseline attached to non-stochastic node {node}")));
    }
    if let Baseline::Function(bf) = baseline {
        for &input in &bf.inputs {
            graph.try_node(input)?;
            if !graph.index().is_noninfluenced(node, input) {
                return Err(Error::BaselineScope { node, input });
            }
        }
    }
    Ok(())
}
