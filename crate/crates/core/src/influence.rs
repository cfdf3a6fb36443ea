//! Influence relations and the differentiability requirements built on them.
//!
//! `v ≺ w` holds when a directed path leads from `v` to `w`; `v ≺ᴰ w` when
//! such a path exists whose intermediate nodes are all deterministic. Both
//! relations are closed once at freeze time into bitsets.

use fixedbitset::FixedBitSet;
use serde::Serialize;

use crate::error::Result;
use crate::graph::{Graph, Node, NodeId, NodeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Influence {
    None,
    Influences,
    DetInfluences,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfluenceIndex {
    influences: Vec<FixedBitSet>,
    det_influences: Vec<FixedBitSet>,
    deps: Vec<FixedBitSet>,
    /// Nodes deterministically influenced by at least one param.
    param_live: FixedBitSet,
}

impl InfluenceIndex {
    pub(crate) fn compute(nodes: &[Node], children: &[Vec<NodeId>], topo: &[NodeId], params: &[NodeId]) -> Self {
        let n = nodes.len();
        let mut influences = vec![FixedBitSet::with_capacity(n); n];
        let mut det_influences = vec![FixedBitSet::with_capacity(n); n];
        for &v in topo.iter().rev() {
            let mut inf = FixedBitSet::with_capacity(n);
            let mut det = FixedBitSet::with_capacity(n);
            for &c in &children[v.0] {
                inf.insert(c.0);
                inf.union_with(&influences[c.0]);
                det.insert(c.0);
                if nodes[c.0].kind.is_deterministic() {
                    det.union_with(&det_influences[c.0]);
                }
            }
            influences[v.0] = inf;
            det_influences[v.0] = det;
        }

        let mut deps = vec![FixedBitSet::with_capacity(n); n];
        for w in nodes.iter().filter(|w| matches!(w.kind, NodeKind::Input | NodeKind::Stochastic(_))) {
            for v in det_influences[w.id.0].ones() {
                deps[v].insert(w.id.0);
            }
        }

        let mut param_live = FixedBitSet::with_capacity(n);
        for p in params {
            param_live.union_with(&det_influences[p.0]);
        }
        Self { influences, det_influences, deps, param_live }
    }

    pub fn influences(&self, v: NodeId, w: NodeId) -> bool {
        self.influences[v.0].contains(w.0)
    }

    pub fn det_influences(&self, v: NodeId, w: NodeId) -> bool {
        self.det_influences[v.0].contains(w.0)
    }

    pub fn relation(&self, v: NodeId, w: NodeId) -> Influence {
        if self.det_influences(v, w) {
            Influence::DetInfluences
        } else if self.influences(v, w) {
            Influence::Influences
        } else {
            Influence::None
        }
    }

    /// `{w : v ≺ w}`
    pub fn influenced_by(&self, v: NodeId) -> Vec<NodeId> {
        self.influences[v.0].ones().map(NodeId).collect()
    }

    /// `{w : v ≺ᴰ w}`
    pub fn det_influenced_by(&self, v: NodeId) -> Vec<NodeId> {
        self.det_influences[v.0].ones().map(NodeId).collect()
    }

    /// `DEPS(v)`: input and stochastic nodes that deterministically influence `v`.
    pub fn deps(&self, v: NodeId) -> Vec<NodeId> {
        self.deps[v.0].ones().map(NodeId).collect()
    }

    /// Nodes other than `v` that `v` does not influence; the admissible
    /// inputs of a baseline for `v`.
    pub fn noninfluenced(&self, v: NodeId) -> Vec<NodeId> {
        let n = self.influences.len();
        (0..n).filter(|&w| w != v.0 && !self.influences[v.0].contains(w)).map(NodeId).collect()
    }

    pub fn is_noninfluenced(&self, v: NodeId, w: NodeId) -> bool {
        v != w && !self.influences(v, w)
    }

    /// Whether some param deterministically influences `w`.
    pub fn param_live(&self, w: NodeId) -> bool {
        self.param_live.contains(w.0)
    }
}

impl Graph {
    pub fn influence(&self, v: NodeId, w: NodeId) -> Result<Influence> {
        self.try_node(v)?;
        self.try_node(w)?;
        Ok(self.index().relation(v, w))
    }

    /// `θ = v` or `θ ≺ᴰ v`: the node carries a derivative with respect to `θ`.
    pub fn carries_derivative(&self, theta: NodeId, v: NodeId) -> bool {
        v == theta || self.index().det_influences(theta, v)
    }

    /// Checks that every edge along a deterministic path out of `theta` has a
    /// registered derivative.
    pub fn validate_differentiability(&self, theta: NodeId) -> Result<DifferentiabilityReport> {
        self.check_param(theta)?;
        let mut violations = Vec::new();
        for w in self.nodes() {
            if !self.index().det_influences(theta, w.id) {
                continue;
            }
            for (arg, &v) in w.parents.iter().enumerate() {
                if !self.carries_derivative(theta, v) {
                    continue;
                }
                let (ok, what) = match &w.kind {
                    NodeKind::Deterministic(op) | NodeKind::Cost(op) => (op.differentiable(arg), op.name()),
                    NodeKind::Stochastic(d) => (d.param_differentiable(arg), d.name()),
                    NodeKind::Input => (true, String::new()),
                };
                if !ok {
                    violations.push(Violation { from: v, to: w.id, arg, what });
                }
            }
        }
        Ok(DifferentiabilityReport { theta, violations })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub from: NodeId,
    pub to: NodeId,
    /// Argument position of `from` among the parents of `to`.
    pub arg: usize,
    /// Op or distribution name lacking the derivative.
    pub what: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifferentiabilityReport {
    pub theta: NodeId,
    pub violations: Vec<Violation>,
}

impl DifferentiabilityReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.passes() {
            Ok(())
        } else {
            Err(crate::Error::ConditionViolated { theta: self.theta, violations: self.violations.len() })
        }
    }
}
