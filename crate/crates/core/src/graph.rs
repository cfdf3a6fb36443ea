//! Stochastic computation graph data model.
//!
//! Nodes are built with a [`GraphBuilder`] and validated by
//! [`GraphBuilder::freeze`], which caches a topological order and the
//! [`InfluenceIndex`]. A frozen [`Graph`] is immutable.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dist::DistributionSpec;
use crate::error::{Error, Result};
use crate::influence::InfluenceIndex;
use crate::ops::{self, OpSpec};
use crate::tensor::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Input,
    Deterministic(OpSpec),
    Stochastic(DistributionSpec),
    /// Deterministic, scalar-valued, and summed into the objective.
    Cost(OpSpec),
}

impl NodeKind {
    pub fn is_input(&self) -> bool {
        matches!(self, NodeKind::Input)
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, NodeKind::Stochastic(_))
    }

    pub fn is_cost(&self) -> bool {
        matches!(self, NodeKind::Cost(_))
    }

    /// Deterministic in the graph-theoretic sense: plain deterministic nodes and costs.
    pub fn is_deterministic(&self) -> bool {
        matches!(self, NodeKind::Deterministic(_) | NodeKind::Cost(_))
    }

    pub fn op(&self) -> Option<&OpSpec> {
        match self {
            NodeKind::Deterministic(op) | NodeKind::Cost(op) => Some(op),
            _ => None,
        }
    }

    pub fn dist(&self) -> Option<&DistributionSpec> {
        match self {
            NodeKind::Stochastic(d) => Some(d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub parents: Vec<NodeId>,
    pub shape: Shape,
    pub name: Option<String>,
}

#[derive(Debug, Clone)]
struct PendingNode {
    kind: NodeKind,
    parents: Vec<NodeId>,
    shape: Option<Shape>,
    name: Option<String>,
}

/// Mutable graph under construction. Parent references may point forward;
/// everything is checked at [`freeze`](GraphBuilder::freeze).
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    nodes: Vec<PendingNode>,
    params: Vec<NodeId>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Appends a node without validation. `shape` is required for inputs
    /// (defaults to scalar) and optional elsewhere, where it is checked
    /// against the inferred shape.
    pub fn add_node(&mut self, kind: NodeKind, parents: Vec<NodeId>, shape: Option<Shape>, name: Option<String>) -> NodeId {
        self.nodes.push(PendingNode { kind, parents, shape, name });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, name: &str, shape: &[usize]) -> NodeId {
        self.add_node(NodeKind::Input, vec![], Some(shape.to_vec()), Some(name.to_string()))
    }

    /// An input designated as a differentiation target.
    pub fn param(&mut self, name: &str, shape: &[usize]) -> NodeId {
        let id = self.input(name, shape);
        self.params.push(id);
        id
    }

    pub fn mark_param(&mut self, id: NodeId) {
        if !self.params.contains(&id) {
            self.params.push(id);
        }
    }

    pub fn det(&mut self, op: OpSpec, parents: &[NodeId]) -> NodeId {
        self.add_node(NodeKind::Deterministic(op), parents.to_vec(), None, None)
    }

    pub fn stoch(&mut self, dist: DistributionSpec, parents: &[NodeId]) -> NodeId {
        self.add_node(NodeKind::Stochastic(dist), parents.to_vec(), None, None)
    }

    pub fn cost(&mut self, op: OpSpec, parents: &[NodeId]) -> NodeId {
        self.add_node(NodeKind::Cost(op), parents.to_vec(), None, None)
    }

    /// Wraps any scalar node (e.g. a stochastic one) in an identity cost.
    pub fn as_cost(&mut self, node: NodeId) -> NodeId {
        self.cost(ops::identity(), &[node])
    }

    pub fn set_name(&mut self, id: NodeId, name: &str) {
        if let Some(n) = self.nodes.get_mut(id.0) {
            n.name = Some(name.to_string());
        }
    }

    /// Replaces the definition of an existing node, keeping its id.
    pub(crate) fn redefine(&mut self, id: NodeId, kind: NodeKind, parents: Vec<NodeId>) {
        let node = &mut self.nodes[id.0];
        node.kind = kind;
        node.parents = parents;
        node.shape = None;
    }

    pub fn freeze(self) -> Result<Graph> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(p) = node.parents.iter().find(|p| p.0 >= n) {
                return Err(Error::UnknownNode(p.0));
            }
            if node.kind.is_input() && !node.parents.is_empty() {
                return Err(Error::InputWithParents(NodeId(i)));
            }
        }
        for p in &self.params {
            if p.0 >= n {
                return Err(Error::UnknownNode(p.0));
            }
            if !self.nodes[p.0].kind.is_input() {
                return Err(Error::NotAParam(*p));
            }
        }

        let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for (i, node) in self.nodes.iter().enumerate() {
            let mut seen = BTreeSet::new();
            for p in &node.parents {
                if seen.insert(*p) {
                    children[p.0].push(NodeId(i));
                }
            }
        }
        let topo = topological_order(&self.nodes, &children)?;

        let mut shapes: Vec<Option<Shape>> = vec![None; n];
        for &id in &topo {
            let node = &self.nodes[id.0];
            let parent_shapes: Vec<&[usize]> =
                node.parents.iter().map(|p| shapes[p.0].as_deref().expect("parents precede children")).collect();
            let inferred = match &node.kind {
                NodeKind::Input => node.shape.clone().unwrap_or_default(),
                NodeKind::Deterministic(op) | NodeKind::Cost(op) => op
                    .output_shape(&parent_shapes)
                    .map_err(|e| Error::Shape(format!("node {id} ({}): {e}", op.name())))?,
                NodeKind::Stochastic(dist) => dist
                    .output_shape(&parent_shapes)
                    .map_err(|e| Error::Shape(format!("node {id} ({}): {e}", dist.name())))?,
            };
            if let Some(declared) = &node.shape {
                if *declared != inferred {
                    return Err(Error::Shape(format!(
                        "node {id}: declared shape {declared:?} but inferred {inferred:?}"
                    )));
                }
            }
            if node.kind.is_cost() && !inferred.is_empty() {
                return Err(Error::CostShape(id, inferred));
            }
            shapes[id.0] = Some(inferred);
        }

        let nodes: Vec<Node> = self
            .nodes
            .into_iter()
            .zip(shapes)
            .enumerate()
            .map(|(i, (p, shape))| Node {
                id: NodeId(i),
                kind: p.kind,
                parents: p.parents,
                shape: shape.expect("every node shaped"),
                name: p.name,
            })
            .collect();
        let index = InfluenceIndex::compute(&nodes, &children, &topo, &self.params);
        Ok(Graph { nodes, params: self.params, topo, children, index })
    }
}

/// Kahn's algorithm with smallest-id-first tie breaking, so the order is a
/// pure function of the edge set. On failure reports a back edge found by DFS.
fn topological_order(nodes: &[PendingNode], children: &[Vec<NodeId>]) -> Result<Vec<NodeId>> {
    let n = nodes.len();
    let mut indegree: Vec<usize> = vec![0; n];
    for c in children.iter().flatten() {
        indegree[c.0] += 1;
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(NodeId(i));
        for c in &children[i] {
            indegree[c.0] -= 1;
            if indegree[c.0] == 0 {
                ready.insert(c.0);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }

    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    fn dfs(v: usize, children: &[Vec<NodeId>], state: &mut [u8]) -> Option<(usize, usize)> {
        state[v] = 1;
        for c in &children[v] {
            match state[c.0] {
                1 => return Some((v, c.0)),
                0 => {
                    if let Some(edge) = dfs(c.0, children, state) {
                        return Some(edge);
                    }
                }
                _ => {}
            }
        }
        state[v] = 2;
        None
    }
    for start in 0..n {
        if indegree[start] > 0 && state[start] == 0 {
            if let Some((from, to)) = dfs(start, children, &mut state) {
                return Err(Error::Cycle { from: NodeId(from), to: NodeId(to) });
            }
        }
    }
    unreachable!("Kahn's algorithm stalled without a cycle")
}

#[derive(Debug, Clone)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
    topo: Vec<NodeId>,
    children: Vec<Vec<NodeId>>,
    index: InfluenceIndex,
}

impl Graph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn try_node(&self, id: NodeId) -> Result<&Node> {
        self.nodes.get(id.0).ok_or(Error::UnknownNode(id.0))
    }

    pub fn params(&self) -> &[NodeId] {
        &self.params
    }

    pub fn is_param(&self, id: NodeId) -> bool {
        self.params.contains(&id)
    }

    pub fn topo_order(&self) -> &[NodeId] {
        &self.topo
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id.0]
    }

    pub fn index(&self) -> &InfluenceIndex {
        &self.index
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.name.as_deref() == Some(name)).map(|n| n.id)
    }

    /// Resolves a node by name or numeric id.
    pub fn resolve(&self, key: &str) -> Result<NodeId> {
        if let Some(id) = self.find(key) {
            return Ok(id);
        }
        match key.parse::<usize>() {
            Ok(i) if i < self.len() => Ok(NodeId(i)),
            Ok(i) => Err(Error::UnknownNode(i)),
            Err(_) => Err(Error::InvalidArgument(format!("no node named '{key}'"))),
        }
    }

    pub fn label(&self, id: NodeId) -> String {
        match &self.nodes[id.0].name {
            Some(name) => format!("{name}#{id}"),
            None => format!("#{id}"),
        }
    }

    pub fn inputs(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| n.kind.is_input()).map(|n| n.id)
    }

    pub fn stochastic_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| n.kind.is_stochastic()).map(|n| n.id)
    }

    pub fn costs(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| n.kind.is_cost()).map(|n| n.id)
    }

    /// Back to a builder with identical ids, kinds, parents and params.
    pub fn thaw(&self) -> GraphBuilder {
        GraphBuilder {
            nodes: self
                .nodes
                .iter()
                .map(|n| PendingNode {
                    kind: n.kind.clone(),
                    parents: n.parents.clone(),
                    shape: n.kind.is_input().then(|| n.shape.clone()),
                    name: n.name.clone(),
                })
                .collect(),
            params: self.params.clone(),
        }
    }

    pub(crate) fn check_param(&self, theta: NodeId) -> Result<()> {
        self.try_node(theta)?;
        if self.is_param(theta) {
            Ok(())
        } else {
            Err(Error::NotAParam(theta))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::Builtin;

    #[test]
    fn single_input_is_valid() {
        let mut b = GraphBuilder::new();
        let x = b.input("x", &[]);
        let g = b.freeze().unwrap();
        assert_eq!(g.topo_order(), &[x]);
        assert!(g.index().influenced_by(x).is_empty());
    }

    #[test]
    fn two_cycle_is_rejected() {
        let mut b = GraphBuilder::new();
        let a = b.add_node(NodeKind::Deterministic(Builtin::Neg.spec()), vec![NodeId(1)], None, None);
        let c = b.add_node(NodeKind::Deterministic(Builtin::Neg.spec()), vec![a], None, None);
        match b.freeze() {
            Err(Error::Cycle { from, to }) => {
                assert!((from, to) == (a, c) || (from, to) == (c, a));
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn cost_must_be_scalar() {
        let mut b = GraphBuilder::new();
        let x = b.input("x", &[3]);
        b.cost(Builtin::Exp.spec(), &[x]);
        assert!(matches!(b.freeze(), Err(Error::CostShape(_, _))));
    }

    #[test]
    fn shape_mismatch_names_node() {
        let mut b = GraphBuilder::new();
        let x = b.input("x", &[3]);
        let y = b.input("y", &[2]);
        b.det(Builtin::Add.spec(), &[x, y]);
        let err = b.freeze().unwrap_err().to_string();
        assert!(err.contains("node 2"), "{err}");
    }

    #[test]
    fn dangling_parent() {
        let mut b = GraphBuilder::new();
        b.det(Builtin::Neg.spec(), &[NodeId(7)]);
        assert!(matches!(b.freeze(), Err(Error::UnknownNode(7))));
    }

    #[test]
    fn freeze_is_idempotent() {
        let mut b = GraphBuilder::new();
        let t = b.param("t", &[]);
        let x = b.det(Builtin::Exp.spec(), &[t]);
        let y = b.det(Builtin::Neg.spec(), &[t]);
        b.cost(Builtin::Mul.spec(), &[x, y]);
        let g1 = b.freeze().unwrap();
        let g2 = g1.thaw().freeze().unwrap();
        assert_eq!(g1.topo_order(), g2.topo_order());
        assert_eq!(g1.index(), g2.index());
    }
}
