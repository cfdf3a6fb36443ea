//! JSON graph files.
//!
//! ```json
//! {"nodes": [{"id": 0, "kind": "input", "parents": [], "shape": [], "value": 0.5},
//!            {"id": 1, "kind": "stoch", "dist": "bernoulli_logit", "parents": [0], "shape": []},
//!            {"id": 2, "kind": "cost", "op": "square", "parents": [1], "shape": []}],
//!  "params": [0]}
//! ```
//!
//! Ids must be `0..N` in any order. Optional per-node fields: `name`, `value`
//! (default value of an input, zeros otherwise) and `table` (the
//! `{"radices": [..], "rows": [[..]]}` of a `categorical_table` node).
//! `shape` is required for inputs and `std_normal` nodes and checked
//! against the inferred shape elsewhere.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dist::{DistributionSpec, TableDist};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBuilder, NodeId, NodeKind};
use crate::ops::parse_op;
use crate::tensor::{Shape, Value};
use crate::trace::Inputs;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeRecord {
    id: usize,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    op: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dist: Option<String>,
    #[serde(default)]
    parents: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shape: Option<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<TableDist>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    nodes: Vec<NodeRecord>,
    #[serde(default)]
    params: Vec<usize>,
}

pub fn parse_dist(name: &str, shape: Option<&Shape>, table: Option<&TableDist>) -> Result<DistributionSpec> {
    Ok(match name {
        "bernoulli" => DistributionSpec::Bernoulli,
        "bernoulli_logit" => DistributionSpec::BernoulliLogit,
        "categorical" => DistributionSpec::Categorical,
        "categorical_logits" => DistributionSpec::CategoricalLogits,
        "gaussian" => DistributionSpec::Gaussian,
        "gaussian_meanlogsigma" => DistributionSpec::GaussianLogSigma,
        "std_normal" => DistributionSpec::StandardNormal(
            shape.cloned().ok_or_else(|| Error::InvalidArgument("std_normal needs a shape".into()))?,
        ),
        "categorical_table" => DistributionSpec::CategoricalTable(
            table
                .map(|t| TableDist::new(t.radices().to_vec(), t.rows().to_vec()))
                .ok_or_else(|| Error::InvalidArgument("categorical_table needs a table".into()))??,
        ),
        _ => return Err(Error::UnknownDist(name.to_string())),
    })
}

/// Parses a graph and the default input values it declares.
pub fn graph_from_json(text: &str) -> Result<(Graph, Inputs)> {
    let record: GraphRecord = serde_json::from_str(text)?;
    let n = record.nodes.len();
    let mut slots: Vec<Option<&NodeRecord>> = vec![None; n];
    for node in &record.nodes {
        let load_err = |msg: String| Error::GraphLoad { node: node.id, msg };
        if node.id >= n {
            return Err(load_err(format!("id out of range for {n} nodes")));
        }
        if slots[node.id].replace(node).is_some() {
            return Err(load_err("duplicate id".into()));
        }
    }

    let mut b = GraphBuilder::new();
    let mut defaults = Vec::new();
    for (id, slot) in slots.iter().enumerate() {
        let node = slot.expect("dense ids");
        let load_err = |e: Error| Error::GraphLoad { node: id, msg: e.to_string() };
        let kind = match node.kind.as_str() {
            "input" => NodeKind::Input,
            "det" | "cost" => {
                let name = node.op.as_deref().ok_or_else(|| load_err(Error::InvalidArgument("missing op".into())))?;
                let op = parse_op(name).map_err(load_err)?;
                if node.kind == "det" {
                    NodeKind::Deterministic(op)
                } else {
                    NodeKind::Cost(op)
                }
            }
            "stoch" => {
                let name = node.dist.as_deref().ok_or_else(|| load_err(Error::InvalidArgument("missing dist".into())))?;
                NodeKind::Stochastic(parse_dist(name, node.shape.as_ref(), node.table.as_ref()).map_err(load_err)?)
            }
            other => return Err(load_err(Error::InvalidArgument(format!("unknown kind {other:?}")))),
        };
        if kind.is_input() && node.shape.is_none() {
            return Err(load_err(Error::InvalidArgument("input needs a shape".into())));
        }
        if let Some(value) = &node.value {
            if !kind.is_input() {
                return Err(load_err(Error::InvalidArgument("only inputs take a value".into())));
            }
            let v = Value::from_json(value).map_err(load_err)?;
            if v.shape() != &node.shape.as_ref().expect("checked")[..] {
                return Err(load_err(Error::Shape(format!("value shape {:?} differs from declared shape", v.shape()))));
            }
            defaults.push((NodeId(id), v));
        } else if kind.is_input() {
            defaults.push((NodeId(id), Value::zeros(node.shape.as_ref().expect("checked"))));
        }
        let parents = node.parents.iter().map(|&p| NodeId(p)).collect();
        b.add_node(kind, parents, node.shape.clone(), node.name.clone());
    }
    for &p in &record.params {
        if p >= n {
            return Err(Error::GraphLoad { node: p, msg: "param id out of range".into() });
        }
        b.mark_param(NodeId(p));
    }
    let graph = b.freeze()?;
    Ok((graph, defaults.into_iter().collect()))
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<(Graph, Inputs)> {
    graph_from_json(&std::fs::read_to_string(path)?)
}

/// Serializes a graph, with `inputs` as the default values. Custom
/// operators serialize by name and load only if that name parses.
pub fn graph_to_json(graph: &Graph, inputs: &Inputs) -> Result<String> {
    let nodes: Vec<NodeRecord> = graph
        .nodes()
        .iter()
        .map(|n| {
            let (kind, op, dist, table) = match &n.kind {
                NodeKind::Input => ("input", None, None, None),
                NodeKind::Deterministic(op) => ("det", Some(op.name()), None, None),
                NodeKind::Cost(op) => ("cost", Some(op.name()), None, None),
                NodeKind::Stochastic(d) => {
                    let table = match d {
                        DistributionSpec::CategoricalTable(t) => Some(t.clone()),
                        _ => None,
                    };
                    ("stoch", None, Some(d.name()), table)
                }
            };
            NodeRecord {
                id: n.id.index(),
                kind: kind.into(),
                op,
                dist,
                parents: n.parents.iter().map(|p| p.index()).collect(),
                shape: Some(n.shape.clone()),
                name: n.name.clone(),
                value: inputs.get(&n.id).map(Value::to_json),
                table,
            }
        })
        .collect();
    let record = GraphRecord { nodes, params: graph.params().iter().map(|p| p.index()).collect() };
    Ok(serde_json::to_string_pretty(&record)?)
}

/// Reads a direction vector for Hessian-vector products: a JSON number or
/// nested array.
pub fn load_value(path: impl AsRef<Path>) -> Result<Value> {
    let text = std::fs::read_to_string(path)?;
    Value::from_json(&serde_json::from_str(&text)?)
}

/// `{"<node>": value, ...}` keyed by id or name; overrides default inputs.
pub fn inputs_from_json(graph: &Graph, text: &str) -> Result<Inputs> {
    let map: serde_json::Map<String, serde_json::Value> = serde_json::from_str(text)?;
    map.iter().map(|(k, v)| Ok((graph.resolve(k)?, Value::from_json(v)?))).collect()
}

#[cfg(test)]
mod tests {
    use serde_json::json;

    use super::*;

    fn example_json() -> serde_json::Value {
        json!({
            "nodes": [
                {"id": 0, "kind": "input", "parents": [], "shape": [], "value": 0.5},
                {"id": 1, "kind": "stoch", "dist": "bernoulli_logit", "parents": [0], "shape": []},
                {"id": 2, "kind": "cost", "op": "square", "parents": [1], "shape": []}
            ],
            "params": [0]
        })
    }

    #[test]
    fn round_trip() {
        let (g, inputs) = graph_from_json(&example_json().to_string()).unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!(g.params(), &[NodeId(0)]);
        assert_eq!(inputs[&NodeId(0)].item(), 0.5);
        let text = graph_to_json(&g, &inputs).unwrap();
        let (g2, inputs2) = graph_from_json(&text).unwrap();
        assert_eq!(g2.topo_order(), g.topo_order());
        assert_eq!(inputs2, inputs);
        assert_eq!(g2.index(), g.index());
    }

    #[test]
    fn unknown_names_fail_at_load_and_name_the_node() {
        let mut doc = example_json();
        doc["nodes"][2]["op"] = json!("frobnicate");
        match graph_from_json(&doc.to_string()) {
            Err(Error::GraphLoad { node: 2, msg }) => assert!(msg.contains("frobnicate")),
            other => panic!("unexpected {other:?}"),
        }
        let mut doc = example_json();
        doc["nodes"][1]["dist"] = json!("poisson");
        assert!(matches!(graph_from_json(&doc.to_string()), Err(Error::GraphLoad { node: 1, .. })));
    }

    #[test]
    fn ids_must_be_dense() {
        let mut doc = example_json();
        doc["nodes"][2]["id"] = json!(7);
        assert!(matches!(graph_from_json(&doc.to_string()), Err(Error::GraphLoad { node: 7, .. })));
    }
}
