//! Node splitting: m-DAG to single-world intervention graph.

use std::collections::BTreeMap;

use super::{Edge, Graph, GraphView, MDag, Node, NodeKind};
use crate::error::{Error, Result};

/// An m-DAG after node splitting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Swig {
    graph: Graph,
    /// original node name -> name of its fixed half
    interventions: BTreeMap<String, String>,
    /// original node name -> name in the split graph
    relabeling: BTreeMap<String, String>,
}

impl GraphView for Swig {
    fn graph(&self) -> &Graph {
        &self.graph
    }
}

impl Swig {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn interventions(&self) -> &BTreeMap<String, String> {
        &self.interventions
    }

    pub fn relabeling(&self) -> &BTreeMap<String, String> {
        &self.relabeling
    }

    /// Name in the split graph of an original node (its random half, if split).
    pub fn renamed(&self, original: &str) -> Option<&str> {
        self.relabeling.get(original).map(String::as_str)
    }
}

/// Name of the fixed half. A bare value such as `1` for node `R` becomes
/// `r=1`; anything else (e.g. `a^(1)`) is used verbatim.
fn fixed_name(node: &str, label: &str) -> String {
    if label.parse::<f64>().is_ok() {
        format!("{}={}", node.to_lowercase(), label)
    } else {
        label.to_string()
    }
}

/// Splits each intervened node into a random half keeping the incoming edges
/// and a fixed half taking the outgoing edges. Non-deterministic descendants
/// of fixed halves are relabeled `V^{l1,l2}`; a proxy whose parents are all
/// fixed becomes the constant `<label>-proxy`.
pub fn split(g: &MDag, interventions: &BTreeMap<String, String>) -> Result<Swig> {
    let src = g.graph();
    let mut fixed_of: Vec<Option<String>> = vec![None; src.len()];
    let mut fixed_names = BTreeMap::new();
    for (name, label) in interventions {
        let i = src.index_of(name)?;
        if src.nodes()[i].kind == NodeKind::Proxy {
            return Err(Error::SplitOnProxy(name.clone()));
        }
        let f = fixed_name(name, label);
        fixed_of[i] = Some(f.clone());
        fixed_names.insert(name.clone(), f);
    }

    // layout: each node, followed directly by its fixed half when split
    let mut nodes = Vec::new();
    let mut random_idx = vec![0; src.len()];
    let mut fixed_idx = vec![None; src.len()];
    for (i, n) in src.nodes().iter().enumerate() {
        random_idx[i] = nodes.len();
        nodes.push(n.clone());
        if let Some(f) = &fixed_of[i] {
            fixed_idx[i] = Some(nodes.len());
            nodes.push(Node { name: f.clone(), kind: NodeKind::FixedIntervention });
        }
    }
    let edges: Vec<Edge> = src
        .edges()
        .iter()
        .map(|e| Edge {
            from: fixed_idx[e.from].unwrap_or(random_idx[e.from]),
            to: random_idx[e.to],
            deterministic: e.deterministic,
        })
        .collect();

    let provisional = Graph::assemble(nodes.clone(), edges.clone())?;
    let fixed_nodes: Vec<usize> = fixed_idx.iter().flatten().copied().collect();
    let below: Vec<Vec<bool>> = fixed_nodes.iter().map(|&f| provisional.descendants(f)).collect();

    let mut relabeling = BTreeMap::new();
    for (i, n) in src.nodes().iter().enumerate() {
        let v = random_idx[i];
        let new_name = if n.kind == NodeKind::Proxy {
            let parents = provisional.parents_of(v);
            let all_fixed = !parents.is_empty()
                && parents.iter().all(|&p| nodes[p].kind == NodeKind::FixedIntervention);
            if all_fixed {
                let cf_label = src
                    .parents_of(i)
                    .iter()
                    .find(|&&p| src.nodes()[p].kind == NodeKind::Counterfactual)
                    .and_then(|&p| fixed_of[p].clone())
                    .unwrap_or_else(|| nodes[parents[0]].name.clone());
                format!("{cf_label}-proxy")
            } else {
                n.name.clone()
            }
        } else {
            let labels: Vec<&str> = fixed_nodes
                .iter()
                .zip(&below)
                .filter(|(_, desc)| desc[v])
                .map(|(&f, _)| nodes[f].name.as_str())
                .collect();
            if labels.is_empty() {
                n.name.clone()
            } else {
                format!("{}^{{{}}}", n.name, labels.join(","))
            }
        };
        nodes[v].name = new_name.clone();
        relabeling.insert(n.name.clone(), new_name);
    }

    let graph = Graph::assemble(nodes, edges)?;
    graph.check_acyclic()?;
    Ok(Swig { graph, interventions: fixed_names, relabeling })
}
