//! Missing-data DAGs (m-DAGs), their single-world intervention graphs, and
//! d-separation queries over both.

mod dsep;
mod parse;
mod swig;

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

pub use dsep::{d_separated, d_separation, DsepVerdict};
pub use parse::parse_graph_spec;
pub use swig::{split, Swig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    /// A variable under the intervention that sets its indicator to 1, e.g. `A^(1)`.
    Counterfactual,
    /// A missingness indicator `R`.
    MissIndicator,
    /// The observed coarsening `L`, deterministic in one counterfactual and one indicator.
    Proxy,
    /// Always-observed variable.
    Context,
    /// Fixed half of a split node. Only appears in a [`Swig`].
    FixedIntervention,
}

impl NodeKind {
    pub fn keyword(self) -> &'static str {
        match self {
            NodeKind::Counterfactual => "counterfactual",
            NodeKind::MissIndicator => "miss",
            NodeKind::Proxy => "proxy",
            NodeKind::Context => "context",
            NodeKind::FixedIntervention => "fixed",
        }
    }

    pub fn from_keyword(s: &str) -> Option<Self> {
        Some(match s {
            "counterfactual" | "cf" => NodeKind::Counterfactual,
            "miss" | "missindicator" | "indicator" => NodeKind::MissIndicator,
            "proxy" => NodeKind::Proxy,
            "context" | "observed" => NodeKind::Context,
            "fixed" => NodeKind::FixedIntervention,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub deterministic: bool,
}

/// Unvalidated description of a graph, as produced by the text parser.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GraphSpec {
    pub nodes: Vec<(String, NodeKind)>,
    /// `(from, to, deterministic)`
    pub edges: Vec<(String, String, bool)>,
}

impl GraphSpec {
    pub fn node(mut self, name: &str, kind: NodeKind) -> Self {
        self.nodes.push((name.to_string(), kind));
        self
    }

    pub fn edge(mut self, from: &str, to: &str) -> Self {
        self.edges.push((from.to_string(), to.to_string(), false));
        self
    }

    pub fn det_edge(mut self, from: &str, to: &str) -> Self {
        self.edges.push((from.to_string(), to.to_string(), true));
        self
    }
}

/// Labeled digraph shared by [`MDag`] and [`Swig`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    index: HashMap<String, usize>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
}

impl Graph {
    fn assemble(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.name.clone(), i).is_some() {
                return Err(Error::DuplicateName(n.name.clone()));
            }
        }
        let mut parents = vec![Vec::new(); nodes.len()];
        let mut children = vec![Vec::new(); nodes.len()];
        for e in &edges {
            if !parents[e.to].contains(&e.from) {
                parents[e.to].push(e.from);
                children[e.from].push(e.to);
            }
        }
        Ok(Graph { nodes, edges, index, parents, children })
    }

    fn from_spec(spec: &GraphSpec) -> Result<Self> {
        let nodes: Vec<Node> = spec
            .nodes
            .iter()
            .map(|(name, kind)| Node { name: name.clone(), kind: *kind })
            .collect();
        let mut lookup = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if lookup.insert(n.name.as_str(), i).is_some() {
                return Err(Error::DuplicateName(n.name.clone()));
            }
        }
        let mut edges = Vec::with_capacity(spec.edges.len());
        for (from, to, det) in &spec.edges {
            let f = *lookup.get(from.as_str()).ok_or_else(|| Error::UnknownNode(from.clone()))?;
            let t = *lookup.get(to.as_str()).ok_or_else(|| Error::UnknownNode(to.clone()))?;
            // edges into a proxy are deterministic whether or not they were flagged
            let deterministic = *det || nodes[t].kind == NodeKind::Proxy;
            edges.push(Edge { from: f, to: t, deterministic });
        }
        Graph::assemble(nodes, edges)
    }

    fn check_acyclic(&self) -> Result<()> {
        let mut indeg: Vec<usize> = self.parents.iter().map(Vec::len).collect();
        let mut queue: Vec<usize> = (0..self.nodes.len()).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = queue.pop() {
            seen += 1;
            for &c in &self.children[v] {
                indeg[c] -= 1;
                if indeg[c] == 0 {
                    queue.push(c);
                }
            }
        }
        if seen == self.nodes.len() {
            Ok(())
        } else {
            let stuck = (0..self.nodes.len()).find(|&i| indeg[i] > 0).unwrap_or(0);
            Err(Error::CycleDetected(self.nodes[stuck].name.clone()))
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownNode(name.to_string()))
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.index.get(name).map(|&i| &self.nodes[i])
    }

    pub fn parents_of(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children_of(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        match (self.index.get(from), self.index.get(to)) {
            (Some(&f), Some(&t)) => self.children[f].contains(&t),
            _ => false,
        }
    }

    /// Every node reachable from `start` along directed edges, `start` excluded.
    pub fn descendants(&self, start: usize) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = self.children[start].clone();
        while let Some(v) = stack.pop() {
            if !seen[v] {
                seen[v] = true;
                stack.extend_from_slice(&self.children[v]);
            }
        }
        seen
    }

    pub fn is_deterministic_edge(&self, from: usize, to: usize) -> bool {
        self.edges.iter().any(|e| e.from == from && e.to == to && e.deterministic)
    }

    /// Renders the graph in the line-oriented text format accepted by
    /// [`parse_graph_spec`].
    pub fn to_spec_string(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("node {} kind={};\n", n.name, n.kind.keyword()));
        }
        for e in &self.edges {
            let det = if e.deterministic { " [det]" } else { "" };
            out.push_str(&format!(
                "edge {} -> {}{};\n",
                self.nodes[e.from].name, self.nodes[e.to].name, det
            ));
        }
        out
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_spec_string())
    }
}

/// Anything d-separation can be asked about.
pub trait GraphView {
    fn graph(&self) -> &Graph;
}

impl GraphView for Graph {
    fn graph(&self) -> &Graph {
        self
    }
}

/// A validated m-DAG.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MDag {
    graph: Graph,
}

impl GraphView for MDag {
    fn graph(&self) -> &Graph {
        &self.graph
    }
}

impl MDag {
    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn parse(text: &str) -> Result<Self> {
        build_mdag(&parse_graph_spec(text)?)
    }
}

/// Builds and validates an m-DAG.
pub fn build_mdag(spec: &GraphSpec) -> Result<MDag> {
    let graph = Graph::from_spec(spec)?;
    for n in graph.nodes() {
        if n.kind == NodeKind::FixedIntervention {
            return Err(Error::InvalidArgument(format!(
                "fixed intervention node `{}` is only allowed in a SWIG",
                n.name
            )));
        }
    }
    for (i, n) in graph.nodes().iter().enumerate() {
        if n.kind != NodeKind::Proxy {
            continue;
        }
        let kinds: Vec<NodeKind> = graph.parents_of(i).iter().map(|&p| graph.nodes()[p].kind).collect();
        let ok = kinds.len() == 2
            && kinds.contains(&NodeKind::Counterfactual)
            && kinds.contains(&NodeKind::MissIndicator);
        if !ok {
            return Err(Error::BadProxyParents(n.name.clone()));
        }
    }
    for (i, n) in graph.nodes().iter().enumerate() {
        if !matches!(n.kind, NodeKind::MissIndicator | NodeKind::Proxy) {
            continue;
        }
        let desc = graph.descendants(i);
        if let Some(cf) = graph
            .nodes()
            .iter()
            .enumerate()
            .find(|(j, m)| desc[*j] && m.kind == NodeKind::Counterfactual)
        {
            return Err(Error::CounterfactualDownstreamOfMissingness {
                counterfactual: cf.1.name.clone(),
                ancestor: n.name.clone(),
            });
        }
    }
    graph.check_acyclic()?;
    Ok(MDag { graph })
}

/// Graph specification of the missing-exposure m-DAG: confounders `X`,
/// exposure `A^(1)`, outcome `Y`, exposure indicator `R` and proxy `A`.
pub fn missing_exposure_spec() -> GraphSpec {
    GraphSpec::default()
        .node("X", NodeKind::Context)
        .node("A^(1)", NodeKind::Counterfactual)
        .node("Y", NodeKind::Context)
        .node("R", NodeKind::MissIndicator)
        .node("A", NodeKind::Proxy)
        .edge("X", "A^(1)")
        .edge("A^(1)", "Y")
        .edge("Y", "R")
        .edge("X", "R")
        .edge("X", "Y")
        .det_edge("R", "A")
        .det_edge("A^(1)", "A")
}

pub fn missing_exposure_mdag() -> MDag {
    build_mdag(&missing_exposure_spec()).expect("missing-exposure graph is valid")
}

/// The permutation missingness m-DAG over `Y^(1), X^(1), R_1, R_2, Y, X`.
pub fn permutation_mdag() -> MDag {
    let spec = GraphSpec::default()
        .node("Y^(1)", NodeKind::Counterfactual)
        .node("X^(1)", NodeKind::Counterfactual)
        .node("R_1", NodeKind::MissIndicator)
        .node("R_2", NodeKind::MissIndicator)
        .node("Y", NodeKind::Proxy)
        .node("X", NodeKind::Proxy)
        .edge("Y^(1)", "X^(1)")
        .edge("X^(1)", "R_1")
        .edge("R_1", "R_2")
        .edge("Y", "R_2")
        .det_edge("Y^(1)", "Y")
        .det_edge("R_1", "Y")
        .det_edge("X^(1)", "X")
        .det_edge("R_2", "X");
    build_mdag(&spec).expect("permutation graph is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_exposure_graph_has_five_nodes() {
        let g = missing_exposure_mdag();
        assert_eq!(g.graph().len(), 5);
        assert_eq!(g.graph().edges().len(), 7);
    }

    #[test]
    fn single_node_is_valid() {
        let g = build_mdag(&GraphSpec::default().node("X", NodeKind::Context)).unwrap();
        assert_eq!(g.graph().len(), 1);
    }

    #[test]
    fn indicator_into_counterfactual_is_rejected() {
        let spec = missing_exposure_spec().edge("R", "A^(1)");
        match build_mdag(&spec) {
            Err(Error::CounterfactualDownstreamOfMissingness { counterfactual, ancestor }) => {
                assert_eq!(counterfactual, "A^(1)");
                assert_eq!(ancestor, "R");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cycles_duplicates_and_proxies_are_rejected() {
        let cyc = GraphSpec::default()
            .node("X", NodeKind::Context)
            .node("Y", NodeKind::Context)
            .edge("X", "Y")
            .edge("Y", "X");
        assert!(matches!(build_mdag(&cyc), Err(Error::CycleDetected(_))));

        let dup = GraphSpec::default().node("X", NodeKind::Context).node("X", NodeKind::Context);
        assert_eq!(build_mdag(&dup), Err(Error::DuplicateName("X".into())));

        let proxy = GraphSpec::default()
            .node("L1", NodeKind::Counterfactual)
            .node("L", NodeKind::Proxy)
            .edge("L1", "L");
        assert_eq!(build_mdag(&proxy), Err(Error::BadProxyParents("L".into())));

        let unknown = GraphSpec::default().node("X", NodeKind::Context).edge("X", "Q");
        assert_eq!(build_mdag(&unknown), Err(Error::UnknownNode("Q".into())));
    }

    #[test]
    fn counterfactual_below_proxy_is_rejected() {
        let spec = GraphSpec::default()
            .node("L1", NodeKind::Counterfactual)
            .node("R", NodeKind::MissIndicator)
            .node("L", NodeKind::Proxy)
            .node("M1", NodeKind::Counterfactual)
            .edge("L1", "L")
            .edge("R", "L")
            .edge("L", "M1");
        assert!(matches!(
            build_mdag(&spec),
            Err(Error::CounterfactualDownstreamOfMissingness { .. })
        ));
    }

    #[test]
    fn permutation_graph_structure() {
        let g = permutation_mdag();
        assert_eq!(g.graph().len(), 6);
        assert_eq!(g.graph().edges().iter().filter(|e| e.deterministic).count(), 4);
        assert!(g.graph().has_edge("R_1", "R_2"));
        assert!(!g.graph().has_edge("R_2", "R_1"));
    }

    #[test]
    fn spec_string_round_trips() {
        let g = permutation_mdag();
        let again = MDag::parse(&g.graph().to_spec_string()).unwrap();
        assert_eq!(again, g);
    }
}
