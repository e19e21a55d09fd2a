//! d-separation by reachability ("Bayes ball").
//!
//! Deterministic edges are treated as ordinary directed edges. Independences
//! that only follow from determinism are never inferred; queries whose
//! connecting paths cross a deterministic edge are flagged instead.
//! Fixed intervention nodes are constants and always block.

use std::collections::BTreeSet;

use super::{GraphView, Graph, NodeKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DsepVerdict {
    pub separated: bool,
    /// Some path between the two sets traverses a deterministic edge.
    pub deterministic_path_warning: bool,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    /// Arrived from a child, moving against edge direction.
    Up,
    /// Arrived from a parent.
    Down,
}

pub fn d_separated<G: GraphView + ?Sized, S: AsRef<str>>(
    g: &G,
    a: &[S],
    b: &[S],
    z: &[S],
) -> Result<bool> {
    d_separation(g, a, b, z).map(|v| v.separated)
}

pub fn d_separation<G: GraphView + ?Sized, S: AsRef<str>>(
    g: &G,
    a: &[S],
    b: &[S],
    z: &[S],
) -> Result<DsepVerdict> {
    let graph = g.graph();
    let a = resolve(graph, a)?;
    let b = resolve(graph, b)?;
    let z = resolve(graph, z)?;
    for set in [&a, &b] {
        if let Some(&i) = set.iter().find(|&&i| graph.nodes()[i].kind == NodeKind::FixedIntervention) {
            return Err(Error::FixedNodeInQuery(graph.nodes()[i].name.clone()));
        }
    }
    for (x, y) in [(&a, &b), (&a, &z), (&b, &z)] {
        if let Some(&i) = x.intersection(y).next() {
            return Err(Error::OverlappingSets(graph.nodes()[i].name.clone()));
        }
    }

    let mut blocked = vec![false; graph.len()];
    for &i in &z {
        blocked[i] = true;
    }
    for (i, n) in graph.nodes().iter().enumerate() {
        if n.kind == NodeKind::FixedIntervention {
            blocked[i] = true;
        }
    }
    let reachable = reachable_from(graph, &a, &blocked);
    let separated = !b.iter().any(|&i| reachable[i]);
    let deterministic_path_warning = any_path_uses_deterministic_edge(graph, &a, &b);
    Ok(DsepVerdict { separated, deterministic_path_warning })
}

fn resolve<S: AsRef<str>>(graph: &Graph, names: &[S]) -> Result<BTreeSet<usize>> {
    names.iter().map(|n| graph.index_of(n.as_ref())).collect()
}

fn reachable_from(graph: &Graph, sources: &BTreeSet<usize>, blocked: &[bool]) -> Vec<bool> {
    let n = graph.len();
    // nodes that are conditioned on or have a conditioned descendant
    let mut opens_collider = blocked.to_vec();
    let mut stack: Vec<usize> = (0..n).filter(|&i| blocked[i]).collect();
    while let Some(v) = stack.pop() {
        for &p in graph.parents_of(v) {
            if !opens_collider[p] {
                opens_collider[p] = true;
                stack.push(p);
            }
        }
    }

    let mut reachable = vec![false; n];
    let mut visited_up = vec![false; n];
    let mut visited_down = vec![false; n];
    let mut queue: Vec<(usize, Dir)> = sources.iter().map(|&s| (s, Dir::Up)).collect();
    while let Some((v, dir)) = queue.pop() {
        let seen = match dir {
            Dir::Up => &mut visited_up[v],
            Dir::Down => &mut visited_down[v],
        };
        if *seen {
            continue;
        }
        *seen = true;
        if !blocked[v] {
            reachable[v] = true;
        }
        match dir {
            Dir::Up if !blocked[v] => {
                queue.extend(graph.parents_of(v).iter().map(|&p| (p, Dir::Up)));
                queue.extend(graph.children_of(v).iter().map(|&c| (c, Dir::Down)));
            }
            Dir::Up => {}
            Dir::Down => {
                if !blocked[v] {
                    queue.extend(graph.children_of(v).iter().map(|&c| (c, Dir::Down)));
                }
                if opens_collider[v] {
                    queue.extend(graph.parents_of(v).iter().map(|&p| (p, Dir::Up)));
                }
            }
        }
    }
    reachable
}

/// Depth-first search over simple paths of the skeleton. Graphs here are
/// desk-sized, so the exponential worst case does not matter.
fn any_path_uses_deterministic_edge(graph: &Graph, a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> bool {
    let n = graph.len();
    let mut adjacency: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
    for e in graph.edges() {
        adjacency[e.from].push((e.to, e.deterministic));
        adjacency[e.to].push((e.from, e.deterministic));
    }
    let mut on_path = vec![false; n];

    fn dfs(
        v: usize,
        used_det: bool,
        adjacency: &[Vec<(usize, bool)>],
        targets: &BTreeSet<usize>,
        on_path: &mut [bool],
    ) -> bool {
        if targets.contains(&v) {
            return used_det;
        }
        on_path[v] = true;
        let found = adjacency[v]
            .iter()
            .any(|&(w, det)| !on_path[w] && dfs(w, used_det || det, adjacency, targets, on_path));
        on_path[v] = false;
        found
    }

    a.iter().any(|&s| {
        on_path[s] = true;
        let found = adjacency[s]
            .iter()
            .any(|&(w, det)| !on_path[w] && dfs(w, det, &adjacency, b, &mut on_path));
        on_path[s] = false;
        found
    })
}
