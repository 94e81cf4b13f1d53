use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::Serialize;

use super::{induced_arcs, is_qch, qch_components_within, UndirectedView};
use crate::model::{FlowDigraph, PopulationState};
use crate::reduction::ReducedGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ComponentKind {
    Attractive,
    NonAttractive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacComponent {
    pub nodes: BTreeSet<usize>,
    pub arcs: BTreeSet<(usize, usize)>,
    pub kind: ComponentKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MacPartition {
    pub components: Vec<MacComponent>,
}

impl MacPartition {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Index of the component holding node `i`.
    pub fn component_of(&self, i: usize) -> Option<usize> {
        self.components.iter().position(|c| c.nodes.contains(&i))
    }

    /// DOT text, one cluster per component, filled by kind.
    pub fn to_dot(&self, red: &ReducedGraph) -> String {
        let mut s = String::from("digraph mac_partition {\n  compound=true;\n  node [shape=circle];\n");
        for (q, c) in self.components.iter().enumerate() {
            let (label, color) = match c.kind {
                ComponentKind::Attractive => ("A", "palegreen"),
                ComponentKind::NonAttractive => ("NA", "lightsalmon"),
            };
            let _ = writeln!(s, "  subgraph cluster_{q} {{");
            let _ = writeln!(s, "    label=\"H{} ({label})\";", q + 1);
            let _ = writeln!(s, "    style=filled; fillcolor={color};");
            for &i in &c.nodes {
                let _ = writeln!(s, "    {};", i + 1);
            }
            s.push_str("  }\n");
        }
        for (i, j) in red.digraph.arcs() {
            let internal = self
                .component_of(i)
                .is_some_and(|q| self.components[q].arcs.contains(&(i, j)));
            let style = if internal { "" } else { " [style=dashed]" };
            let _ = writeln!(s, "  {} -> {}{style};", i + 1, j + 1);
        }
        s.push_str("}\n");
        s
    }
}

/// Repeatedly drops nodes with an out-neighbor outside the set.
fn evict(flow: &FlowDigraph, nodes: &BTreeSet<usize>) -> BTreeSet<usize> {
    let mut alive = nodes.clone();
    let mut queue: VecDeque<usize> = nodes.iter().copied().collect();
    while let Some(i) = queue.pop_front() {
        if !alive.contains(&i) {
            continue;
        }
        if flow.out_neighbors(i).iter().any(|j| !alive.contains(j)) {
            alive.remove(&i);
            queue.extend(flow.in_neighbors(i).iter().filter(|k| alive.contains(k)));
        }
    }
    alive
}

fn split(flow: &FlowDigraph, nodes: BTreeSet<usize>, mpdp: &[f64], out: &mut Vec<MacComponent>) {
    let survivors = evict(flow, &nodes);
    let kind = if survivors == nodes {
        ComponentKind::Attractive
    } else if survivors.is_empty() {
        ComponentKind::NonAttractive
    } else {
        let rest: BTreeSet<usize> = nodes.difference(&survivors).copied().collect();
        for part in [survivors, rest] {
            for piece in qch_components_within(flow, &part, mpdp) {
                split(flow, piece.nodes, mpdp, out);
            }
        }
        return;
    };
    out.push(MacComponent {
        arcs: induced_arcs(flow, &nodes),
        nodes,
        kind,
    });
}

/// Partition of the ICRG into directed quasi-concave hill components.
///
/// Each hill from [`qch_components_within`] keeps the nodes that survive
/// eviction; evicted nodes from all hills are pooled and regrouped. A group
/// that is only partly out-closed is split again, so every Attractive
/// component is out-closed and every NonAttractive one evicts completely.
pub fn mac_partition(red: &ReducedGraph, mpdp: &[f64]) -> MacPartition {
    let flow = &red.digraph;
    let mut components = Vec::new();
    let mut pool = BTreeSet::new();
    for hill in qch_components_within(flow, &red.kept_nodes, mpdp) {
        let survivors = evict(flow, &hill.nodes);
        pool.extend(hill.nodes.difference(&survivors).copied());
        for piece in qch_components_within(flow, &survivors, mpdp) {
            split(flow, piece.nodes, mpdp, &mut components);
        }
    }
    for piece in qch_components_within(flow, &pool, mpdp) {
        split(flow, piece.nodes, mpdp, &mut components);
    }
    MacPartition { components }
}

/// Checks every structural requirement of a MAC partition of `red`.
pub fn validate_partition(part: &MacPartition, red: &ReducedGraph, mpdp: &[f64]) -> Result<(), String> {
    let flow = &red.digraph;
    let mut covered = BTreeSet::new();
    let mut arcs = BTreeSet::new();
    for (q, c) in part.components.iter().enumerate() {
        if c.nodes.is_empty() {
            return Err(format!("component {q} is empty"));
        }
        for &i in &c.nodes {
            if !covered.insert(i) {
                return Err(format!("node {i} is in two components"));
            }
        }
        for &(i, j) in &c.arcs {
            if !flow.has_arc(i, j) {
                return Err(format!("component {q} arc ({i}, {j}) is not in the ICRG"));
            }
            if !arcs.insert((i, j)) {
                return Err(format!("arc ({i}, {j}) is in two components"));
            }
        }
        if !is_qch(&UndirectedView::induced(flow, &c.nodes), mpdp) {
            return Err(format!("component {q} is not a quasi-concave hill"));
        }
        match c.kind {
            ComponentKind::Attractive => {
                if let Some(i) = c
                    .nodes
                    .iter()
                    .find(|&&i| flow.out_neighbors(i).iter().any(|j| !c.nodes.contains(j)))
                {
                    return Err(format!("attractive component {q} has an arc leaving node {i}"));
                }
                if c.arcs != induced_arcs(flow, &c.nodes) {
                    return Err(format!("attractive component {q} misses internal arcs"));
                }
            }
            ComponentKind::NonAttractive => {
                if !evict(flow, &c.nodes).is_empty() {
                    return Err(format!("non-attractive component {q} contains an attractive part"));
                }
            }
        }
    }
    if covered != red.kept_nodes {
        return Err("components do not cover the ICRG nodes".into());
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuperNode {
    pub members: BTreeSet<usize>,
    pub kind: ComponentKind,
    /// Initial mass on the members.
    pub mass: f64,
}

/// Condensation of the ICRG over a MAC partition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuperGraph {
    pub nodes: Vec<SuperNode>,
    pub arcs: BTreeSet<(usize, usize)>,
}

impl SuperGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Super nodes reachable from `q`, `q` included, ascending.
    pub fn out_reachable(&self, q: usize) -> Vec<usize> {
        let mut seen = BTreeSet::from([q]);
        let mut queue = VecDeque::from([q]);
        while let Some(r) = queue.pop_front() {
            for &(_, s) in self.arcs.range((r, 0)..=(r, usize::MAX)) {
                if seen.insert(s) {
                    queue.push_back(s);
                }
            }
        }
        seen.into_iter().collect()
    }

    /// Same graph with super nodes renumbered by `perm` (old -> new).
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut nodes = self.nodes.clone();
        for (old, node) in self.nodes.iter().enumerate() {
            nodes[perm[old]] = node.clone();
        }
        Self {
            nodes,
            arcs: self.arcs.iter().map(|&(q, r)| (perm[q], perm[r])).collect(),
        }
    }
}

pub fn mac_super_graph(part: &MacPartition, red: &ReducedGraph, x0: &PopulationState) -> SuperGraph {
    let nodes = part
        .components
        .iter()
        .map(|c| SuperNode {
            members: c.nodes.clone(),
            kind: c.kind,
            mass: c.nodes.iter().map(|&i| x0.x()[i]).sum(),
        })
        .collect();
    let arcs = red
        .digraph
        .arcs()
        .filter_map(|(i, j)| {
            let q = part.component_of(i)?;
            let r = part.component_of(j)?;
            (q != r).then_some((q, r))
        })
        .collect();
    SuperGraph { nodes, arcs }
}
