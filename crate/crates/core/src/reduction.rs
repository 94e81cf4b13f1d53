//! Initial-condition reduced graph (ICRG).
//!
//! Arcs that can never carry flow from a given initial state are removed,
//! together with nodes no population can ever reach.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::model::{FlowDigraph, PayoffSpec, PopulationState, SUPPORT_EPSILON};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedGraph {
    /// ICRG on the full node range; dropped nodes are isolated.
    pub digraph: FlowDigraph,
    /// Largest mass each node can ever hold; zero for dropped nodes.
    pub theta: Vec<f64>,
    pub kept_nodes: BTreeSet<usize>,
    pub rho: f64,
}

impl ReducedGraph {
    pub fn node_count(&self) -> usize {
        self.digraph.node_count()
    }

    pub fn is_kept(&self, i: usize) -> bool {
        self.kept_nodes.contains(&i)
    }

    /// DOT text with 1-based node ids and `theta` annotations.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph icrg {\n  node [shape=circle];\n");
        for &i in &self.kept_nodes {
            let _ = writeln!(
                s,
                "  {} [label=\"{}\\ntheta={:.4}\"];",
                i + 1,
                i + 1,
                self.theta[i]
            );
        }
        for (i, j) in self.digraph.arcs() {
            let _ = writeln!(s, "  {} -> {};", i + 1, j + 1);
        }
        s.push_str("}\n");
        s
    }
}

fn support(x0: &PopulationState) -> Vec<usize> {
    x0.support_with(SUPPORT_EPSILON).into_iter().collect()
}

/// One reduction pass.
///
/// `theta_i` sums the initial mass of support nodes with a directed path to
/// `i`. An arc `(i, j)` with `u_i(theta_i) >= u_j(0)` is removed; only the
/// support and the nodes it still reaches are kept.
pub fn repeat_reduction(
    flow: &FlowDigraph,
    x0: &PopulationState,
    payoffs: &PayoffSpec,
) -> ReducedGraph {
    let n = flow.node_count();
    let supp = support(x0);
    let mut theta = vec![0.0; n];
    for &s in &supp {
        let reach = flow.reachable_from([s]);
        for (i, r) in reach.iter().enumerate() {
            if *r {
                theta[i] += x0.x()[s];
            }
        }
    }
    let pruned = flow.filter_arcs(|i, j| payoffs.density(i, theta[i]) < payoffs.node(j).mpdp());
    let reach = pruned.reachable_from(supp.iter().copied());
    let kept: BTreeSet<usize> = (0..n).filter(|&i| reach[i]).collect();
    let digraph = pruned.filter_arcs(|i, j| reach[i] && reach[j]);
    for (i, t) in theta.iter_mut().enumerate() {
        if !reach[i] {
            *t = 0.0;
        }
    }
    ReducedGraph {
        digraph,
        theta,
        kept_nodes: kept,
        rho: x0.rho(),
    }
}

/// Iterates [`repeat_reduction`] until the graph stops changing.
pub fn reduce_graph(flow: &FlowDigraph, x0: &PopulationState, payoffs: &PayoffSpec) -> ReducedGraph {
    let mut red = repeat_reduction(flow, x0, payoffs);
    loop {
        let next = repeat_reduction(&red.digraph, x0, payoffs);
        if next.digraph == red.digraph && next.kept_nodes == red.kept_nodes {
            return next;
        }
        red = next;
    }
}

/// Kept nodes with an out-arc whose reverse is missing.
pub fn eventually_empty_nodes(red: &ReducedGraph) -> BTreeSet<usize> {
    red.digraph
        .arcs()
        .filter(|&(i, j)| !red.digraph.has_arc(j, i))
        .map(|(i, _)| i)
        .collect()
}
