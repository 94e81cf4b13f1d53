//! Quasi-concave MPDP paths, hills and the attractive-component partition.

mod partition;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::error::HillsError;
use crate::model::{ChoiceGraph, FlowDigraph};

pub use partition::{
    mac_partition, mac_super_graph, validate_partition, ComponentKind, MacComponent, MacPartition,
    SuperGraph, SuperNode,
};

/// True iff `values` rises (weakly) and then falls (weakly).
pub fn is_quasi_concave_sequence(values: &[f64]) -> bool {
    let mut k = 0;
    while k + 1 < values.len() && values[k + 1] >= values[k] {
        k += 1;
    }
    while k + 1 < values.len() && values[k + 1] <= values[k] {
        k += 1;
    }
    k + 1 >= values.len()
}

/// Undirected adjacency on a node subset.
#[derive(Debug, Clone, PartialEq)]
pub struct UndirectedView {
    adj: BTreeMap<usize, Vec<usize>>,
}

impl UndirectedView {
    pub fn from_graph(g: &ChoiceGraph) -> Self {
        let adj = (0..g.node_count())
            .map(|i| (i, g.neighbors(i).to_vec()))
            .collect();
        Self { adj }
    }

    /// Direction-free view of `flow` restricted to `nodes`.
    pub fn induced(flow: &FlowDigraph, nodes: &BTreeSet<usize>) -> Self {
        let mut adj: BTreeMap<usize, BTreeSet<usize>> =
            nodes.iter().map(|&i| (i, BTreeSet::new())).collect();
        for (i, j) in flow.arcs() {
            if nodes.contains(&i) && nodes.contains(&j) {
                adj.get_mut(&i).unwrap().insert(j);
                adj.get_mut(&j).unwrap().insert(i);
            }
        }
        Self {
            adj: adj
                .into_iter()
                .map(|(i, s)| (i, s.into_iter().collect()))
                .collect(),
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.adj.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.adj.contains_key(&i)
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.adj.get(&i).map_or(&[], |v| v.as_slice())
    }

    pub fn is_connected(&self) -> bool {
        let Some(start) = self.nodes().next() else {
            return false;
        };
        self.bfs(start, |_, _| true).len() == self.len()
    }

    fn bfs(&self, start: usize, mut step: impl FnMut(usize, usize) -> bool) -> BTreeSet<usize> {
        let mut seen = BTreeSet::from([start]);
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in self.neighbors(v) {
                if step(v, w) && seen.insert(w) {
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Nodes reachable from `v` by moves that never lower the MPDP.
    fn ascend(&self, mpdp: &[f64], v: usize) -> BTreeSet<usize> {
        self.bfs(v, |from, to| mpdp[to] >= mpdp[from])
    }

    /// Nodes from which `v` is reachable by moves that never lower the MPDP.
    fn descend(&self, mpdp: &[f64], v: usize) -> BTreeSet<usize> {
        self.bfs(v, |from, to| mpdp[to] <= mpdp[from])
    }
}

/// Whether a simple path with quasi-concave MPDPs joins `i` and `j`.
pub fn qc_path_exists(
    g: &UndirectedView,
    mpdp: &[f64],
    i: usize,
    j: usize,
) -> Result<bool, HillsError> {
    for v in [i, j] {
        if !g.contains(v) {
            return Err(HillsError::NodeNotFound(v));
        }
    }
    if i == j {
        return Ok(true);
    }
    let up_i = g.ascend(mpdp, i);
    let up_j = g.ascend(mpdp, j);
    Ok(!up_i.is_disjoint(&up_j))
}

/// Quasi-concave hill: connected and every pair joined by a quasi-concave path.
pub fn is_qch(g: &UndirectedView, mpdp: &[f64]) -> bool {
    if !g.is_connected() {
        return false;
    }
    let ups: Vec<BTreeSet<usize>> = g.nodes().map(|v| g.ascend(mpdp, v)).collect();
    ups.iter()
        .enumerate()
        .all(|(k, a)| ups[k + 1..].iter().all(|b| !a.is_disjoint(b)))
}

/// A node set of `flow` with the arcs it induces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QchComponent {
    pub nodes: BTreeSet<usize>,
    pub arcs: BTreeSet<(usize, usize)>,
}

/// Greedy peeling of `flow` into directed quasi-concave hill components.
pub fn make_qch_comp(flow: &FlowDigraph, mpdp: &[f64]) -> Vec<QchComponent> {
    qch_components_within(flow, &(0..flow.node_count()).collect(), mpdp)
}

/// [`make_qch_comp`] on the subgraph induced by `nodes`.
pub fn qch_components_within(
    flow: &FlowDigraph,
    nodes: &BTreeSet<usize>,
    mpdp: &[f64],
) -> Vec<QchComponent> {
    let mut unvisited = nodes.clone();
    let mut out = Vec::new();
    while !unvisited.is_empty() {
        // max MPDP, smallest id on ties
        let peak = unvisited
            .iter()
            .copied()
            .reduce(|best, v| if mpdp[v] > mpdp[best] { v } else { best })
            .unwrap();
        let view = UndirectedView::induced(flow, &unvisited);
        // nothing unvisited is higher than the peak, so a quasi-concave path
        // to it is an ascending one
        let members = view.descend(mpdp, peak);
        let arcs = induced_arcs(flow, &members);
        for v in &members {
            unvisited.remove(v);
        }
        out.push(QchComponent {
            nodes: members,
            arcs,
        });
    }
    out
}

pub(crate) fn induced_arcs(flow: &FlowDigraph, nodes: &BTreeSet<usize>) -> BTreeSet<(usize, usize)> {
    nodes
        .iter()
        .flat_map(|&i| {
            flow.out_neighbors(i)
                .iter()
                .filter(|j| nodes.contains(j))
                .map(move |&j| (i, j))
        })
        .collect()
}


#[cfg(test)]
mod tests {
    use super::oracle::*;
    use super::*;
    use crate::model::arcs_from_edges;
    use proptest::prelude::*;

    fn view(n: usize, edges: &[(usize, usize)]) -> UndirectedView {
        UndirectedView::from_graph(&ChoiceGraph::new(n, edges.iter().copied()).unwrap())
    }

    #[test]
    fn sequence_examples() {
        assert!(is_quasi_concave_sequence(&[5.0]));
        assert!(is_quasi_concave_sequence(&[1.0, 3.0, 2.0]));
        assert!(!is_quasi_concave_sequence(&[3.0, 1.0, 2.0]));
        assert!(is_quasi_concave_sequence(&[2.0, 2.0, 1.0, 1.0]));
    }

    #[test]
    fn path_examples() {
        let path = view(3, &[(0, 1), (1, 2)]);
        let m = [3.0, 1.0, 2.0];
        assert!(qc_path_exists(&path, &m, 0, 1).unwrap());
        assert!(!qc_path_exists(&path, &m, 0, 2).unwrap());

        let cycle = view(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let m = [3.0, 1.0, 2.0, 2.0];
        assert!(qc_path_exists(&cycle, &m, 0, 2).unwrap());
        assert_eq!(
            qc_path_exists(&cycle, &m, 0, 9),
            Err(HillsError::NodeNotFound(9))
        );
    }

    #[test]
    fn qch_examples() {
        assert!(is_qch(&view(1, &[]), &[1.0]));
        assert!(is_qch(&view(4, &[(0, 1), (1, 2), (2, 3)]), &[1.0, 2.0, 3.0, 4.0]));
        assert!(!is_qch(&view(3, &[(0, 1)]), &[1.0, 1.0, 1.0]));
        assert!(!is_qch(&view(3, &[(0, 1), (1, 2)]), &[3.0, 1.0, 2.0]));
    }

    #[test]
    fn component_examples() {
        let g = ChoiceGraph::new(3, [(0, 1), (1, 2)]).unwrap();
        let flow = arcs_from_edges(&g);
        assert_eq!(make_qch_comp(&flow, &[2.0, 2.0, 2.0]).len(), 1);
        let chain = FlowDigraph::new(3, [(0, 1), (1, 2)]).unwrap();
        let comps = make_qch_comp(&chain, &[1.0, 3.0, 2.0]);
        assert_eq!(comps.len(), 1);
        assert_eq!(comps[0].arcs.len(), 2);
        let apart = FlowDigraph::new(2, []).unwrap();
        assert_eq!(make_qch_comp(&apart, &[1.0, 1.0]).len(), 2);
        // valley splits: peak 0 takes {0, 1}, node 2 stands alone
        let comps = make_qch_comp(&flow, &[3.0, 1.0, 2.0]);
        let sets: Vec<_> = comps.iter().map(|c| c.nodes.clone()).collect();
        assert_eq!(sets, vec![BTreeSet::from([0, 1]), BTreeSet::from([2])]);
    }

    fn small_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<f64>)> {
        (2usize..=8).prop_flat_map(|n| {
            let pairs: Vec<(usize, usize)> =
                (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            let m = pairs.len();
            (
                Just(n),
                proptest::sample::subsequence(pairs, 0..=m.min(14)),
                // few distinct levels so ties are common
                proptest::collection::vec((0u8..4).prop_map(f64::from), n),
            )
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(400))]
        #[test]
        fn qc_path_matches_enumeration((n, edges, mpdp) in small_graph()) {
            let g = view(n, &edges);
            for i in 0..n {
                for j in i + 1..n {
                    prop_assert_eq!(
                        qc_path_exists(&g, &mpdp, i, j).unwrap(),
                        qc_path_brute(&g, &mpdp, i, j),
                        "pair ({}, {})", i, j
                    );
                }
            }
        }

        #[test]
        fn sequence_check_matches_definition(v in proptest::collection::vec((0u8..4).prop_map(f64::from), 1..8)) {
            prop_assert_eq!(is_quasi_concave_sequence(&v), is_qc_by_definition(&v));
        }

        #[test]
        fn components_are_hills_and_cover((n, edges, mpdp) in small_graph()) {
            let flow = arcs_from_edges(&ChoiceGraph::new(n, edges).unwrap());
            let comps = make_qch_comp(&flow, &mpdp);
            let mut seen = BTreeSet::new();
            for c in &comps {
                prop_assert!(is_qch(&UndirectedView::induced(&flow, &c.nodes), &mpdp));
                for v in &c.nodes {
                    prop_assert!(seen.insert(*v));
                }
            }
            prop_assert_eq!(seen.len(), n);
        }
    }
}
