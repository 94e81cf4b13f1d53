//! Choice networks, payoffs and population states.
//!
//! Node ids are 0-based everywhere in the library. Instance files use
//! 1-based ids; the translation happens in [`crate::instance`].

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::dynamics::ArcFlows;
use crate::error::ModelError;

/// Entries at or below this value count as empty nodes.
pub const SUPPORT_EPSILON: f64 = 1e-12;

/// Arc flows at or below this value count as zero in correlation checks.
pub const CORRELATION_EPSILON: f64 = 1e-12;

/// Allowed drift between `sum(x)` and `rho` for a valid state.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Undirected choice network without self-loops or parallel edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChoiceGraph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl ChoiceGraph {
    pub fn new(
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, ModelError> {
        if node_count == 0 {
            return Err(ModelError::EmptyGraph);
        }
        let mut seen = BTreeSet::new();
        for (i, j) in edges {
            if i >= node_count || j >= node_count {
                return Err(ModelError::NodeOutOfRange(i, j, node_count));
            }
            if i == j {
                return Err(ModelError::SelfLoop(i));
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                return Err(ModelError::DuplicateEdge(key.0, key.1));
            }
        }
        let edges: Vec<_> = seen.into_iter().collect();
        let mut adjacency = vec![Vec::new(); node_count];
        for &(i, j) in &edges {
            adjacency[i].push(j);
            adjacency[j].push(i);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            node_count,
            edges,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency
            .get(i)
            .is_some_and(|n| n.binary_search(&j).is_ok())
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.node_count
    }

    /// Applies `perm` (old id -> new id) to every edge.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        Self::new(
            self.node_count,
            self.edges.iter().map(|&(i, j)| (perm[i], perm[j])),
        )
        .expect("a permutation preserves graph validity")
    }

    pub fn to_flow(&self) -> FlowDigraph {
        arcs_from_edges(self)
    }
}

/// Both orientations of every edge.
pub fn arcs_from_edges(g: &ChoiceGraph) -> FlowDigraph {
    FlowDigraph::new(
        g.node_count(),
        g.edges().iter().flat_map(|&(i, j)| [(i, j), (j, i)]),
    )
    .expect("edges of a valid graph give valid arcs")
}

/// Directed arc companion of a choice network.
///
/// Arc flows are stored per arc elsewhere; the incidence matrix is implicit
/// in the arc list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowDigraph {
    node_count: usize,
    arcs: BTreeSet<(usize, usize)>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
}

impl Serialize for FlowDigraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("FlowDigraph", 2)?;
        st.serialize_field("node_count", &self.node_count)?;
        st.serialize_field("arcs", &self.arcs)?;
        st.end()
    }
}

impl FlowDigraph {
    pub fn new(
        node_count: usize,
        arcs: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, ModelError> {
        let mut set = BTreeSet::new();
        for (i, j) in arcs {
            if i >= node_count || j >= node_count {
                return Err(ModelError::NodeOutOfRange(i, j, node_count));
            }
            if i == j {
                return Err(ModelError::SelfLoop(i));
            }
            set.insert((i, j));
        }
        let mut out_adj = vec![Vec::new(); node_count];
        let mut in_adj = vec![Vec::new(); node_count];
        for &(i, j) in &set {
            out_adj[i].push(j);
            in_adj[j].push(i);
        }
        for list in in_adj.iter_mut() {
            list.sort_unstable();
        }
        Ok(Self {
            node_count,
            arcs: set,
            out_adj,
            in_adj,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    /// Arcs in lexicographic order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.arcs.iter().copied()
    }

    pub fn arc_set(&self) -> &BTreeSet<(usize, usize)> {
        &self.arcs
    }

    pub fn has_arc(&self, i: usize, j: usize) -> bool {
        self.arcs.contains(&(i, j))
    }

    pub fn out_neighbors(&self, node: usize) -> &[usize] {
        &self.out_adj[node]
    }

    pub fn in_neighbors(&self, node: usize) -> &[usize] {
        &self.in_adj[node]
    }

    /// Nodes reachable from `sources` along arcs (sources included).
    pub fn reachable_from(&self, sources: impl IntoIterator<Item = usize>) -> Vec<bool> {
        bfs(self.node_count, sources, |v| &self.out_adj[v])
    }

    /// Nodes from which some node of `targets` is reachable (targets included).
    pub fn reaching(&self, targets: impl IntoIterator<Item = usize>) -> Vec<bool> {
        bfs(self.node_count, targets, |v| &self.in_adj[v])
    }

    /// Keeps the arcs for which `keep` returns true.
    pub fn filter_arcs(&self, mut keep: impl FnMut(usize, usize) -> bool) -> Self {
        Self::new(self.node_count, self.arcs().filter(|&(i, j)| keep(i, j)))
            .expect("a subset of valid arcs is valid")
    }
}

fn bfs<'a>(
    n: usize,
    starts: impl IntoIterator<Item = usize>,
    next: impl Fn(usize) -> &'a [usize],
) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    for s in starts {
        if !seen[s] {
            seen[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(v) = queue.pop_front() {
        for &w in next(v) {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    seen
}

/// Cumulative payoff of one node.
///
/// Only the quadratic family `p(y) = a*y - c*y^2/2` is built in; its maximum
/// payoff density parameter (MPDP) is `u(0) = a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum NodePayoff {
    Quadratic { a: f64, c: f64 },
}

impl NodePayoff {
    pub fn quadratic(a: f64, c: f64) -> Self {
        NodePayoff::Quadratic { a, c }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            NodePayoff::Quadratic { a, c } => {
                if !a.is_finite() {
                    return Err(format!("a = {a} is not finite"));
                }
                if !(c.is_finite() && c > 0.0) {
                    return Err(format!("curvature c = {c} must be positive"));
                }
                Ok(())
            }
        }
    }

    /// Cumulative payoff `p(y)`.
    #[inline]
    pub fn cumulative(&self, y: f64) -> f64 {
        match *self {
            NodePayoff::Quadratic { a, c } => y * (a - 0.5 * c * y),
        }
    }

    /// Payoff density `u(y) = p'(y)`, strictly decreasing.
    #[inline]
    pub fn density(&self, y: f64) -> f64 {
        match *self {
            NodePayoff::Quadratic { a, c } => a - c * y,
        }
    }

    /// Inverse density. Defined for every real level; the result may be
    /// negative or exceed any mass bound and callers clip it.
    #[inline]
    pub fn inverse_density(&self, level: f64) -> f64 {
        match *self {
            NodePayoff::Quadratic { a, c } => (a - level) / c,
        }
    }

    #[inline]
    pub fn mpdp(&self) -> f64 {
        self.density(0.0)
    }
}

/// Per-node payoffs of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffSpec {
    nodes: Vec<NodePayoff>,
}

impl PayoffSpec {
    pub fn new(nodes: Vec<NodePayoff>) -> Result<Self, ModelError> {
        for (node, p) in nodes.iter().enumerate() {
            p.validate()
                .map_err(|reason| ModelError::InvalidPayoff { node, reason })?;
        }
        Ok(Self { nodes })
    }

    /// Quadratic payoffs from parallel `a` and `c` vectors.
    pub fn quadratic(a: &[f64], c: &[f64]) -> Result<Self, ModelError> {
        if a.len() != c.len() {
            return Err(ModelError::LengthMismatch {
                expected: a.len(),
                got: c.len(),
            });
        }
        Self::new(
            a.iter()
                .zip(c)
                .map(|(&a, &c)| NodePayoff::quadratic(a, c))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> &NodePayoff {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[NodePayoff] {
        &self.nodes
    }

    pub fn mpdp(&self) -> Vec<f64> {
        self.nodes.iter().map(NodePayoff::mpdp).collect()
    }

    pub fn density(&self, i: usize, y: f64) -> f64 {
        self.nodes[i].density(y)
    }

    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut nodes = self.nodes.clone();
        for (old, &new) in perm.iter().enumerate() {
            nodes[new] = self.nodes[old];
        }
        Self { nodes }
    }
}

/// Nonnegative node fractions with total mass `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    pub(crate) x: Vec<f64>,
    pub(crate) rho: f64,
}

impl PopulationState {
    pub fn new(x: Vec<f64>, rho: f64) -> Result<Self, ModelError> {
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(ModelError::InvalidRho(rho));
        }
        for (index, &value) in x.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ModelError::NegativeMass { index, value });
            }
        }
        let sum: f64 = x.iter().sum();
        if (sum - rho).abs() > MASS_TOLERANCE {
            return Err(ModelError::MassMismatch { sum, rho });
        }
        Ok(Self { x, rho })
    }

    /// State whose total mass is the sum of `x`.
    pub fn from_fractions(x: Vec<f64>) -> Result<Self, ModelError> {
        let rho = x.iter().sum();
        Self::new(x, rho)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.x
    }

    pub fn support(&self) -> BTreeSet<usize> {
        self.support_with(SUPPORT_EPSILON)
    }

    pub fn support_with(&self, epsilon: f64) -> BTreeSet<usize> {
        (0..self.x.len()).filter(|&i| self.x[i] > epsilon).collect()
    }

    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut x = self.x.clone();
        for (old, &new) in perm.iter().enumerate() {
            x[new] = self.x[old];
        }
        Self { x, rho: self.rho }
    }
}

/// `U(x) = sum_i [p_i(x_i) - p_i(0)]`.
pub fn social_utility(x: &PopulationState, payoffs: &PayoffSpec) -> f64 {
    utility_of(x.x(), payoffs)
}

pub(crate) fn utility_of(x: &[f64], payoffs: &PayoffSpec) -> f64 {
    x.iter()
        .zip(payoffs.nodes())
        .map(|(&xi, p)| p.cumulative(xi) - p.cumulative(0.0))
        .sum()
}

/// Nash condition: no occupied node has a neighbor with a density higher
/// than its own by more than `tol`.
pub fn is_nash(x: &PopulationState, g: &ChoiceGraph, payoffs: &PayoffSpec, tol: f64) -> bool {
    nash_gap(x, g, payoffs) <= tol
}

/// [`is_nash`] with nodes holding at most `support_epsilon` counted as empty.
pub fn is_nash_with(
    x: &PopulationState,
    g: &ChoiceGraph,
    payoffs: &PayoffSpec,
    tol: f64,
    support_epsilon: f64,
) -> bool {
    nash_gap_with(x, g, payoffs, support_epsilon) <= tol
}

/// Largest `u_j(x_j) - u_i(x_i)` over occupied `i` and neighbors `j`
/// (`-inf` when no occupied node has a neighbor).
pub fn nash_gap(x: &PopulationState, g: &ChoiceGraph, payoffs: &PayoffSpec) -> f64 {
    nash_gap_with(x, g, payoffs, SUPPORT_EPSILON)
}

pub fn nash_gap_with(
    x: &PopulationState,
    g: &ChoiceGraph,
    payoffs: &PayoffSpec,
    support_epsilon: f64,
) -> f64 {
    let xs = x.x();
    let mut gap = f64::NEG_INFINITY;
    for i in x.support_with(support_epsilon) {
        let ui = payoffs.density(i, xs[i]);
        for &j in g.neighbors(i) {
            gap = gap.max(payoffs.density(j, xs[j]) - ui);
        }
    }
    gap
}

/// Checks that no arc carries flow towards a node whose density does not
/// exceed the origin's.
pub fn check_strong_positive_correlation(
    x: &PopulationState,
    delta: &ArcFlows,
    payoffs: &PayoffSpec,
) -> bool {
    correlation_violation(x.x(), delta, payoffs, 0.0).is_none()
}

/// First arc whose flow violates the ordering, allowing `density_tol` slack
/// in the density comparison.
pub(crate) fn correlation_violation(
    x: &[f64],
    delta: &ArcFlows,
    payoffs: &PayoffSpec,
    density_tol: f64,
) -> Option<(usize, usize)> {
    delta
        .iter()
        .find(|&((i, j), d)| {
            d > CORRELATION_EPSILON
                && payoffs.density(i, x[i]) >= payoffs.density(j, x[j]) + density_tol
        })
        .map(|(arc, _)| arc)
}
