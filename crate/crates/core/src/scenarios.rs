//! Seeded instance generators and bundled scenarios.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::InstanceError;
use crate::instance::Instance;
use crate::model::{ChoiceGraph, PayoffSpec, PopulationState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// Random spanning tree plus extra edges.
    Random,
    /// Path with increasing MPDPs.
    Chain,
    /// Random connected graph whose MPDPs fall with distance from a root.
    Qch,
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Family::Random),
            "chain" => Ok(Family::Chain),
            "qch" => Ok(Family::Qch),
            other => Err(format!("unknown family '{other}' (expected random, chain or qch)")),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Random => "random",
            Family::Chain => "chain",
            Family::Qch => "qch",
        })
    }
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn random_edges(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges = Vec::new();
    for k in 1..n {
        let parent = order[rng.gen_range(0..k)];
        edges.push((parent.min(order[k]), parent.max(order[k])));
    }
    let extra = 1.5 / n as f64;
    for i in 0..n {
        for j in i + 1..n {
            if !edges.contains(&(i, j)) && rng.gen_bool(extra.min(1.0)) {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Sparse initial state: 1 to `max(1, n / 2)` nodes with integer weights
/// 1..=4 in tenths.
fn random_x0(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let k = rng.gen_range(1..=(n / 2).max(1));
    let mut nodes: Vec<usize> = (0..n).collect();
    nodes.shuffle(rng);
    let mut x0 = vec![0.0; n];
    for &i in &nodes[..k] {
        x0[i] = f64::from(rng.gen_range(1..=4u8)) / 10.0;
    }
    x0
}

fn build(n: usize, edges: Vec<(usize, usize)>, a: Vec<f64>, c: Vec<f64>, x0: Vec<f64>) -> Instance {
    let graph = ChoiceGraph::new(n, edges).expect("generated edges are valid");
    let payoffs = PayoffSpec::quadratic(&a, &c).expect("generated payoffs are valid");
    let x0 = PopulationState::from_fractions(x0).expect("generated state is valid");
    Instance::new(graph, payoffs, x0).expect("generated sizes agree")
}

pub fn generate(seed: u64, nodes: usize, family: Family) -> Instance {
    assert!(nodes >= 1, "instances need at least one node");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = nodes;
    match family {
        Family::Random => {
            let edges = random_edges(&mut rng, n);
            let a = (0..n).map(|_| round3(rng.gen_range(0.5..3.0))).collect();
            let c = (0..n).map(|_| round3(rng.gen_range(0.5..2.0))).collect();
            let x0 = random_x0(&mut rng, n);
            build(n, edges, a, c, x0)
        }
        Family::Chain => {
            let edges = (1..n).map(|i| (i - 1, i)).collect();
            let mut a: Vec<f64> = (0..n).map(|_| round3(rng.gen_range(0.5..3.0))).collect();
            a.sort_by(f64::total_cmp);
            let c = (0..n).map(|_| round3(rng.gen_range(0.5..2.0))).collect();
            let x0 = random_x0(&mut rng, n);
            build(n, edges, a, c, x0)
        }
        Family::Qch => {
            let edges = random_edges(&mut rng, n);
            let root = rng.gen_range(0..n);
            let dist = bfs_distances(n, &edges, root);
            // each BFS layer sits strictly below the one before it
            let a = dist
                .iter()
                .map(|&d| round3(3.0 - 0.4 * d as f64 - rng.gen_range(0.0..0.3)))
                .collect();
            let c = (0..n).map(|_| round3(rng.gen_range(0.5..2.0))).collect();
            let x0 = random_x0(&mut rng, n);
            build(n, edges, a, c, x0)
        }
    }
}

fn bfs_distances(n: usize, edges: &[(usize, usize)], root: usize) -> Vec<usize> {
    let mut adj = vec![Vec::new(); n];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut dist = vec![usize::MAX; n];
    dist[root] = 0;
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

const FIXTURES: &[(&str, &str)] = &[
    ("ssd-beats-nbrd", include_str!("../fixtures/ssd-beats-nbrd.json")),
    ("nbrd-beats-nrpm", include_str!("../fixtures/nbrd-beats-nrpm.json")),
    ("qch-example", include_str!("../fixtures/qch-example.json")),
    ("eighteen-node", include_str!("../fixtures/eighteen-node.json")),
];

pub fn scenario_names() -> impl Iterator<Item = &'static str> {
    FIXTURES.iter().map(|(name, _)| *name)
}

pub fn scenario(name: &str) -> Result<Instance, InstanceError> {
    let (_, text) = FIXTURES
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| InstanceError::UnknownScenario(name.to_string()))?;
    Instance::from_json(text)
}
