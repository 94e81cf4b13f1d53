//! Certified bounds on the steady-state social utility.

mod lower;

use serde::Serialize;
use serde_json::{json, Value};

use crate::dynamics::{solve_allocation_with, AllocationOptions, AllocationProblem, AllocationSource};
use crate::error::BoundsError;
use crate::hills::{mac_partition, mac_super_graph, ComponentKind, MacPartition, SuperGraph};
use crate::model::{utility_of, ChoiceGraph, PayoffSpec, PopulationState};
use crate::reduction::{eventually_empty_nodes, reduce_graph, ReducedGraph};

pub use lower::{lower_bound, lower_bound_with, LowerBound, LowerBoundMethod, LowerBoundOptions, SuperFlow};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpperBound {
    pub u_max: f64,
    /// Optimal node masses.
    pub w: Vec<f64>,
    pub kkt_residual: f64,
}

/// Best redistribution when every unit of initial mass may move anywhere
/// it can reach in the ICRG.
pub fn upper_bound(
    red: &ReducedGraph,
    x0: &PopulationState,
    payoffs: &PayoffSpec,
) -> Result<UpperBound, BoundsError> {
    upper_bound_with(red, x0, payoffs, AllocationOptions { tol: 1e-11, max_iters: 100_000 })
}

pub fn upper_bound_with(
    red: &ReducedGraph,
    x0: &PopulationState,
    payoffs: &PayoffSpec,
    opts: AllocationOptions,
) -> Result<UpperBound, BoundsError> {
    let n = red.node_count();
    let sources = (0..n)
        .filter(|&i| x0.x()[i] > 0.0)
        .map(|i| {
            let reach = red.digraph.reachable_from([i]);
            let mut destinations = vec![i];
            destinations.extend((0..n).filter(|&j| j != i && reach[j]));
            AllocationSource {
                node: i,
                budget: x0.x()[i],
                destinations,
            }
        })
        .collect();
    let problem = AllocationProblem::new(payoffs, vec![0.0; n], sources)?;
    let sol = solve_allocation_with(&problem, opts, None)?;
    Ok(UpperBound {
        u_max: utility_of(&sol.received, payoffs),
        w: sol.received,
        kkt_residual: sol.kkt_residual,
    })
}

/// Most mass each component can hold at steady state.
///
/// With `M` the eventually empty members and `a` their largest MPDP, the cap
/// is 0 when all members are in `M`, `min(rho, sum_{i not in M} [u_i^-1(a)]_+)`
/// when some are, and `rho` when none are.
pub fn rho_max_caps(part: &MacPartition, red: &ReducedGraph, payoffs: &PayoffSpec) -> Vec<f64> {
    let empty = eventually_empty_nodes(red);
    part.components
        .iter()
        .map(|c| {
            let doomed: Vec<usize> = c.nodes.iter().copied().filter(|i| empty.contains(i)).collect();
            if doomed.is_empty() {
                red.rho
            } else if doomed.len() == c.nodes.len() {
                0.0
            } else {
                let a_max = doomed
                    .iter()
                    .map(|&i| payoffs.node(i).mpdp())
                    .fold(f64::NEG_INFINITY, f64::max);
                let room: f64 = c
                    .nodes
                    .iter()
                    .filter(|i| !empty.contains(i))
                    .map(|&i| payoffs.node(i).inverse_density(a_max).max(0.0))
                    .sum();
                room.min(red.rho)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsOptions {
    pub lower: LowerBoundOptions,
    pub allocation: AllocationOptions,
}

impl Default for BoundsOptions {
    fn default() -> Self {
        Self {
            lower: LowerBoundOptions::default(),
            allocation: AllocationOptions {
                tol: 1e-11,
                max_iters: 100_000,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub u_max: f64,
    pub u_min: f64,
    pub icrg: ReducedGraph,
    pub partition: MacPartition,
    pub super_graph: SuperGraph,
    pub caps: Vec<f64>,
    pub upper: UpperBound,
    pub lower: LowerBound,
}

impl BoundsReport {
    /// Report JSON with 1-based node and super-node ids.
    pub fn to_json(&self) -> Value {
        let one = |v: &mut dyn Iterator<Item = usize>| v.map(|i| i + 1).collect::<Vec<_>>();
        let super_nodes: Vec<Value> = self
            .super_graph
            .nodes
            .iter()
            .enumerate()
            .map(|(q, s)| {
                json!({
                    "id": q + 1,
                    "members": one(&mut s.members.iter().copied()),
                    "kind": match s.kind {
                        ComponentKind::Attractive => "attractive",
                        ComponentKind::NonAttractive => "non-attractive",
                    },
                    "mass": s.mass,
                    "cap": self.caps[q],
                })
            })
            .collect();
        json!({
            "u_max": self.u_max,
            "u_min": self.u_min,
            "rho": self.icrg.rho,
            "icrg": {
                "kept_nodes": one(&mut self.icrg.kept_nodes.iter().copied()),
                "arcs": self.icrg.digraph.arcs().map(|(i, j)| [i + 1, j + 1]).collect::<Vec<_>>(),
                "theta": self.icrg.theta,
                "eventually_empty": one(&mut eventually_empty_nodes(&self.icrg).into_iter()),
            },
            "super_nodes": super_nodes,
            "super_arcs": self.super_graph.arcs.iter().map(|&(q, r)| [q + 1, r + 1]).collect::<Vec<_>>(),
            "witness": {
                "upper": { "w": self.upper.w, "kkt_residual": self.upper.kkt_residual },
                "lower": {
                    "method": self.lower.method,
                    "xi": self.lower.xi,
                    "flows": self.lower.flows.iter().map(|f| json!({
                        "from": f.from + 1, "to": f.to + 1, "amount": f.amount,
                    })).collect::<Vec<_>>(),
                },
            },
        })
    }
}

pub fn compute_bounds(
    g: &ChoiceGraph,
    x0: &PopulationState,
    payoffs: &PayoffSpec,
) -> Result<BoundsReport, BoundsError> {
    compute_bounds_with(g, x0, payoffs, BoundsOptions::default())
}

/// Reduce, partition, condense, cap, then solve both bound problems.
pub fn compute_bounds_with(
    g: &ChoiceGraph,
    x0: &PopulationState,
    payoffs: &PayoffSpec,
    opts: BoundsOptions,
) -> Result<BoundsReport, BoundsError> {
    let icrg = reduce_graph(&g.to_flow(), x0, payoffs);
    let mpdp = payoffs.mpdp();
    let partition = mac_partition(&icrg, &mpdp);
    let super_graph = mac_super_graph(&partition, &icrg, x0);
    let caps = rho_max_caps(&partition, &icrg, payoffs);
    let lower = lower_bound_with(&super_graph, &caps, payoffs, opts.lower)?;
    let upper = upper_bound_with(&icrg, x0, payoffs, opts.allocation)?;
    Ok(BoundsReport {
        u_max: upper.u_max,
        u_min: lower.u_min,
        icrg,
        partition,
        super_graph,
        caps,
        upper,
        lower,
    })
}
