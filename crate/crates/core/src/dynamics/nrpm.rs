use crate::dynamics::{
    solve_allocation_with, Allocation, AllocationOptions, AllocationProblem, AllocationSource,
    ArcFlows,
};
use crate::error::DynamicsError;
use crate::model::{FlowDigraph, PayoffSpec, PopulationState};

/// Jointly optimal one-shot redistribution over closed out-neighborhoods.
#[derive(Debug, Clone, PartialEq)]
pub struct NrpmResponse {
    /// Optimal post-move state `z*`.
    pub target: Vec<f64>,
    /// `d*_ij` for every arc.
    pub flows: ArcFlows,
    pub allocation: Allocation,
}

/// Solves the joint allocation from `x`. `warm` is a previous
/// `allocation.flows` on the same digraph.
pub fn nrpm_response(
    x: &[f64],
    flow: &FlowDigraph,
    payoffs: &PayoffSpec,
    opts: AllocationOptions,
    warm: Option<&[Vec<f64>]>,
) -> Result<NrpmResponse, DynamicsError> {
    let n = flow.node_count();
    let sources = (0..n)
        .map(|i| {
            let mut destinations = Vec::with_capacity(flow.out_neighbors(i).len() + 1);
            destinations.push(i);
            destinations.extend_from_slice(flow.out_neighbors(i));
            AllocationSource {
                node: i,
                budget: x[i].max(0.0),
                destinations,
            }
        })
        .collect();
    let problem = AllocationProblem::new(payoffs, vec![0.0; n], sources)?;
    let allocation = solve_allocation_with(&problem, opts, warm)?;
    let mut flows = ArcFlows::zeros(flow);
    for (src, f) in problem.sources().iter().zip(&allocation.flows) {
        for (&j, &v) in src.destinations[1..].iter().zip(&f[1..]) {
            flows.set(src.node, j, v);
        }
    }
    Ok(NrpmResponse {
        target: allocation.received.clone(),
        flows,
        allocation,
    })
}

/// NRPM velocity `z* - x`.
pub fn nrpm_velocity(
    x: &PopulationState,
    flow: &FlowDigraph,
    payoffs: &PayoffSpec,
) -> Result<Vec<f64>, DynamicsError> {
    let r = nrpm_response(x.x(), flow, payoffs, AllocationOptions::default(), None)?;
    Ok(r.target.iter().zip(x.x()).map(|(z, x)| z - x).collect())
}
