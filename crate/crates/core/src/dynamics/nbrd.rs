use crate::dynamics::ArcFlows;
use crate::model::{FlowDigraph, PayoffSpec, PopulationState};
use crate::waterfill::fill_with_bases;

/// Best responses of every node over its closed out-neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct NbrdResponse {
    /// `d*_ij` for every arc.
    pub flows: ArcFlows,
    /// `d*_ii`, the part of `x_i` that stays.
    pub stay: Vec<f64>,
    /// Water level of each node's fill.
    pub levels: Vec<f64>,
}

/// Nodal best response: node `i` redistributes its own mass over itself
/// (starting empty) and its out-neighbors (holding their current masses).
pub fn nbrd_response(x: &PopulationState, flow: &FlowDigraph, payoffs: &PayoffSpec) -> NbrdResponse {
    nbrd_flows(x.x(), flow, payoffs)
}

/// Arc flows of [`nbrd_response`].
pub fn nbrd_delta(x: &PopulationState, flow: &FlowDigraph, payoffs: &PayoffSpec) -> ArcFlows {
    nbrd_flows(x.x(), flow, payoffs).flows
}

pub(crate) fn nbrd_flows(x: &[f64], flow: &FlowDigraph, payoffs: &PayoffSpec) -> NbrdResponse {
    let n = flow.node_count();
    let mut flows = ArcFlows::zeros(flow);
    let mut stay = vec![0.0; n];
    let mut levels = vec![f64::NAN; n];
    let mut dests = Vec::new();
    let mut bases = Vec::new();
    for i in 0..n {
        let xi = x[i].max(0.0);
        let outs = flow.out_neighbors(i);
        if outs.is_empty() {
            stay[i] = xi;
            levels[i] = payoffs.density(i, xi);
            continue;
        }
        dests.clear();
        bases.clear();
        dests.push(i);
        bases.push(0.0);
        for &j in outs {
            dests.push(j);
            bases.push(x[j].max(0.0));
        }
        let (level, amounts) = fill_with_bases(payoffs, &dests, &bases, xi);
        levels[i] = level;
        stay[i] = amounts[0];
        for (&j, &d) in outs.iter().zip(&amounts[1..]) {
            flows.set(i, j, d);
        }
    }
    NbrdResponse { flows, stay, levels }
}
