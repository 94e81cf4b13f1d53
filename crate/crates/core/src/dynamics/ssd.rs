use crate::dynamics::ArcFlows;
use crate::model::{FlowDigraph, PayoffSpec, PopulationState};

/// Stratified Smith dynamics arc flows.
///
/// For arc `(i, j)` the strata of `i` above `y_ij = clip(u_i^-1(u_j(x_j)), 0, x_i)`
/// earn less than the entry density of `j`; the flow is their total payoff
/// deficit `[u_j(x_j)(x_i - y_ij) - (p_i(x_i) - p_i(y_ij))]_+`.
pub fn ssd_delta(x: &PopulationState, flow: &FlowDigraph, payoffs: &PayoffSpec) -> ArcFlows {
    ssd_flows(x.x(), flow, payoffs)
}

pub(crate) fn ssd_flows(x: &[f64], flow: &FlowDigraph, payoffs: &PayoffSpec) -> ArcFlows {
    let mut out = ArcFlows::zeros(flow);
    for (k, (i, j)) in flow.arcs().enumerate() {
        let xi = x[i].max(0.0);
        if xi == 0.0 {
            continue;
        }
        let pi = payoffs.node(i);
        let entry = payoffs.density(j, x[j].max(0.0));
        let y = pi.inverse_density(entry).clamp(0.0, xi);
        let d = entry * (xi - y) - (pi.cumulative(xi) - pi.cumulative(y));
        out.delta[k] = d.max(0.0);
    }
    out
}
