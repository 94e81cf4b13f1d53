//! Flow-balanced population dynamics `x' = A * delta(x)`.
//!
//! Three velocity fields share one fixed-step integrator:
//! stratified Smith dynamics (SSD), nodal best response (NBRD) and network
//! restricted payoff maximization (NRPM).

mod allocation;
mod integrate;
mod nbrd;
mod nrpm;
mod ssd;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::FlowDigraph;

pub use allocation::{
    solve_allocation, solve_allocation_with, Allocation, AllocationOptions, AllocationProblem,
    AllocationSource,
};
pub use integrate::{simulate, IntegratorConfig, Simulation, StepDiagnostics, StepReport, Trajectory};
pub use nbrd::{nbrd_delta, nbrd_response, NbrdResponse};
pub use nrpm::{nrpm_response, nrpm_velocity, NrpmResponse};
pub use ssd::ssd_delta;

/// Nonnegative flow rate per arc of a [`FlowDigraph`].
#[derive(Debug, Clone, PartialEq)]
pub struct ArcFlows {
    node_count: usize,
    arcs: Vec<(usize, usize)>,
    delta: Vec<f64>,
}

impl ArcFlows {
    pub fn zeros(flow: &FlowDigraph) -> Self {
        let arcs: Vec<_> = flow.arcs().collect();
        Self {
            node_count: flow.node_count(),
            delta: vec![0.0; arcs.len()],
            arcs,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn len(&self) -> usize {
        self.arcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arcs.is_empty()
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        self.arcs.binary_search(&(i, j)).ok()
    }

    /// Sets the flow on arc `(i, j)`.
    ///
    /// # Panics
    /// If the arc is not part of the digraph.
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("({i}, {j}) is not an arc"));
        self.delta[k] = value;
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.position(i, j).map(|k| self.delta[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.arcs.iter().copied().zip(self.delta.iter().copied())
    }

    /// Node velocity `A * delta`: each flow leaves its tail and enters its head.
    pub fn velocity(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.node_count];
        for (&(i, j), &d) in self.arcs.iter().zip(&self.delta) {
            v[i] -= d;
            v[j] += d;
        }
        v
    }
}

/// The three revision protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynamicsKind {
    Ssd,
    Nbrd,
    Nrpm,
}

impl DynamicsKind {
    pub const ALL: [DynamicsKind; 3] = [DynamicsKind::Ssd, DynamicsKind::Nbrd, DynamicsKind::Nrpm];

    pub fn name(self) -> &'static str {
        match self {
            DynamicsKind::Ssd => "ssd",
            DynamicsKind::Nbrd => "nbrd",
            DynamicsKind::Nrpm => "nrpm",
        }
    }
}

impl fmt::Display for DynamicsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DynamicsKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ssd" => Ok(DynamicsKind::Ssd),
            "nbrd" => Ok(DynamicsKind::Nbrd),
            "nrpm" => Ok(DynamicsKind::Nrpm),
            other => Err(format!("unknown dynamics '{other}' (expected ssd, nbrd or nrpm)")),
        }
    }
}
