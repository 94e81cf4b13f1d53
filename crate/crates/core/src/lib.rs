//! Population dynamics on choice networks with stratified payoffs.

pub mod bounds;
pub mod dynamics;
pub mod error;
pub mod hills;
pub mod instance;
pub mod model;
pub mod reduction;
pub mod scenarios;
pub mod waterfill;

pub use bounds::{compute_bounds, BoundsReport};
pub use dynamics::{simulate, ArcFlows, DynamicsKind, IntegratorConfig, Trajectory};
pub use error::{BoundsError, DynamicsError, HillsError, InstanceError, ModelError, WaterfillError};
pub use instance::Instance;
pub use model::{
    arcs_from_edges, is_nash, social_utility, ChoiceGraph, FlowDigraph, NodePayoff, PayoffSpec,
    PopulationState,
};
pub use reduction::{reduce_graph, ReducedGraph};
pub use waterfill::{solve_p1, WaterfillResult};
