use thiserror::Error;

/// Errors raised while building or validating model objects.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("graph must have at least one node")]
    EmptyGraph,
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),
    #[error("payoff for node {node}: {reason}")]
    InvalidPayoff { node: usize, reason: String },
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("state entry {index} is {value}, must be finite and nonnegative")]
    NegativeMass { index: usize, value: f64 },
    #[error("state sums to {sum}, total mass is {rho}")]
    MassMismatch { sum: f64, rho: f64 },
    #[error("total mass {0} must be finite and nonnegative")]
    InvalidRho(f64),
}

/// Errors from the water-filling solver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaterfillError {
    #[error("node set is empty")]
    EmptyNodeSet,
    #[error("mass {0} must be finite and nonnegative")]
    NegativeMass(f64),
    #[error("node {0} has no payoff")]
    UnknownNode(usize),
}

/// Errors from the velocity fields, the allocation solver and the integrator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("allocation solver did not converge: KKT residual {residual:e} > {tol:e} after {iterations} iterations")]
    NonConvergence {
        residual: f64,
        tol: f64,
        iterations: usize,
    },
    #[error("integration diverged at t = {time}: x[{node}] = {value:e}")]
    IntegrationDiverged { time: f64, node: usize, value: f64 },
    #[error("invalid allocation problem: {0}")]
    InvalidProblem(String),
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Errors from the hill / partition machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HillsError {
    #[error("node {0} is not part of the graph view")]
    NodeNotFound(usize),
}

/// Errors from the bounds pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error(
        "lower bound needs {required} constraint subsets ({variables} variables, {inequalities} inequalities, {super_nodes} super nodes); budget is {budget}"
    )]
    TooLargeForExactEnumeration {
        required: u128,
        budget: u128,
        variables: usize,
        inequalities: usize,
        super_nodes: usize,
    },
    #[error("super-node caps admit no feasible allocation (capacity {capacity} < mass {mass})")]
    InfeasibleCaps { capacity: f64, mass: f64 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Waterfill(#[from] WaterfillError),
}

/// Errors while reading or writing instance files.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum InstanceError {
    #[error("malformed instance JSON: {0}")]
    Parse(String),
    #[error("invalid instance: {0}")]
    Model(#[from] ModelError),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),
}
