//! Instance files.
//!
//! ```json
//! {"nodes": 3, "edges": [[1, 2], [2, 3]],
//!  "payoffs": [{"family": "quadratic", "a": 1.0, "c": 1.0}, ...],
//!  "x0": [0.5, 0.0, 0.5], "rho": 1.0}
//! ```
//!
//! Node ids in files are 1-based. An optional `"note"` string is carried
//! through unchanged.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{InstanceError, ModelError};
use crate::model::{ChoiceGraph, FlowDigraph, NodePayoff, PayoffSpec, PopulationState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    nodes: usize,
    edges: Vec<[usize; 2]>,
    payoffs: Vec<NodePayoff>,
    x0: Vec<f64>,
    rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub graph: ChoiceGraph,
    pub payoffs: PayoffSpec,
    pub x0: PopulationState,
    pub note: Option<String>,
}

impl Instance {
    pub fn new(graph: ChoiceGraph, payoffs: PayoffSpec, x0: PopulationState) -> Result<Self, ModelError> {
        let n = graph.node_count();
        for len in [payoffs.len(), x0.len()] {
            if len != n {
                return Err(ModelError::LengthMismatch { expected: n, got: len });
            }
        }
        Ok(Self {
            graph,
            payoffs,
            x0,
            note: None,
        })
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn flow(&self) -> FlowDigraph {
        self.graph.to_flow()
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| InstanceError::Parse(e.to_string()))?;
        let mut edges = Vec::with_capacity(file.edges.len());
        for [i, j] in file.edges {
            if i == 0 || j == 0 {
                return Err(InstanceError::Parse(format!(
                    "edge [{i}, {j}]: node ids start at 1"
                )));
            }
            edges.push((i - 1, j - 1));
        }
        let graph = ChoiceGraph::new(file.nodes, edges)?;
        let payoffs = PayoffSpec::new(file.payoffs)?;
        let x0 = PopulationState::new(file.x0, file.rho)?;
        let mut inst = Self::new(graph, payoffs, x0)?;
        inst.note = file.note;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            note: self.note.clone(),
            nodes: self.graph.node_count(),
            edges: self.graph.edges().iter().map(|&(i, j)| [i + 1, j + 1]).collect(),
            payoffs: self.payoffs.nodes().to_vec(),
            x0: self.x0.x().to_vec(),
            rho: self.x0.rho(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("instance serializes");
        s.push('\n');
        s
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, InstanceError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| InstanceError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), InstanceError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| InstanceError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}
