//! JSON instance files.
//!
//! ```json
//! {"n": 2, "k": 1, "gamma": 1,
//!  "subsets": [[0], [1]],
//!  "circuits": [[{"gate": "cnot", "wires": [0, 1]}], [{"gate": "h", "wires": [1]}]]}
//! ```
//! Qubit and wire indices are 0-based. Wires 0..k are the data qubits of the check, k..k+γ its ancillas.

use std::path::Path;

use qzk_core::qsat::{Gate, QsatInstance};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateName {
    Cnot,
    H,
    P,
    T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateSpec {
    pub gate: GateName,
    pub wires: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub n: usize,
    /// Optional; must match the number of subsets when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub k: usize,
    pub gamma: usize,
    pub subsets: Vec<Vec<usize>>,
    pub circuits: Vec<Vec<GateSpec>>,
}

impl GateSpec {
    fn to_gate(&self) -> Result<Gate, CliError> {
        let arity = if self.gate == GateName::Cnot { 2 } else { 1 };
        if self.wires.len() != arity {
            return Err(CliError::Instance(format!("{:?} takes {arity} wire(s), got {}", self.gate, self.wires.len())));
        }
        let w = &self.wires;
        Ok(match self.gate {
            GateName::Cnot => Gate::Cnot { control: w[0], target: w[1] },
            GateName::H => Gate::H(w[0]),
            GateName::P => Gate::P(w[0]),
            GateName::T => Gate::T(w[0]),
        })
    }

    fn from_gate(g: &Gate) -> Self {
        let (gate, wires) = match *g {
            Gate::Cnot { control, target } => (GateName::Cnot, vec![control, target]),
            Gate::H(w) => (GateName::H, vec![w]),
            Gate::P(w) => (GateName::P, vec![w]),
            Gate::T(w) => (GateName::T, vec![w]),
        };
        Self { gate, wires }
    }
}

impl InstanceFile {
    pub fn to_instance(&self) -> Result<QsatInstance, CliError> {
        if let Some(m) = self.m {
            if m != self.subsets.len() {
                return Err(CliError::Instance(format!("m = {m} but {} subsets given", self.subsets.len())));
            }
        }
        let circuits = self
            .circuits
            .iter()
            .map(|c| c.iter().map(GateSpec::to_gate).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        QsatInstance::new(self.n, self.k, self.gamma, self.subsets.clone(), circuits).map_err(|e| CliError::Instance(e.to_string()))
    }

    pub fn from_instance(inst: &QsatInstance) -> Self {
        Self {
            n: inst.n(),
            m: Some(inst.m()),
            k: inst.k(),
            gamma: inst.gamma(),
            subsets: inst.subsets().to_vec(),
            circuits: inst.circuits().iter().map(|c| c.iter().map(GateSpec::from_gate).collect()).collect(),
        }
    }
}

pub fn parse_instance(text: &str) -> Result<QsatInstance, CliError> {
    let file: InstanceFile = serde_json::from_str(text).map_err(|e| CliError::Instance(e.to_string()))?;
    file.to_instance()
}

pub fn load_instance(path: &Path) -> Result<QsatInstance, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
    let file: InstanceFile = serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_owned(), source })?;
    file.to_instance()
}
