//! Quantum Merkle trees over b-qubit node registers: commit and path-wise decommit.
//!
//! Nodes are labelled 1..=2ℓ−1 with parent ⌊u/2⌋ and children 2u, 2u+1; leaves are ℓ..=2ℓ−1.
//! Node u occupies qubits (u−1)·b .. u·b of the joint register; leaf ℓ+q stores witness
//! qubit q in its first position.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::Rng;

use crate::haar::{HaarError, OracleHandle};
use crate::qsim::{measure, Povm, PureState, QsimError, QuantumState, MAX_PURE_QUBITS};
use crate::C64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MerkleError {
    #[error("leaf count {0} is not a power of two")]
    LeafCount(usize),
    #[error("register width b must be positive")]
    Width,
    #[error("node {node} outside 1..={max}")]
    Node { node: usize, max: usize },
    #[error("node {0} is not a leaf")]
    NotLeaf(usize),
    #[error("oracle acts on {got} qubits, tree needs λ = 3b = {expected}")]
    Lambda { expected: usize, got: usize },
    #[error("witness has {got} qubits, tree has {expected} leaves")]
    Witness { expected: usize, got: usize },
    #[error("register of node {0} is not held by the verifier")]
    MissingRegister(usize),
    #[error("tree needs {0} qubits, above the simulator capacity")]
    Capacity(usize),
    #[error(transparent)]
    Haar(#[from] HaarError),
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

/// Shape of T_ℓ with b-qubit registers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TreeLayout {
    ell: usize,
    b: usize,
}

impl TreeLayout {
    pub fn new(ell: usize, b: usize) -> Result<Self, MerkleError> {
        if ell == 0 || !ell.is_power_of_two() {
            return Err(MerkleError::LeafCount(ell));
        }
        if b == 0 {
            return Err(MerkleError::Width);
        }
        Ok(Self { ell, b })
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn lambda(&self) -> usize {
        3 * self.b
    }

    pub fn num_nodes(&self) -> usize {
        2 * self.ell - 1
    }

    pub fn num_qubits(&self) -> usize {
        self.num_nodes() * self.b
    }

    pub fn check(&self, u: usize) -> Result<(), MerkleError> {
        if u == 0 || u > self.num_nodes() {
            return Err(MerkleError::Node { node: u, max: self.num_nodes() });
        }
        Ok(())
    }

    pub fn is_leaf(&self, u: usize) -> bool {
        u >= self.ell && u <= self.num_nodes()
    }

    /// Qubits of node u's register.
    pub fn register(&self, u: usize) -> Vec<usize> {
        ((u - 1) * self.b..u * self.b).collect()
    }

    /// Leaf holding witness qubit q (0-based).
    pub fn leaf(&self, q: usize) -> usize {
        self.ell + q
    }

    /// The qubit carrying the witness qubit of leaf u.
    pub fn leaf_qubit(&self, u: usize) -> usize {
        (u - 1) * self.b
    }

    /// G's targets when producing node u: registers of 2u, 2u+1, then u.
    pub fn gate_targets(&self, u: usize) -> Vec<usize> {
        let mut t = self.register(2 * u);
        t.extend(self.register(2 * u + 1));
        t.extend(self.register(u));
        t
    }
}

/// P_u: u and all its ancestors.
pub fn path_set(u: usize, ell: usize) -> Result<BTreeSet<usize>, MerkleError> {
    let layout = TreeLayout::new(ell, 1)?;
    layout.check(u)?;
    let mut out = BTreeSet::new();
    let mut v = u;
    while v >= 1 {
        out.insert(v);
        v /= 2;
    }
    Ok(out)
}

/// P_S = ∪ P_u.
pub fn path_set_of(set: &BTreeSet<usize>, ell: usize) -> Result<BTreeSet<usize>, MerkleError> {
    let mut out = BTreeSet::new();
    for &u in set {
        out.extend(path_set(u, ell)?);
    }
    Ok(out)
}

/// R_S: path nodes of S together with their in-range children.
pub fn r_set_of(set: &BTreeSet<usize>, ell: usize) -> Result<BTreeSet<usize>, MerkleError> {
    let max = 2 * ell - 1;
    let mut out = BTreeSet::new();
    for v in path_set_of(set, ell)? {
        out.insert(v);
        out.extend([2 * v, 2 * v + 1].into_iter().filter(|&c| c <= max));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Owner {
    Prover,
    Verifier,
}

/// The joint tree register plus who holds each node and which leaves are open.
#[derive(Debug, Clone)]
pub struct CommitmentRegisters {
    layout: TreeLayout,
    state: PureState,
    owners: Vec<Owner>,
    opened: BTreeSet<usize>,
}

impl CommitmentRegisters {
    /// Wraps an arbitrary joint state, all nodes held by the prover.
    pub fn from_state(layout: TreeLayout, state: PureState) -> Result<Self, MerkleError> {
        if state.num_qubits() != layout.num_qubits() {
            return Err(QsimError::QubitMismatch { left: layout.num_qubits(), right: state.num_qubits() }.into());
        }
        Ok(Self { layout, state, owners: alloc::vec![Owner::Prover; layout.num_nodes()], opened: BTreeSet::new() })
    }

    pub fn layout(&self) -> &TreeLayout {
        &self.layout
    }

    pub fn state(&self) -> &PureState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut PureState {
        &mut self.state
    }

    pub fn owner(&self, u: usize) -> Owner {
        self.owners[u - 1]
    }

    /// Hands the listed nodes to the verifier.
    pub fn send(&mut self, nodes: &BTreeSet<usize>) -> Result<(), MerkleError> {
        for &u in nodes {
            self.layout.check(u)?;
            self.owners[u - 1] = Owner::Verifier;
        }
        Ok(())
    }

    pub fn verifier_nodes(&self) -> BTreeSet<usize> {
        (1..=self.layout.num_nodes()).filter(|&u| self.owner(u) == Owner::Verifier).collect()
    }

    /// Leaves opened so far.
    pub fn opened(&self) -> &BTreeSet<usize> {
        &self.opened
    }

    /// Witness qubits carried by `leaves`, in order.
    pub fn leaf_qubits(&self, leaves: &[usize]) -> Vec<usize> {
        leaves.iter().map(|&u| self.layout.leaf_qubit(u)).collect()
    }
}

/// Commitment: σ into the leaves, then G on (2u, 2u+1, u) for u = ℓ−1 down to 1.
pub fn commit(sigma: &PureState, layout: TreeLayout, oracle: &mut OracleHandle) -> Result<CommitmentRegisters, MerkleError> {
    if oracle.lambda() != layout.lambda() {
        return Err(MerkleError::Lambda { expected: layout.lambda(), got: oracle.lambda() });
    }
    if sigma.num_qubits() != layout.ell() {
        return Err(MerkleError::Witness { expected: layout.ell(), got: sigma.num_qubits() });
    }
    let total = layout.num_qubits();
    if total > MAX_PURE_QUBITS {
        return Err(MerkleError::Capacity(total));
    }
    let positions: Vec<usize> = (0..layout.ell()).map(|q| total - 1 - layout.leaf_qubit(layout.leaf(q))).collect();
    let mut amps = alloc::vec![C64::new(0.0, 0.0); 1 << total];
    let ell = layout.ell();
    for (x, &a) in sigma.amplitudes().iter().enumerate() {
        let idx: usize = (0..ell).filter(|q| x >> (ell - 1 - q) & 1 == 1).map(|q| 1usize << positions[q]).sum();
        amps[idx] = a;
    }
    let mut state = PureState::from_amplitudes(amps)?;
    for u in (1..ell).rev() {
        let g = oracle.gate(&layout.gate_targets(u), false)?;
        state.apply_gate_mut(&g)?;
    }
    CommitmentRegisters::from_state(layout, state)
}

/// Internal nodes uncomputed when opening `s_new` after `s_old`, ascending.
pub fn decommit_schedule(
    layout: &TreeLayout,
    s_old: &BTreeSet<usize>,
    s_new: &BTreeSet<usize>,
) -> Result<Vec<usize>, MerkleError> {
    for &u in s_old.iter().chain(s_new) {
        layout.check(u)?;
        if !layout.is_leaf(u) {
            return Err(MerkleError::NotLeaf(u));
        }
    }
    let old = path_set_of(s_old, layout.ell())?;
    let new = path_set_of(s_new, layout.ell())?;
    Ok(new.difference(&old).copied().filter(|&u| u < layout.ell()).collect())
}

fn check_registers(regs: &CommitmentRegisters, s_old: &BTreeSet<usize>, s_new: &BTreeSet<usize>) -> Result<(), MerkleError> {
    let ell = regs.layout.ell();
    let mut needed = r_set_of(s_new, ell)?;
    needed.extend(r_set_of(s_old, ell)?);
    match needed.into_iter().find(|&u| regs.owner(u) != Owner::Verifier) {
        Some(u) => Err(MerkleError::MissingRegister(u)),
        None => Ok(()),
    }
}

/// Exact opening: the probability that every node register measures 0^b, and the
/// post-state on that branch (⊥ carries the remaining probability).
#[derive(Debug, Clone)]
pub struct ExactOpening {
    pub accept_probability: f64,
    /// Per uncomputed node, the conditional probability of reading 0^b.
    pub node_zero_probabilities: Vec<(usize, f64)>,
    pub registers: Option<CommitmentRegisters>,
}

pub fn decommit_exact(
    regs: &CommitmentRegisters,
    s_old: &BTreeSet<usize>,
    s_new: &BTreeSet<usize>,
    oracle: &mut OracleHandle,
) -> Result<ExactOpening, MerkleError> {
    check_registers(regs, s_old, s_new)?;
    let layout = regs.layout;
    let mut cur = regs.clone();
    let mut p = 1.0;
    let mut per_node = Vec::new();
    for u in decommit_schedule(&layout, s_old, s_new)? {
        let g = oracle.gate(&layout.gate_targets(u), true)?;
        cur.state.apply_gate_mut(&g)?;
        let zero = cur.state.branches(&Povm::computational(layout.register(u)))?.swap_remove(0);
        per_node.push((u, zero.probability));
        p *= zero.probability;
        match zero.state {
            Some(s) => cur.state = s,
            None => return Ok(ExactOpening { accept_probability: 0.0, node_zero_probabilities: per_node, registers: None }),
        }
    }
    cur.opened.extend(s_new.iter().copied());
    Ok(ExactOpening { accept_probability: p, node_zero_probabilities: per_node, registers: Some(cur) })
}

/// Result of a sampled opening.
#[derive(Debug, Clone)]
pub enum Opening {
    Opened(CommitmentRegisters),
    /// Some node register read a nonzero string.
    Bottom { node: usize },
}

/// Sampled opening.
pub fn decommit<R: Rng + ?Sized>(
    regs: &CommitmentRegisters,
    s_old: &BTreeSet<usize>,
    s_new: &BTreeSet<usize>,
    oracle: &mut OracleHandle,
    rng: &mut R,
) -> Result<Opening, MerkleError> {
    check_registers(regs, s_old, s_new)?;
    let layout = regs.layout;
    let mut cur = regs.clone();
    for u in decommit_schedule(&layout, s_old, s_new)? {
        let g = oracle.gate(&layout.gate_targets(u), true)?;
        cur.state.apply_gate_mut(&g)?;
        let (z, post, _) = measure(&cur.state, &Povm::computational(layout.register(u)), rng)?;
        if z != 0 {
            return Ok(Opening::Bottom { node: u });
        }
        cur.state = post;
    }
    cur.opened.extend(s_new.iter().copied());
    Ok(Opening::Opened(cur))
}
