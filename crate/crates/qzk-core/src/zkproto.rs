//! The commit-and-open protocol: a prover commits to a witness in a quantum Merkle tree,
//! then opens exactly the leaves an adaptive local verifier asks for, round by round.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::haar::{HaarError, OracleHandle};
use crate::linalg::Matrix;
use crate::merkle::{commit, decommit, decommit_exact, r_set_of, CommitmentRegisters, MerkleError, Opening, Owner, TreeLayout};
use crate::qsim::{measure, GateOp, Povm, PureState, QsimError, QuantumState};
use crate::C64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ZkError {
    #[error("round {round}: query set overlaps an earlier round")]
    Overlap { round: usize },
    #[error("round {round}: {size} qubits queried, budget {budget}")]
    Budget { round: usize, size: usize, budget: usize },
    #[error("qubit {qubit} outside the {width}-qubit witness")]
    Qubit { qubit: usize, width: usize },
    #[error("witness has {got} qubits, verifier expects {expected}")]
    Witness { expected: usize, got: usize },
    #[error("verifier has {rounds} rounds, history of length {len} is malformed")]
    History { rounds: usize, len: usize },
    #[error("malformed verifier: {0}")]
    Spec(String),
    #[error(transparent)]
    Merkle(#[from] MerkleError),
    #[error(transparent)]
    Haar(#[from] HaarError),
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

/// A verifier query: the witness qubits read this round and the measurement applied to them.
/// The POVM's own targets are ignored; its positions follow `subset`.
#[derive(Debug, Clone)]
pub struct Query {
    pub subset: Vec<usize>,
    pub povm: Povm,
}

impl Query {
    /// Reads nothing and always reports outcome 0.
    pub fn empty() -> Self {
        Self { subset: Vec::new(), povm: Povm::new(Vec::new(), vec![Matrix::identity(1)]).expect("trivial POVM") }
    }

    fn on(&self, qubits: Vec<usize>) -> Result<Povm, QsimError> {
        self.povm.retarget(qubits)
    }
}

/// An ℓ-round adaptive local verifier. `history` is τ₀ followed by the outcomes so far.
pub trait AdaptiveVerifier {
    fn witness_qubits(&self) -> usize;
    /// m_L: size of the largest outcome alphabet.
    fn outcome_alphabet(&self) -> usize;
    fn rounds(&self) -> usize;
    /// k: per-round query budget.
    fn locality(&self) -> usize;
    /// Number of equally likely initial coins τ₀.
    fn coins(&self) -> usize {
        1
    }
    fn query(&self, history: &[usize]) -> Result<Query, ZkError>;
    fn decide(&self, history: &[usize]) -> bool;
}

/// ⌈log₂ m⌉, at least 1.
pub fn outcome_bits(m: usize) -> usize {
    (usize::BITS - (m.max(2) - 1).leading_zeros()) as usize
}

/// A non-adaptive verifier: fixed rounds, each accepting a fixed set of outcomes.
#[derive(Debug, Clone)]
pub struct StaticVerifier {
    n: usize,
    queries: Vec<Query>,
    accepting: Vec<Vec<bool>>,
}

impl StaticVerifier {
    pub fn new(n: usize, queries: Vec<Query>, accepting: Vec<Vec<bool>>) -> Result<Self, ZkError> {
        if queries.len() != accepting.len() {
            return Err(ZkError::Spec("one accepting set per round".into()));
        }
        let mut seen = BTreeSet::new();
        for (i, (q, acc)) in queries.iter().zip(&accepting).enumerate() {
            if acc.len() != q.povm.len() {
                return Err(ZkError::Spec("accepting set does not match the outcome count".into()));
            }
            if q.subset.len() != q.povm.targets().len() {
                return Err(ZkError::Spec("POVM width does not match the subset".into()));
            }
            for &x in &q.subset {
                if x >= n {
                    return Err(ZkError::Qubit { qubit: x, width: n });
                }
                if !seen.insert(x) {
                    return Err(ZkError::Overlap { round: i + 1 });
                }
            }
        }
        Ok(Self { n, queries, accepting })
    }

    /// Two rounds, each measuring a pair (0,1) then (2,3) in the Bell basis; accepts on Φ⁺ twice.
    pub fn toy_bell() -> Self {
        let r = core::f64::consts::FRAC_1_SQRT_2;
        let bell = |a: f64, b: f64, c: f64, d: f64| [C64::new(a * r, 0.0), C64::new(b * r, 0.0), C64::new(c * r, 0.0), C64::new(d * r, 0.0)];
        let basis = [bell(1.0, 0.0, 0.0, 1.0), bell(1.0, 0.0, 0.0, -1.0), bell(0.0, 1.0, 1.0, 0.0), bell(0.0, 1.0, -1.0, 0.0)];
        let effects: Vec<Matrix> = basis.iter().map(|v| Matrix::outer(v, v)).collect();
        let povm = Povm::new(vec![0, 1], effects).expect("Bell basis is a POVM");
        let q1 = Query { subset: vec![0, 1], povm: povm.clone() };
        let q2 = Query { subset: vec![2, 3], povm };
        let acc = vec![true, false, false, false];
        Self::new(4, vec![q1, q2], vec![acc.clone(), acc]).expect("valid fixture")
    }

    /// Φ⁺ ⊗ Φ⁺, the honest witness for [`StaticVerifier::toy_bell`].
    pub fn toy_bell_witness() -> PureState {
        let r = core::f64::consts::FRAC_1_SQRT_2;
        let pair = PureState::from_amplitudes(vec![C64::new(r, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(r, 0.0)])
            .expect("normalized");
        pair.tensor(&pair).expect("small")
    }

    /// One round reading `qubit` in the computational basis, accepting on 0.
    pub fn single_z(n: usize, qubit: usize) -> Result<Self, ZkError> {
        let q = Query { subset: vec![qubit], povm: Povm::computational(vec![0]) };
        Self::new(n, vec![q], vec![vec![true, false]])
    }

    /// No rounds at all; accepts.
    pub fn zero_round(n: usize) -> Self {
        Self { n, queries: Vec::new(), accepting: Vec::new() }
    }
}

impl AdaptiveVerifier for StaticVerifier {
    fn witness_qubits(&self) -> usize {
        self.n
    }
    fn outcome_alphabet(&self) -> usize {
        self.queries.iter().map(|q| q.povm.len()).max().unwrap_or(1)
    }
    fn rounds(&self) -> usize {
        self.queries.len()
    }
    fn locality(&self) -> usize {
        self.queries.iter().map(|q| q.subset.len()).max().unwrap_or(0)
    }
    fn query(&self, history: &[usize]) -> Result<Query, ZkError> {
        let round = history.len();
        self.queries
            .get(round.wrapping_sub(1))
            .cloned()
            .ok_or(ZkError::History { rounds: self.rounds(), len: round })
    }
    fn decide(&self, history: &[usize]) -> bool {
        history.len() == self.rounds() + 1 && history[1..].iter().zip(&self.accepting).all(|(&o, acc)| acc[o])
    }
}

fn validate_query<V: AdaptiveVerifier + ?Sized>(v: &V, q: &Query, round: usize, used: &BTreeSet<usize>) -> Result<(), ZkError> {
    if q.subset.len() > v.locality() {
        return Err(ZkError::Budget { round, size: q.subset.len(), budget: v.locality() });
    }
    if q.subset.len() != q.povm.targets().len() {
        return Err(ZkError::Spec("POVM width does not match the subset".into()));
    }
    for &x in &q.subset {
        if x >= v.witness_qubits() {
            return Err(ZkError::Qubit { qubit: x, width: v.witness_qubits() });
        }
        if used.contains(&x) {
            return Err(ZkError::Overlap { round });
        }
    }
    Ok(())
}

/// Exact acceptance probability of the verifier run directly on σ.
pub fn direct_acceptance<V: AdaptiveVerifier + ?Sized, S: QuantumState>(v: &V, sigma: &S) -> Result<f64, ZkError> {
    if sigma.num_qubits() != v.witness_qubits() {
        return Err(ZkError::Witness { expected: v.witness_qubits(), got: sigma.num_qubits() });
    }
    let w = 1.0 / v.coins() as f64;
    let mut total = 0.0;
    for tau in 0..v.coins() {
        total += w * direct_rec(v, sigma, &mut vec![tau], &BTreeSet::new())?;
    }
    Ok(total)
}

fn direct_rec<V: AdaptiveVerifier + ?Sized, S: QuantumState>(
    v: &V,
    state: &S,
    history: &mut Vec<usize>,
    used: &BTreeSet<usize>,
) -> Result<f64, ZkError> {
    let round = history.len();
    if round > v.rounds() {
        return Ok(if v.decide(history) { 1.0 } else { 0.0 });
    }
    let q = v.query(history)?;
    validate_query(v, &q, round, used)?;
    if q.subset.is_empty() {
        history.push(0);
        let p = direct_rec(v, state, history, used)?;
        history.pop();
        return Ok(p);
    }
    let mut used = used.clone();
    used.extend(q.subset.iter().copied());
    let mut total = 0.0;
    for br in state.branches(&q.on(q.subset.clone())?)? {
        if let Some(post) = br.state {
            history.push(br.outcome);
            total += br.probability * direct_rec(v, &post, history, &used)?;
            history.pop();
        }
    }
    Ok(total)
}

/// One sampled run of the verifier directly on σ: the decision and the history it saw.
pub fn sample_direct<V: AdaptiveVerifier + ?Sized, S: QuantumState, R: Rng + ?Sized>(
    v: &V,
    sigma: &S,
    rng: &mut R,
) -> Result<(bool, Vec<usize>), ZkError> {
    if sigma.num_qubits() != v.witness_qubits() {
        return Err(ZkError::Witness { expected: v.witness_qubits(), got: sigma.num_qubits() });
    }
    let mut history = vec![rng.random_range(0..v.coins())];
    let mut state = sigma.clone();
    let mut used = BTreeSet::new();
    for round in 1..=v.rounds() {
        let q = v.query(&history)?;
        validate_query(v, &q, round, &used)?;
        if q.subset.is_empty() {
            history.push(0);
            continue;
        }
        used.extend(q.subset.iter().copied());
        let (outcome, post, _) = measure(&state, &q.on(q.subset.clone())?, rng)?;
        state = post;
        history.push(outcome);
    }
    Ok((v.decide(&history), history))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Direction {
    ProverToVerifier,
    VerifierToProver,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Payload {
    /// Tree node registers, node-label ascending.
    Registers { nodes: Vec<usize>, qubits: usize },
    Classical { value: usize, bits: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Message {
    pub round: usize,
    pub direction: Direction,
    pub payload: Payload,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Totals {
    pub qubits_sent: usize,
    pub bits_sent: usize,
    pub oracle_queries_prover: u64,
    pub oracle_queries_verifier: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Transcript {
    pub messages: Vec<Message>,
    pub oracle_queries_prover: u64,
    pub oracle_queries_verifier: u64,
}

impl Transcript {
    pub fn totals(&self) -> Totals {
        let mut t = Totals {
            oracle_queries_prover: self.oracle_queries_prover,
            oracle_queries_verifier: self.oracle_queries_verifier,
            ..Totals::default()
        };
        for m in &self.messages {
            match m.payload {
                Payload::Registers { qubits, .. } => t.qubits_sent += qubits,
                Payload::Classical { bits, .. } => t.bits_sent += bits,
            }
        }
        t
    }
}

/// What the prover sees before each of its messages (round 0 is the commitment message).
#[derive(Debug)]
pub struct ProverTurn<'a> {
    pub round: usize,
    pub history: &'a [usize],
    /// Nodes the prover still holds.
    pub owned: &'a BTreeSet<usize>,
    /// Nodes the protocol expects in this message.
    pub to_send: &'a BTreeSet<usize>,
    pub layout: &'a TreeLayout,
}

/// Gates the prover applies to registers it holds, and the nodes it sends.
#[derive(Debug, Clone, Default)]
pub struct ProverMove {
    pub gates: Vec<GateOp>,
    pub send: BTreeSet<usize>,
}

pub trait ProverStrategy {
    fn commit(&mut self, sigma: &PureState, layout: TreeLayout, oracle: &mut OracleHandle) -> Result<CommitmentRegisters, ZkError>;
    fn respond(&mut self, turn: &ProverTurn<'_>, oracle: &mut OracleHandle) -> Result<ProverMove, ZkError>;
}

/// Commits honestly and sends exactly what is asked.
#[derive(Debug, Clone, Copy, Default)]
pub struct HonestProver;

impl ProverStrategy for HonestProver {
    fn commit(&mut self, sigma: &PureState, layout: TreeLayout, oracle: &mut OracleHandle) -> Result<CommitmentRegisters, ZkError> {
        Ok(commit(sigma, layout, oracle)?)
    }
    fn respond(&mut self, turn: &ProverTurn<'_>, _: &mut OracleHandle) -> Result<ProverMove, ZkError> {
        Ok(ProverMove { gates: Vec::new(), send: turn.to_send.clone() })
    }
}

/// Ignores σ and sends fresh |0⟩ registers.
#[derive(Debug, Clone, Copy, Default)]
pub struct EmptyProver;

impl ProverStrategy for EmptyProver {
    fn commit(&mut self, _: &PureState, layout: TreeLayout, _: &mut OracleHandle) -> Result<CommitmentRegisters, ZkError> {
        Ok(CommitmentRegisters::from_state(layout, PureState::zero(layout.num_qubits())?)?)
    }
    fn respond(&mut self, turn: &ProverTurn<'_>, _: &mut OracleHandle) -> Result<ProverMove, ZkError> {
        Ok(ProverMove { gates: Vec::new(), send: turn.to_send.clone() })
    }
}

/// Honest, except that it applies X to the first qubit of `node` just before sending it.
#[derive(Debug, Clone, Copy)]
pub struct FlipProver {
    pub node: usize,
}

impl ProverStrategy for FlipProver {
    fn commit(&mut self, sigma: &PureState, layout: TreeLayout, oracle: &mut OracleHandle) -> Result<CommitmentRegisters, ZkError> {
        Ok(commit(sigma, layout, oracle)?)
    }
    fn respond(&mut self, turn: &ProverTurn<'_>, _: &mut OracleHandle) -> Result<ProverMove, ZkError> {
        let gates = if turn.to_send.contains(&self.node) {
            vec![GateOp::x(turn.layout.register(self.node)[0])]
        } else {
            Vec::new()
        };
        Ok(ProverMove { gates, send: turn.to_send.clone() })
    }
}

fn audit(regs: &CommitmentRegisters, mv: &ProverMove, to_send: &BTreeSet<usize>) -> Result<(), String> {
    if &mv.send != to_send {
        return Err("sent registers differ from the requested set".to_string());
    }
    let layout = regs.layout();
    for g in &mv.gates {
        for &q in g.targets() {
            let node = q / layout.b() + 1;
            if node > layout.num_nodes() || regs.owner(node) != Owner::Prover {
                return Err("prover acted on a register it does not hold".to_string());
            }
        }
    }
    Ok(())
}

fn registers_message(round: usize, nodes: &BTreeSet<usize>, b: usize) -> Message {
    Message {
        round,
        direction: Direction::ProverToVerifier,
        payload: Payload::Registers { nodes: nodes.iter().copied().collect(), qubits: nodes.len() * b },
    }
}

fn leaves_of(layout: &TreeLayout, subset: &[usize]) -> Vec<usize> {
    subset.iter().map(|&q| layout.leaf(q)).collect()
}

/// One leaf of the exact execution tree.
#[derive(Debug, Clone)]
pub struct BranchRecord {
    pub probability: f64,
    pub accepted: bool,
    /// Ended by a failed opening.
    pub bottom: bool,
    /// Ended by a prover that broke the message format.
    pub aborted: Option<String>,
    pub history: Vec<usize>,
    pub transcript: Transcript,
}

#[derive(Debug, Clone)]
pub struct ExactRun {
    pub acceptance: f64,
    pub bottom_probability: f64,
    pub branches: Vec<BranchRecord>,
}

impl ExactRun {
    /// The most likely branch's transcript.
    pub fn representative(&self) -> Option<&BranchRecord> {
        self.branches.iter().max_by(|a, b| a.probability.total_cmp(&b.probability))
    }
}

struct Walk<'a, V: ?Sized, P: ?Sized> {
    verifier: &'a V,
    prover: &'a mut P,
    oracle: &'a mut OracleHandle,
    out: Vec<BranchRecord>,
}

struct Node {
    probability: f64,
    regs: CommitmentRegisters,
    history: Vec<usize>,
    sent: BTreeSet<usize>,
    used: BTreeSet<usize>,
    transcript: Transcript,
}

fn first_message<P: ProverStrategy + ?Sized>(
    prover: &mut P,
    regs: &mut CommitmentRegisters,
    history: &[usize],
    oracle: &mut OracleHandle,
    transcript: &mut Transcript,
) -> Result<Result<BTreeSet<usize>, String>, ZkError> {
    let layout = *regs.layout();
    let to_send = r_set_of(&[1].into_iter().collect(), layout.ell())?;
    let owned: BTreeSet<usize> = (1..=layout.num_nodes()).collect();
    let before = oracle.queries();
    let mv = prover.respond(&ProverTurn { round: 0, history, owned: &owned, to_send: &to_send, layout: &layout }, oracle)?;
    transcript.oracle_queries_prover += oracle.queries() - before;
    if let Err(e) = audit(regs, &mv, &to_send) {
        return Ok(Err(e));
    }
    for g in &mv.gates {
        regs.state_mut().apply_gate_mut(g)?;
    }
    regs.send(&to_send)?;
    transcript.messages.push(registers_message(0, &to_send, layout.b()));
    Ok(Ok(to_send))
}

impl<V: AdaptiveVerifier + ?Sized, P: ProverStrategy + ?Sized> Walk<'_, V, P> {
    fn finish(&mut self, node: Node, accepted: bool, bottom: bool, aborted: Option<String>) {
        self.out.push(BranchRecord {
            probability: node.probability,
            accepted,
            bottom,
            aborted,
            history: node.history,
            transcript: node.transcript,
        });
    }

    fn step(&mut self, mut node: Node) -> Result<(), ZkError> {
        let v = self.verifier;
        let round = node.history.len();
        if round > v.rounds() {
            let acc = v.decide(&node.history);
            self.finish(node, acc, false, None);
            return Ok(());
        }
        let layout = *node.regs.layout();
        node.transcript.messages.push(Message {
            round,
            direction: Direction::VerifierToProver,
            payload: Payload::Classical { value: *node.history.last().expect("τ₀ present"), bits: outcome_bits(v.outcome_alphabet()) },
        });
        let q = v.query(&node.history)?;
        validate_query(v, &q, round, &node.used)?;
        let leaves = leaves_of(&layout, &q.subset);
        let w: BTreeSet<usize> = leaves.iter().copied().collect();
        let to_send: BTreeSet<usize> = r_set_of(&w, layout.ell())?.difference(&node.sent).copied().collect();
        let owned: BTreeSet<usize> = (1..=layout.num_nodes()).filter(|&u| node.regs.owner(u) == Owner::Prover).collect();
        let before = self.oracle.queries();
        let mv = self.prover.respond(
            &ProverTurn { round, history: &node.history, owned: &owned, to_send: &to_send, layout: &layout },
            self.oracle,
        )?;
        node.transcript.oracle_queries_prover += self.oracle.queries() - before;
        if let Err(e) = audit(&node.regs, &mv, &to_send) {
            self.finish(node, false, false, Some(e));
            return Ok(());
        }
        for g in &mv.gates {
            node.regs.state_mut().apply_gate_mut(g)?;
        }
        node.regs.send(&to_send)?;
        node.sent.extend(to_send.iter().copied());
        node.transcript.messages.push(registers_message(round, &to_send, layout.b()));

        let before = self.oracle.queries();
        let opened = node.regs.opened().clone();
        let open = decommit_exact(&node.regs, &opened, &w, self.oracle)?;
        node.transcript.oracle_queries_verifier += self.oracle.queries() - before;
        let p_ok = open.accept_probability;
        if p_ok < 1.0 {
            let bottom = Node {
                probability: node.probability * (1.0 - p_ok),
                regs: node.regs.clone(),
                history: node.history.clone(),
                sent: node.sent.clone(),
                used: node.used.clone(),
                transcript: node.transcript.clone(),
            };
            self.finish(bottom, false, true, None);
        }
        let Some(regs) = open.registers else { return Ok(()) };
        node.used.extend(q.subset.iter().copied());
        if q.subset.is_empty() {
            let mut history = node.history.clone();
            history.push(0);
            return self.step(Node { probability: node.probability * p_ok, regs, history, ..node });
        }
        let povm = q.on(regs.leaf_qubits(&leaves))?;
        for br in regs.state().branches(&povm)? {
            let Some(post) = br.state else { continue };
            let mut next_regs = regs.clone();
            *next_regs.state_mut() = post;
            let mut history = node.history.clone();
            history.push(br.outcome);
            self.step(Node {
                probability: node.probability * p_ok * br.probability,
                regs: next_regs,
                history,
                sent: node.sent.clone(),
                used: node.used.clone(),
                transcript: node.transcript.clone(),
            })?;
        }
        Ok(())
    }
}

fn check_shape<V: AdaptiveVerifier + ?Sized>(v: &V, sigma: &PureState, layout: &TreeLayout) -> Result<(), ZkError> {
    if sigma.num_qubits() != v.witness_qubits() || layout.ell() != v.witness_qubits() {
        return Err(ZkError::Witness { expected: layout.ell(), got: sigma.num_qubits() });
    }
    Ok(())
}

/// Executes the protocol exactly: every verifier coin, opening outcome and measurement branch.
pub fn run_protocol_exact<V: AdaptiveVerifier + ?Sized, P: ProverStrategy + ?Sized>(
    verifier: &V,
    sigma: &PureState,
    layout: TreeLayout,
    prover: &mut P,
    oracle: &mut OracleHandle,
) -> Result<ExactRun, ZkError> {
    check_shape(verifier, sigma, &layout)?;
    let mut walk = Walk { verifier, prover, oracle, out: Vec::new() };
    let w = 1.0 / verifier.coins() as f64;
    for tau in 0..verifier.coins() {
        let mut transcript = Transcript::default();
        let before = walk.oracle.queries();
        let mut regs = walk.prover.commit(sigma, layout, walk.oracle)?;
        transcript.oracle_queries_prover += walk.oracle.queries() - before;
        let history = vec![tau];
        match first_message(walk.prover, &mut regs, &history, walk.oracle, &mut transcript)? {
            Ok(sent) => walk.step(Node { probability: w, regs, history, sent, used: BTreeSet::new(), transcript })?,
            Err(e) => walk.finish(Node { probability: w, regs, history, sent: BTreeSet::new(), used: BTreeSet::new(), transcript }, false, false, Some(e)),
        }
    }
    let acceptance = walk.out.iter().filter(|b| b.accepted).map(|b| b.probability).sum();
    let bottom_probability = walk.out.iter().filter(|b| b.bottom).map(|b| b.probability).sum();
    Ok(ExactRun { acceptance, bottom_probability, branches: walk.out })
}

#[derive(Debug, Clone)]
pub struct SampledRun {
    pub accepted: bool,
    pub bottom: bool,
    pub aborted: Option<String>,
    pub history: Vec<usize>,
    pub transcript: Transcript,
}

/// One sampled execution.
pub fn run_protocol_sampled<V: AdaptiveVerifier + ?Sized, P: ProverStrategy + ?Sized, R: Rng + ?Sized>(
    verifier: &V,
    sigma: &PureState,
    layout: TreeLayout,
    prover: &mut P,
    oracle: &mut OracleHandle,
    rng: &mut R,
) -> Result<SampledRun, ZkError> {
    check_shape(verifier, sigma, &layout)?;
    let mut transcript = Transcript::default();
    let tau = rng.random_range(0..verifier.coins());
    let mut history = vec![tau];
    let before = oracle.queries();
    let mut regs = prover.commit(sigma, layout, oracle)?;
    transcript.oracle_queries_prover += oracle.queries() - before;
    let end = |accepted, bottom, aborted, history, transcript| Ok(SampledRun { accepted, bottom, aborted, history, transcript });
    let mut sent = match first_message(prover, &mut regs, &history, oracle, &mut transcript)? {
        Ok(s) => s,
        Err(e) => return end(false, false, Some(e), history, transcript),
    };
    let mut used = BTreeSet::new();
    for round in 1..=verifier.rounds() {
        transcript.messages.push(Message {
            round,
            direction: Direction::VerifierToProver,
            payload: Payload::Classical { value: *history.last().expect("τ₀ present"), bits: outcome_bits(verifier.outcome_alphabet()) },
        });
        let q = verifier.query(&history)?;
        validate_query(verifier, &q, round, &used)?;
        let leaves = leaves_of(&layout, &q.subset);
        let w: BTreeSet<usize> = leaves.iter().copied().collect();
        let to_send: BTreeSet<usize> = r_set_of(&w, layout.ell())?.difference(&sent).copied().collect();
        let owned: BTreeSet<usize> = (1..=layout.num_nodes()).filter(|&u| regs.owner(u) == Owner::Prover).collect();
        let before = oracle.queries();
        let mv = prover.respond(&ProverTurn { round, history: &history, owned: &owned, to_send: &to_send, layout: &layout }, oracle)?;
        transcript.oracle_queries_prover += oracle.queries() - before;
        if let Err(e) = audit(&regs, &mv, &to_send) {
            return end(false, false, Some(e), history, transcript);
        }
        for g in &mv.gates {
            regs.state_mut().apply_gate_mut(g)?;
        }
        regs.send(&to_send)?;
        sent.extend(to_send.iter().copied());
        transcript.messages.push(registers_message(round, &to_send, layout.b()));
        let before = oracle.queries();
        let opened = regs.opened().clone();
        let opening = decommit(&regs, &opened, &w, oracle, rng)?;
        transcript.oracle_queries_verifier += oracle.queries() - before;
        regs = match opening {
            Opening::Opened(r) => r,
            Opening::Bottom { .. } => return end(false, true, None, history, transcript),
        };
        used.extend(q.subset.iter().copied());
        if q.subset.is_empty() {
            history.push(0);
            continue;
        }
        let povm = q.on(regs.leaf_qubits(&leaves))?;
        let (outcome, post, _) = measure(regs.state(), &povm, rng)?;
        *regs.state_mut() = post;
        history.push(outcome);
    }
    let accepted = verifier.decide(&history);
    end(accepted, false, None, history, transcript)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CommParams {
    pub k: usize,
    pub rounds: usize,
    pub ell: usize,
    pub lambda: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CommCost {
    pub qubits: usize,
    pub bits: usize,
    pub bound: usize,
    pub within_bound: bool,
}

/// Qubit and bit totals against λ·(1 + ℓ_L·k·2·(log₂ℓ + 1)).
pub fn comm_cost(transcript: &Transcript, params: CommParams) -> CommCost {
    let t = transcript.totals();
    let log_ell = params.ell.max(1).trailing_zeros() as usize;
    let bound = params.lambda * (1 + params.rounds * params.k * 2 * (log_ell + 1));
    CommCost { qubits: t.qubits_sent, bits: t.bits_sent, bound, within_bound: t.qubits_sent <= bound }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bell_setup(seed: u64) -> (StaticVerifier, PureState, TreeLayout, OracleHandle) {
        (StaticVerifier::toy_bell(), StaticVerifier::toy_bell_witness(), TreeLayout::new(4, 1).unwrap(), OracleHandle::sample(3, seed).unwrap())
    }

    #[test]
    fn bits_per_outcome() {
        assert_eq!(outcome_bits(2), 1);
        assert_eq!(outcome_bits(4), 2);
        assert_eq!(outcome_bits(5), 3);
        assert_eq!(outcome_bits(1), 1);
    }

    #[test]
    fn honest_bell_run_accepts() {
        let (v, sigma, layout, mut o) = bell_setup(3);
        assert!((direct_acceptance(&v, &sigma).unwrap() - 1.0).abs() < 1e-12);
        let run = run_protocol_exact(&v, &sigma, layout, &mut HonestProver, &mut o).unwrap();
        assert!((run.acceptance - 1.0).abs() < 1e-9);
        let t = &run.representative().unwrap().transcript;
        let totals = t.totals();
        assert_eq!(totals.qubits_sent, 7);
        assert_eq!(totals.bits_sent, 4);
        assert_eq!(t.oracle_queries_prover, 3);
        assert_eq!(t.oracle_queries_verifier, 3);
        let cost = comm_cost(t, CommParams { k: 2, rounds: 2, ell: 4, lambda: 3 });
        assert_eq!(cost.bound, 75);
        assert!(cost.within_bound);
    }

    #[test]
    fn flipped_register_is_detected() {
        let (v, sigma, layout, mut o) = bell_setup(5);
        let run = run_protocol_exact(&v, &sigma, layout, &mut FlipProver { node: 4 }, &mut o).unwrap();
        assert!(run.bottom_probability > 1e-3);
        assert!(run.acceptance < 1.0 - 1e-3);
    }

    #[test]
    fn wrong_message_shape_rejects() {
        struct Greedy;
        impl ProverStrategy for Greedy {
            fn commit(&mut self, s: &PureState, l: TreeLayout, o: &mut OracleHandle) -> Result<CommitmentRegisters, ZkError> {
                HonestProver.commit(s, l, o)
            }
            fn respond(&mut self, t: &ProverTurn<'_>, _: &mut OracleHandle) -> Result<ProverMove, ZkError> {
                Ok(ProverMove { gates: Vec::new(), send: t.owned.clone() })
            }
        }
        let (v, sigma, layout, mut o) = bell_setup(1);
        let run = run_protocol_exact(&v, &sigma, layout, &mut Greedy, &mut o).unwrap();
        assert_eq!(run.acceptance, 0.0);
        assert!(run.branches[0].aborted.is_some());
    }

    #[test]
    fn sampled_runs() {
        let (v, sigma, layout, mut o) = bell_setup(2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let r = run_protocol_sampled(&v, &sigma, layout, &mut HonestProver, &mut o, &mut rng).unwrap();
            assert!(r.accepted);
            assert_eq!(r.transcript.oracle_queries_prover, 3);
        }
        let empty = (0..200)
            .filter(|_| run_protocol_sampled(&v, &sigma, layout, &mut EmptyProver, &mut o, &mut rng).unwrap().accepted)
            .count();
        assert!(empty < 200);
    }

    #[test]
    fn single_round_and_zero_round_costs() {
        let layout = TreeLayout::new(4, 1).unwrap();
        let mut o = OracleHandle::sample(3, 8).unwrap();
        let sigma = PureState::zero(4).unwrap();
        let v = StaticVerifier::single_z(4, 0).unwrap();
        let run = run_protocol_exact(&v, &sigma, layout, &mut HonestProver, &mut o).unwrap();
        assert!((run.acceptance - 1.0).abs() < 1e-9);
        let cost = comm_cost(&run.branches[0].transcript, CommParams { k: 1, rounds: 1, ell: 4, lambda: 3 });
        assert_eq!(cost.qubits, 5);
        assert!(cost.qubits <= 8 && cost.within_bound);
        let z = StaticVerifier::zero_round(4);
        let run = run_protocol_exact(&z, &sigma, layout, &mut HonestProver, &mut o).unwrap();
        assert_eq!(run.branches[0].transcript.totals().qubits_sent, 3);
        assert!((run.acceptance - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overlapping_rounds_rejected() {
        let q = Query { subset: vec![0], povm: Povm::computational(vec![0]) };
        assert!(matches!(
            StaticVerifier::new(2, vec![q.clone(), q], vec![vec![true, true], vec![true, true]]),
            Err(ZkError::Overlap { round: 2 })
        ));
    }
}
