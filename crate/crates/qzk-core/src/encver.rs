//! The encoded QSAT verifier: a fault-tolerant circuit over Steane blocks, cut into T
//! sub-unitaries, its history Hamiltonian, and the two-round verifier that measures one
//! random term. κ = 0 (the identity code) runs numerically end to end; κ = 1 is emitted
//! for counting and locality only.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

#[allow(unused_imports)]
use num_traits::Float;

use crate::clockham::{
    build_history_hamiltonian, energy, history_state, min_eigenvalue, out_term, ClockError, GroundState, HistoryHamiltonian,
    OutTerm, Step, TermKind, UnitarySequence,
};
use crate::linalg::{LinalgError, Matrix};
use crate::qsat::{Gate, QsatError, QsatInstance};
use crate::qsim::{cross_reduce, GateOp, MixedState, Povm, PureState, QsimError, MAX_PURE_QUBITS};
use crate::steane::{decoding_sequence, encoding_sequence, syndrome_sequence, transversal_sequence, CodeParams, GateSequence, LogicalGate, SteaneError};
use crate::zkproto::{direct_acceptance, AdaptiveVerifier, Query, ZkError};
use crate::C64;

/// Steps per magic state in the test phase.
pub const DEFAULT_C_TEST: usize = 4;
/// Ancilla parts: Eidx, Emidx, Eanc, Emagic, Echk.
pub const PARTS: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EncverError {
    #[error("m = {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("check {check} uses {count} T gates but only {gamma} magic blocks exist")]
    TCount { check: usize, count: usize, gamma: usize },
    #[error("c_test·γ = {0} leaves no step for the check circuits")]
    TestSteps(usize),
    #[error("{0} runs only at κ = 0")]
    NeedsVanilla(&'static str),
    #[error("{what} needs {requested} qubits, limit {limit}")]
    Capacity { what: &'static str, requested: usize, limit: usize },
    #[error("pad has {got} bits, expected {expected}")]
    Pad { expected: usize, got: usize },
    #[error("term {0} out of range")]
    Term(usize),
    #[error("term {0} is not an indexed propagation term")]
    NotIndexed(usize),
    #[error("branch {branch} out of range for {m} checks")]
    Branch { branch: usize, m: usize },
    #[error("state has {got} qubits, expected {expected}")]
    Witness { expected: usize, got: usize },
    #[error(transparent)]
    Steane(#[from] SteaneError),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Qsat(#[from] QsatError),
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error(transparent)]
    Zk(#[from] ZkError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

type Result<T> = core::result::Result<T, EncverError>;

/// Register layout of the state register: Edata, Eotp (a then b), Echk, Eidx, Emidx, Emagic, Eanc.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncLayout {
    /// Physical qubits per block, N.
    pub block: usize,
    pub n: usize,
    pub log_m: usize,
    pub k: usize,
    pub gamma: usize,
    pub edata: Range<usize>,
    pub eotp: Range<usize>,
    pub echk: Range<usize>,
    pub eidx: Range<usize>,
    pub emidx: Range<usize>,
    pub emagic: Range<usize>,
    pub eanc: Range<usize>,
}

impl EncLayout {
    pub fn new(n: usize, m: usize, k: usize, gamma: usize, block: usize) -> Self {
        let log_m = m.trailing_zeros() as usize;
        let mut at = 0;
        let mut take = |len: usize| {
            let r = at..at + len;
            at += len;
            r
        };
        let edata = take(n * block);
        let eotp = take(2 * n * block);
        let echk = take(3 * k * (block - 1));
        let eidx = take(log_m * block);
        let emidx = take(log_m * block);
        let emagic = take(gamma * block);
        let eanc = take(gamma * block);
        Self { block, n, log_m, k, gamma, edata, eotp, echk, eidx, emidx, emagic, eanc }
    }

    fn blk(r: &Range<usize>, b: usize, width: usize) -> Vec<usize> {
        (r.start + b * width..r.start + (b + 1) * width).collect()
    }

    pub fn witness_qubits(&self) -> usize {
        self.eotp.end
    }

    pub fn state_qubits(&self) -> usize {
        self.eanc.end
    }

    pub fn ancilla_qubits(&self) -> usize {
        self.state_qubits() - self.witness_qubits()
    }

    pub fn data_block(&self, u: usize) -> Vec<usize> {
        Self::blk(&self.edata, u, self.block)
    }

    /// Pad block u ∈ [0, 2n): X keys first, then Z keys.
    pub fn otp_block(&self, u: usize) -> Vec<usize> {
        Self::blk(&self.eotp, u, self.block)
    }

    pub fn chk_block(&self, tau: usize) -> Vec<usize> {
        Self::blk(&self.echk, tau, self.block - 1)
    }

    pub fn idx_block(&self, j: usize) -> Vec<usize> {
        Self::blk(&self.eidx, j, self.block)
    }

    pub fn midx_block(&self, j: usize) -> Vec<usize> {
        Self::blk(&self.emidx, j, self.block)
    }

    pub fn magic_block(&self, r: usize) -> Vec<usize> {
        Self::blk(&self.emagic, r, self.block)
    }

    pub fn anc_block(&self, a: usize) -> Vec<usize> {
        Self::blk(&self.eanc, a, self.block)
    }

    /// The decision qubit Eanc(1).
    pub fn output_qubit(&self) -> usize {
        self.eanc.start
    }

    /// Ancilla-relative parts in the order Eidx, Emidx, Eanc, Emagic, Echk.
    pub fn partition(&self) -> Vec<Vec<usize>> {
        let w = self.witness_qubits();
        [&self.eidx, &self.emidx, &self.eanc, &self.emagic, &self.echk]
            .iter()
            .map(|r| (*r).clone().map(|q| q - w).collect())
            .collect()
    }

    pub fn registers(&self) -> [(&'static str, Range<usize>); 7] {
        [
            ("Edata", self.edata.clone()),
            ("Eotp", self.eotp.clone()),
            ("Echk", self.echk.clone()),
            ("Eidx", self.eidx.clone()),
            ("Emidx", self.emidx.clone()),
            ("Emagic", self.emagic.clone()),
            ("Eanc", self.eanc.clone()),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Phase {
    Magic,
    Encode,
    Hadamard,
    Cnot,
    Check,
    Test,
    Decode,
}

impl Phase {
    pub const ALL: [Phase; 7] = [Phase::Magic, Phase::Encode, Phase::Hadamard, Phase::Cnot, Phase::Check, Phase::Test, Phase::Decode];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Magic => "magic",
            Phase::Encode => "encode",
            Phase::Hadamard => "hadamard",
            Phase::Cnot => "cnot",
            Phase::Check => "check",
            Phase::Test => "test",
            Phase::Decode => "decode",
        }
    }
}

/// V^enc for one instance, cut into T steps.
#[derive(Debug, Clone)]
pub struct EncodedProgram {
    instance: QsatInstance,
    params: CodeParams,
    layout: EncLayout,
    c_test: usize,
    phases: Vec<(Phase, usize)>,
    seq: UnitarySequence,
}

/// One step per gate of `seq`, that gate applied on every block listed (local qubit q ↦ block[q]).
fn per_block(seq: &GateSequence, blocks: &[Vec<usize>]) -> Vec<Step> {
    if seq.is_empty() {
        return vec![Step::identity()];
    }
    seq.gates
        .iter()
        .map(|g| Step::Gates(blocks.iter().map(|b| g.remap(|q| b[q])).collect()))
        .collect()
}

fn logical_p(params: &CodeParams, q: usize) -> GateOp {
    if params.kappa % 2 == 1 {
        GateOp::p(q).adjoint()
    } else {
        GateOp::p(q)
    }
}

pub fn build_program(instance: &QsatInstance, params: CodeParams) -> Result<EncodedProgram> {
    build_program_with(instance, params, DEFAULT_C_TEST)
}

pub fn build_program_with(instance: &QsatInstance, params: CodeParams, c_test: usize) -> Result<EncodedProgram> {
    let m = instance.m();
    if !m.is_power_of_two() {
        return Err(EncverError::NotPowerOfTwo(m));
    }
    let (n, k, gamma) = (instance.n(), instance.k(), instance.gamma());
    let nb = params.n;
    let lay = EncLayout::new(n, m, k, gamma, nb);
    let l_test = c_test * gamma;
    if l_test < 2 {
        return Err(EncverError::TestSteps(l_test));
    }

    let mut phases = Vec::new();
    let mut steps = Vec::new();
    let mut push = |phase: Phase, s: Vec<Step>, steps: &mut Vec<Step>| {
        phases.push((phase, s.len()));
        steps.extend(s);
    };

    let heads: Vec<usize> = (0..gamma).map(|r| lay.magic_block(r)[0]).collect();
    push(
        Phase::Magic,
        vec![Step::Gates(heads.iter().map(|&q| GateOp::h(q)).collect()), Step::Gates(heads.iter().map(|&q| GateOp::t(q)).collect())],
        &mut steps,
    );

    let mut enc_blocks: Vec<Vec<usize>> = (0..gamma).map(|a| lay.anc_block(a)).collect();
    enc_blocks.extend((0..gamma).map(|r| lay.magic_block(r)));
    enc_blocks.extend((0..lay.log_m).map(|j| lay.idx_block(j)));
    enc_blocks.extend((0..lay.log_m).map(|j| lay.midx_block(j)));
    push(Phase::Encode, per_block(&encoding_sequence(&params), &enc_blocks), &mut steps);

    let idx_blocks: Vec<Vec<usize>> = (0..lay.log_m).map(|j| lay.idx_block(j)).collect();
    push(Phase::Hadamard, per_block(&transversal_sequence(LogicalGate::H, &params).sequence, &idx_blocks), &mut steps);

    let pair_blocks: Vec<Vec<usize>> = (0..lay.log_m).map(|j| [lay.idx_block(j), lay.midx_block(j)].concat()).collect();
    push(Phase::Cnot, per_block(&transversal_sequence(LogicalGate::Cnot, &params).sequence, &pair_blocks), &mut steps);

    let control: Vec<usize> = lay.eidx.clone().collect();
    let syn = syndrome_sequence(&params)?;
    let l_chk = syn.len().max(1);
    let mut check = Vec::new();
    for fam in 0..3 {
        for tau in 0..k {
            let chk = lay.chk_block(fam * k + tau);
            for j in 0..l_chk {
                let branches = instance
                    .subsets()
                    .iter()
                    .map(|s| {
                        let u = s[tau];
                        let blk = match fam {
                            0 => lay.data_block(u),
                            1 => lay.otp_block(u),
                            _ => lay.otp_block(u + n),
                        };
                        syn.gates.get(j).map_or(Vec::new(), |g| vec![g.remap(|q| if q < nb { blk[q] } else { chk[q - nb] })])
                    })
                    .collect();
                check.push(Step::Indexed { control: control.clone(), digit: nb, branches });
            }
        }
    }
    push(Phase::Check, check, &mut steps);

    let per_check: Vec<Vec<Vec<GateOp>>> =
        (0..m).map(|i| test_chunks(instance, i, &lay, &params, l_test)).collect::<Result<_>>()?;
    let test = (0..l_test)
        .map(|j| Step::Indexed { control: control.clone(), digit: nb, branches: per_check.iter().map(|c| c[j].clone()).collect() })
        .collect();
    push(Phase::Test, test, &mut steps);

    push(Phase::Decode, per_block(&decoding_sequence(&params), &[lay.anc_block(0)]), &mut steps);

    let seq = UnitarySequence::new(steps, lay.witness_qubits(), lay.ancilla_qubits(), lay.partition())?;
    Ok(EncodedProgram { instance: instance.clone(), params, layout: lay, c_test, phases, seq })
}

/// Enc(V_{C_i}) split into `l_test` steps: the pad undo, then the fault-tolerant check circuit.
fn test_chunks(instance: &QsatInstance, i: usize, lay: &EncLayout, params: &CodeParams, l_test: usize) -> Result<Vec<Vec<GateOp>>> {
    let n = instance.n();
    let subset = &instance.subsets()[i];
    let mut undo = Vec::new();
    for &u in subset {
        let (d, a, b) = (lay.data_block(u), lay.otp_block(u), lay.otp_block(u + n));
        undo.extend((0..lay.block).map(|q| GateOp::cnot(a[q], d[q])));
        undo.extend((0..lay.block).map(|q| GateOp::cz(b[q], d[q])));
    }
    let wires: Vec<Vec<usize>> = subset.iter().map(|&u| lay.data_block(u)).chain((0..lay.gamma).map(|a| lay.anc_block(a))).collect();
    let dec = decoding_sequence(params);
    let mut ft = Vec::new();
    let mut magic = 0;
    for g in &instance.circuits()[i] {
        match *g {
            Gate::H(w) => ft.extend(wires[w].iter().map(|&q| GateOp::h(q))),
            Gate::P(w) => ft.extend(wires[w].iter().map(|&q| logical_p(params, q))),
            Gate::Cnot { control, target } => ft.extend(wires[control].iter().zip(&wires[target]).map(|(&c, &t)| GateOp::cnot(c, t))),
            Gate::T(w) => {
                if magic >= lay.gamma {
                    let count = instance.circuits()[i].iter().filter(|g| matches!(g, Gate::T(_))).count();
                    return Err(EncverError::TCount { check: i, count, gamma: lay.gamma });
                }
                let mb = lay.magic_block(magic);
                magic += 1;
                ft.extend(wires[w].iter().zip(&mb).map(|(&d, &q)| GateOp::cnot(d, q)));
                ft.extend(dec.gates.iter().map(|g| g.remap(|q| mb[q])));
                ft.extend(wires[w].iter().map(|&d| GateOp::controlled(mb[0], &logical_p(params, d))));
            }
        }
    }
    let parts = l_test - 1;
    let size = ft.len().div_ceil(parts).max(1);
    let mut out = vec![undo];
    out.extend((0..parts).map(|j| ft.iter().skip(j * size).take(size).cloned().collect()));
    Ok(out)
}

impl EncodedProgram {
    pub fn instance(&self) -> &QsatInstance {
        &self.instance
    }

    pub fn params(&self) -> &CodeParams {
        &self.params
    }

    pub fn layout(&self) -> &EncLayout {
        &self.layout
    }

    pub fn c_test(&self) -> usize {
        self.c_test
    }

    /// (phase, ℓ) in execution order.
    pub fn phases(&self) -> &[(Phase, usize)] {
        &self.phases
    }

    pub fn sequence(&self) -> &UnitarySequence {
        &self.seq
    }

    /// T
    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }

    /// Steps t (1-based) belonging to `phase`.
    pub fn phase_steps(&self, phase: Phase) -> Range<usize> {
        let mut start = 1;
        for &(p, len) in &self.phases {
            if p == phase {
                return start..start + len;
            }
            start += len;
        }
        start..start
    }

    /// Phase of step t (1-based) and its position j (1-based) inside it.
    pub fn phase_of_step(&self, t: usize) -> Option<(Phase, usize)> {
        let mut start = 1;
        for &(p, len) in &self.phases {
            if (start..start + len).contains(&t) {
                return Some((p, t - start + 1));
            }
            start += len;
        }
        None
    }

    /// (I − |1 0…0⟩⟨1 0…0|) on Eanc(1), Echk.
    pub fn out_term(&self) -> OutTerm {
        let mut qubits = vec![self.layout.output_qubit()];
        qubits.extend(self.layout.echk.clone());
        let mut accept = vec![true];
        accept.resize(qubits.len(), false);
        out_term(qubits, accept)
    }

    /// Exact acceptance probability on a pure witness over Edata ∪ Eotp.
    pub fn run(&self, witness: &PureState) -> Result<f64> {
        let lay = &self.layout;
        if witness.num_qubits() != lay.witness_qubits() {
            return Err(EncverError::Witness { expected: lay.witness_qubits(), got: witness.num_qubits() });
        }
        let ns = lay.state_qubits();
        if ns > MAX_PURE_QUBITS {
            return Err(EncverError::Capacity { what: "state register", requested: ns, limit: MAX_PURE_QUBITS });
        }
        let comps = self.seq.components(witness.amplitudes())?;
        Ok(accept_weight(comps.last().expect("T ≥ 2"), &self.out_term(), ns))
    }

    pub fn summary(&self) -> ProgramSummary {
        let lay = &self.layout;
        ProgramSummary {
            kappa: self.params.kappa,
            n: self.instance.n(),
            m: self.instance.m(),
            k: self.instance.k(),
            gamma: self.instance.gamma(),
            block: lay.block,
            registers: lay.registers().iter().map(|(name, r)| RegisterSummary { name, start: r.start, len: r.len() }).collect(),
            phases: self.phases.iter().map(|&(p, len)| PhaseSummary { phase: p, len }).collect(),
            steps: self.len(),
            state_qubits: lay.state_qubits(),
            witness_qubits: lay.witness_qubits(),
        }
    }
}

fn accept_weight(psi: &[C64], out: &OutTerm, ns: usize) -> f64 {
    let mask: usize = out.qubits.iter().map(|q| 1usize << (ns - 1 - q)).sum();
    let want: usize = out.qubits.iter().zip(&out.accept).filter(|(_, &a)| a).map(|(q, _)| 1usize << (ns - 1 - q)).sum();
    psi.iter().enumerate().filter(|(s, _)| s & mask == want).map(|(_, a)| a.norm_sqr()).sum()
}

/// Exact acceptance probability of V^enc on a pure witness.
pub fn run_venc(program: &EncodedProgram, witness: &PureState) -> Result<f64> {
    program.run(witness)
}

/// Acceptance probability averaged over a weighted ensemble of witnesses.
pub fn run_venc_ensemble(program: &EncodedProgram, ensemble: &[(f64, PureState)]) -> Result<f64> {
    ensemble.iter().map(|(w, s)| Ok(w * program.run(s)?)).sum()
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegisterSummary {
    pub name: &'static str,
    pub start: usize,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhaseSummary {
    pub phase: Phase,
    pub len: usize,
}

/// Phase table and register layout.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ProgramSummary {
    pub kappa: u32,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub gamma: usize,
    pub block: usize,
    pub registers: Vec<RegisterSummary>,
    pub phases: Vec<PhaseSummary>,
    pub steps: usize,
    pub state_qubits: usize,
    pub witness_qubits: usize,
}

/// One-time pad keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pad {
    Keys { a: Vec<bool>, b: Vec<bool> },
    /// All 4^n key pairs with equal weight.
    Uniform,
}

fn value_of(bits: &[bool]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
}

/// Enc(|a,b⟩ ⊗ X^a Z^b |φ⟩) on Edata ∪ Eotp, as a weighted ensemble (one item for fixed keys).
pub fn otp_witness(params: &CodeParams, phi: &PureState, pad: &Pad) -> Result<Vec<(f64, PureState)>> {
    let n = phi.num_qubits();
    let width = 3 * n * params.n;
    if width > MAX_PURE_QUBITS {
        return Err(EncverError::Capacity { what: "encoded witness", requested: width, limit: MAX_PURE_QUBITS });
    }
    match pad {
        Pad::Keys { a, b } => {
            for keys in [a, b] {
                if keys.len() != n {
                    return Err(EncverError::Pad { expected: n, got: keys.len() });
                }
            }
            Ok(vec![(1.0, padded_state(params, phi, value_of(a), value_of(b))?)])
        }
        Pad::Uniform => {
            let w = 1.0 / (1usize << (2 * n)) as f64;
            let mut out = Vec::with_capacity(1 << (2 * n));
            for a in 0..1usize << n {
                for b in 0..1usize << n {
                    out.push((w, padded_state(params, phi, a, b)?));
                }
            }
            Ok(out)
        }
    }
}

fn padded_state(params: &CodeParams, phi: &PureState, a: usize, b: usize) -> Result<PureState> {
    let n = phi.num_qubits();
    let logical_width = 3 * n;
    let mut logical = vec![C64::new(0.0, 0.0); 1 << logical_width];
    for (x, &amp) in phi.amplitudes().iter().enumerate() {
        let sign = if (b & x).count_ones() % 2 == 1 { -1.0 } else { 1.0 };
        logical[((x ^ a) << (2 * n)) | (a << n) | b] = amp * sign;
    }
    let nb = params.n;
    if nb == 1 {
        return Ok(PureState::from_amplitudes(logical)?);
    }
    let width = logical_width * nb;
    let mut amps = vec![C64::new(0.0, 0.0); 1 << width];
    for (l, &amp) in logical.iter().enumerate() {
        let phys = (0..logical_width).filter(|&j| (l >> (logical_width - 1 - j)) & 1 == 1).map(|j| 1usize << (width - 1 - j * nb)).sum::<usize>();
        amps[phys] = amp;
    }
    let mut st = PureState::from_amplitudes(amps)?;
    let enc = encoding_sequence(params);
    for blk in 0..logical_width {
        enc.shifted(blk * nb, width).apply(&mut st)?;
    }
    Ok(st)
}

/// H^history + H^out for a program, with one counted vacant slot: M = 2T + B + 1.
#[derive(Debug, Clone)]
pub struct EncodedHamiltonian {
    program: EncodedProgram,
    h: HistoryHamiltonian,
}

pub fn build_encoded_hamiltonian(program: &EncodedProgram) -> EncodedHamiltonian {
    let h = build_history_hamiltonian(program.sequence()).with_out(program.out_term()).with_vacant(1);
    EncodedHamiltonian { program: program.clone(), h }
}

/// M = a·k + b·γ + c for fixed κ and c_test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TermCountLaw {
    pub a: usize,
    pub b: usize,
    pub c: usize,
}

impl TermCountLaw {
    pub fn eval(&self, k: usize, gamma: usize) -> usize {
        self.a * k + self.b * gamma + self.c
    }
}

impl EncodedHamiltonian {
    pub fn program(&self) -> &EncodedProgram {
        &self.program
    }

    pub fn hamiltonian(&self) -> &HistoryHamiltonian {
        &self.h
    }

    /// M
    pub fn num_terms(&self) -> usize {
        self.h.terms().len()
    }

    pub fn total_qubits(&self) -> usize {
        self.h.total_qubits()
    }

    fn prop_step(&self, idx: usize) -> Option<&Step> {
        let term = self.h.terms().get(idx)?;
        (term.kind == TermKind::Prop).then(|| &self.program.seq.steps()[term.index - 1])
    }

    /// True for the propagation terms of the check and test phases.
    pub fn is_indexed(&self, idx: usize) -> bool {
        self.prop_step(idx).is_some_and(Step::is_indexed)
    }

    pub fn term_phase(&self, idx: usize) -> Option<Phase> {
        let term = self.h.terms().get(idx)?;
        (term.kind == TermKind::Prop).then(|| self.program.phase_of_step(term.index).map(|(p, _)| p)).flatten()
    }

    /// Support size → number of terms.
    pub fn locality_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for t in self.h.terms() {
            *h.entry(t.support.len()).or_insert(0) += 1;
        }
        h
    }

    /// Largest support among terms that are not indexed.
    pub fn plain_locality(&self) -> usize {
        (0..self.num_terms()).filter(|&i| !self.is_indexed(i)).map(|i| self.h.terms()[i].support.len()).max().unwrap_or(0)
    }

    /// Constants of M = a·k + b·γ + c read off the phase lengths.
    pub fn count_law(&self) -> TermCountLaw {
        let p = &self.program;
        let len = |ph: Phase| p.phase_steps(ph).len();
        let fixed = len(Phase::Magic) + len(Phase::Encode) + len(Phase::Hadamard) + len(Phase::Cnot) + len(Phase::Decode);
        let l_chk = len(Phase::Check) / (3 * p.instance.k());
        TermCountLaw { a: 2 * 3 * l_chk, b: 2 * p.c_test, c: 2 * fixed + PARTS + 1 }
    }

    pub fn energy(&self, psi: &PureState) -> Result<f64> {
        Ok(energy(&self.h, psi)?)
    }

    pub fn ground_state(&self, tol: f64) -> Result<GroundState> {
        Ok(min_eigenvalue(&self.h, tol)?)
    }

    pub fn summary(&self) -> HamiltonianSummary {
        let terms = self
            .h
            .terms()
            .iter()
            .enumerate()
            .map(|(i, t)| TermSummary {
                kind: t.kind,
                index: t.index,
                phase: self.term_phase(i),
                indexed: self.is_indexed(i),
                support: t.support.len(),
            })
            .collect();
        HamiltonianSummary {
            steps: self.program.len(),
            parts: PARTS,
            num_terms: self.num_terms(),
            law: self.count_law(),
            locality: self.locality_histogram().into_iter().collect(),
            plain_locality: self.plain_locality(),
            terms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TermSummary {
    pub kind: TermKind,
    pub index: usize,
    pub phase: Option<Phase>,
    pub indexed: bool,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct HamiltonianSummary {
    pub steps: usize,
    pub parts: usize,
    pub num_terms: usize,
    pub law: TermCountLaw,
    /// (support size, count)
    pub locality: Vec<(usize, usize)>,
    pub plain_locality: usize,
    pub terms: Vec<TermSummary>,
}

#[derive(Debug, Clone)]
enum TermPlan {
    Plain(Query),
    Indexed { control: Query, branches: Vec<Query> },
    Vacant,
}

fn binary_query(support: Vec<usize>, j: Matrix) -> Result<Query> {
    let povm = Povm::binary((0..support.len()).collect(), j)?;
    Ok(Query { subset: support, povm })
}

/// Picks a term uniformly; measures {J, I − J}, or for an indexed term first Eidx and then
/// {J_i, I − J_i}. Rejects on the J outcome.
#[derive(Debug, Clone)]
pub struct VencHVerifier {
    witness_qubits: usize,
    plans: Vec<TermPlan>,
    m: usize,
}

impl VencHVerifier {
    pub fn new(h: &EncodedHamiltonian) -> Result<Self> {
        if h.program.params.kappa != 0 {
            return Err(EncverError::NeedsVanilla("the term-measuring verifier"));
        }
        let ham = &h.h;
        let t_max = h.program.len();
        let lay = &h.program.layout;
        let m = h.program.instance.m();
        let plans = (0..h.num_terms())
            .map(|idx| {
                let term = &ham.terms()[idx];
                if term.kind == TermKind::Vacant {
                    return Ok(TermPlan::Vacant);
                }
                if h.is_indexed(idx) {
                    let eidx: Vec<usize> = lay.eidx.clone().map(|q| q + t_max).collect();
                    let control = if eidx.is_empty() {
                        Query::empty()
                    } else {
                        Query { povm: Povm::computational((0..eidx.len()).collect()), subset: eidx }
                    };
                    let branches = (0..m)
                        .map(|i| {
                            let lt = ham.local_branch(idx, i)?;
                            binary_query(lt.support, lt.matrix)
                        })
                        .collect::<Result<_>>()?;
                    return Ok(TermPlan::Indexed { control, branches });
                }
                let lt = ham.local_term(idx)?;
                Ok(TermPlan::Plain(binary_query(lt.support, lt.matrix)?))
            })
            .collect::<Result<_>>()?;
        Ok(Self { witness_qubits: h.total_qubits(), plans, m })
    }

    /// The term picked by τ₀.
    pub fn num_terms(&self) -> usize {
        self.plans.len()
    }

    /// Exact rejection probability over all coins and outcomes.
    pub fn rejection_probability(&self, psi: &PureState) -> Result<f64> {
        Ok(1.0 - direct_acceptance(self, psi)?)
    }
}

impl AdaptiveVerifier for VencHVerifier {
    fn witness_qubits(&self) -> usize {
        self.witness_qubits
    }
    fn outcome_alphabet(&self) -> usize {
        self.m.max(2)
    }
    fn rounds(&self) -> usize {
        2
    }
    fn locality(&self) -> usize {
        self.plans
            .iter()
            .flat_map(|p| match p {
                TermPlan::Plain(q) => vec![q.subset.len()],
                TermPlan::Indexed { control, branches } => {
                    branches.iter().map(|b| b.subset.len()).chain([control.subset.len()]).collect()
                }
                TermPlan::Vacant => vec![0],
            })
            .max()
            .unwrap_or(0)
    }
    fn coins(&self) -> usize {
        self.plans.len()
    }
    fn query(&self, history: &[usize]) -> core::result::Result<Query, ZkError> {
        let plan = self.plans.get(history[0]).ok_or(ZkError::History { rounds: 2, len: history.len() })?;
        Ok(match (history.len(), plan) {
            (1, TermPlan::Plain(q)) => q.clone(),
            (1, TermPlan::Indexed { control, .. }) => control.clone(),
            (2, TermPlan::Indexed { branches, .. }) => branches.get(history[1]).cloned().unwrap_or_else(Query::empty),
            (1 | 2, _) => Query::empty(),
            _ => return Err(ZkError::History { rounds: 2, len: history.len() }),
        })
    }
    fn decide(&self, history: &[usize]) -> bool {
        if history.len() != 3 {
            return false;
        }
        match &self.plans[history[0]] {
            TermPlan::Plain(_) => history[1] != 0,
            TermPlan::Indexed { branches, .. } => history[1] >= branches.len() || history[2] != 0,
            TermPlan::Vacant => true,
        }
    }
}

/// One sampled run of the term-measuring verifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyRun {
    pub accepted: bool,
    pub term: usize,
    /// Eidx outcome, for indexed terms.
    pub index: Option<usize>,
}

pub fn venc_h_verify<R: rand::Rng + ?Sized>(v: &VencHVerifier, witness: &PureState, rng: &mut R) -> Result<VerifyRun> {
    let (accepted, history) = crate::zkproto::sample_direct(v, witness, rng)?;
    let index = matches!(v.plans[history[0]], TermPlan::Indexed { .. }).then_some(history[1]);
    Ok(VerifyRun { accepted, term: history[0], index })
}

/// Which part of the computation a term's view reflects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ViewCase {
    /// Witness untouched: witness and ancillas are unentangled.
    BeforeWitness,
    /// Encoding checks in progress.
    Checking,
    /// Check circuit running.
    Testing,
    /// Sees the decoded output, replaced by an accepting one.
    Decoding,
}

#[derive(Debug, Clone)]
pub struct TermView {
    /// Full-register qubits, ascending.
    pub support: Vec<usize>,
    pub state: MixedState,
    pub case: ViewCase,
    /// Trace-distance allowance for this view: 1 − val when it sees the output, else 0.
    pub alpha: f64,
}

/// Reduced views of the honest history state, computed from the instance alone.
/// The honest witness is the uniformly padded top eigenvector of the instance's acceptance operator.
#[derive(Debug, Clone)]
pub struct ViewSimulator {
    h: EncodedHamiltonian,
    val: f64,
    /// Per pad: ψ'_0 … ψ'_T with a flag qubit appended.
    components: Vec<Vec<Vec<C64>>>,
    weight: f64,
}

impl ViewSimulator {
    pub fn new(h: &EncodedHamiltonian) -> Result<Self> {
        let p = &h.program;
        if p.params.kappa != 0 {
            return Err(EncverError::NeedsVanilla("view simulation"));
        }
        let vm = p.instance.val_max()?;
        let ensemble = otp_witness(&p.params, &vm.maximizer, &Pad::Uniform)?;
        let ns = p.layout.state_qubits();
        let test_end = p.phase_steps(Phase::Test).end - 1;
        let out_bit = 1usize << (ns - 1 - p.layout.output_qubit());
        let mut components = Vec::with_capacity(ensemble.len());
        for (_, w) in &ensemble {
            let comps = p.seq.components(w.amplitudes())?;
            components.push(
                comps
                    .iter()
                    .enumerate()
                    .map(|(t, psi)| {
                        let mut ext = vec![C64::new(0.0, 0.0); psi.len() * 2];
                        for (s, &a) in psi.iter().enumerate() {
                            let at = if t <= test_end || s & out_bit != 0 { s << 1 } else { ((s | out_bit) << 1) | 1 };
                            ext[at] = a;
                        }
                        ext
                    })
                    .collect(),
            );
        }
        Ok(Self { h: h.clone(), val: vm.value, components, weight: 1.0 / ensemble.len() as f64 })
    }

    /// val(I) of the instance.
    pub fn val(&self) -> f64 {
        self.val
    }

    /// Support of term `idx`, or of J_i ∪ Eidx for an indexed term.
    pub fn view_support(&self, idx: usize, branch: Option<usize>) -> Result<Vec<usize>> {
        let ham = &self.h.h;
        let term = ham.terms().get(idx).ok_or(EncverError::Term(idx))?;
        let Some(i) = branch else { return Ok(term.support.clone()) };
        if !self.h.is_indexed(idx) {
            return Err(EncverError::NotIndexed(idx));
        }
        let m = self.h.program.instance.m();
        if i >= m {
            return Err(EncverError::Branch { branch: i, m });
        }
        let t_max = self.h.program.len();
        let mut s = ham.local_branch(idx, i)?.support;
        s.extend(self.h.program.layout.eidx.clone().map(|q| q + t_max));
        s.sort_unstable();
        s.dedup();
        Ok(s)
    }

    pub fn view(&self, idx: usize, branch: Option<usize>) -> Result<TermView> {
        let support = self.view_support(idx, branch)?;
        let p = &self.h.program;
        let t_max = p.len();
        let test_end = p.phase_steps(Phase::Test).end - 1;
        let sees_output = support.contains(&(t_max + p.layout.output_qubit())) || support.contains(&test_end);
        let term = &self.h.h.terms()[idx];
        let case = if sees_output {
            ViewCase::Decoding
        } else {
            let t = match term.kind {
                TermKind::Prop | TermKind::Stab => term.index,
                TermKind::Out => t_max,
                TermKind::In | TermKind::Vacant => 0,
            };
            match p.phase_of_step(t).map(|(ph, _)| ph) {
                None | Some(Phase::Magic | Phase::Encode | Phase::Hadamard | Phase::Cnot) => ViewCase::BeforeWitness,
                Some(Phase::Check) => ViewCase::Checking,
                Some(Phase::Test) => ViewCase::Testing,
                Some(Phase::Decode) => ViewCase::Decoding,
            }
        };
        let alpha = if sees_output { (1.0 - self.val).max(0.0) } else { 0.0 };
        let rho = self.reduced(&support)?;
        Ok(TermView { support, state: MixedState::from_matrix_unchecked(rho), case, alpha })
    }

    /// Σ over time pairs whose unary words agree off the kept clock bits.
    fn reduced(&self, support: &[usize]) -> Result<Matrix> {
        let t_max = self.h.program.len();
        let ns = self.h.program.layout.state_qubits();
        let sc: Vec<usize> = support.iter().copied().filter(|&q| q < t_max).collect();
        let ss: Vec<usize> = support.iter().copied().filter(|&q| q >= t_max).map(|q| q - t_max).collect();
        if support.len() > crate::qsim::MAX_MIXED_QUBITS {
            return Err(EncverError::Capacity { what: "view", requested: support.len(), limit: crate::qsim::MAX_MIXED_QUBITS });
        }
        let ds = 1usize << ss.len();
        let d = (1usize << sc.len()) * ds;
        let clock_local = |t: usize| -> usize {
            sc.iter().enumerate().filter(|(_, &c)| c < t).map(|(k, _)| 1usize << (sc.len() - 1 - k)).sum()
        };
        let mut rho = Matrix::zeros(d, d);
        let w = self.weight / (t_max + 1) as f64;
        for comps in &self.components {
            for t1 in 0..=t_max {
                for t2 in 0..=t_max {
                    let (lo, hi) = (t1.min(t2), t1.max(t2));
                    if (lo..hi).any(|c| !sc.contains(&c)) {
                        continue;
                    }
                    let block = cross_reduce(&comps[t1], &comps[t2], ns + 1, &ss);
                    let (r0, c0) = (clock_local(t1) * ds, clock_local(t2) * ds);
                    for r in 0..ds {
                        for c in 0..ds {
                            rho[(r0 + r, c0 + c)] += block[(r, c)] * w;
                        }
                    }
                }
            }
        }
        Ok(rho)
    }

    /// The same view from the full honest history state, padded pad by pad.
    pub fn full_view(&self, support: &[usize]) -> Result<MixedState> {
        let p = &self.h.program;
        let total = self.h.total_qubits();
        if total > MAX_PURE_QUBITS {
            return Err(EncverError::Capacity { what: "history state", requested: total, limit: MAX_PURE_QUBITS });
        }
        let vm = p.instance.val_max()?;
        let ensemble = otp_witness(&p.params, &vm.maximizer, &Pad::Uniform)?;
        let d = 1usize << support.len();
        let mut rho = Matrix::zeros(d, d);
        for (w, wit) in &ensemble {
            let hist = history_state(&p.seq, wit)?;
            rho = rho.add(&hist.reduced(support)?.matrix().scale(C64::new(*w, 0.0)));
        }
        Ok(MixedState::from_matrix(rho)?)
    }
}

/// Reduced view of the honest history state on term `idx` (or on J_i ∪ Eidx).
pub fn simulate_term_view(h: &EncodedHamiltonian, idx: usize, branch: Option<usize>) -> Result<TermView> {
    ViewSimulator::new(h)?.view(idx, branch)
}

/// The reduction from QSAT to the term-measuring verifier, with its promise bookkeeping.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub padded: QsatInstance,
    pub program: EncodedProgram,
    pub hamiltonian: EncodedHamiltonian,
    pub verifier: Option<VencHVerifier>,
    pub num_terms: usize,
    pub val: Option<f64>,
    pub spectrum: Option<Spectrum>,
}

/// λ_min bracketed between ((1 − val)/C)² and 1 − val.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Spectrum {
    pub lambda_min: f64,
    pub residual: f64,
    /// 1 − val: upper bound on λ_min.
    pub alpha_bar: f64,
    /// Measured λ_min, the energy every witness pays.
    pub beta_bar: f64,
    /// 1 − α̅/M
    pub completeness: f64,
    /// 1 − β̅/M
    pub soundness: f64,
    /// (1 − val)/√λ_min, when val < 1.
    pub constant: Option<f64>,
}

pub fn reduce_localqma(instance: &QsatInstance, params: CodeParams) -> Result<Reduction> {
    let padded = instance.pad_to_power_of_two();
    let program = build_program(&padded, params)?;
    let hamiltonian = build_encoded_hamiltonian(&program);
    let num_terms = hamiltonian.num_terms();
    if params.kappa != 0 {
        return Ok(Reduction { padded, program, hamiltonian, verifier: None, num_terms, val: None, spectrum: None });
    }
    let verifier = Some(VencHVerifier::new(&hamiltonian)?);
    let val = padded.val_max()?.value;
    let gs = hamiltonian.ground_state(1e-10)?;
    let mf = num_terms as f64;
    let alpha_bar = (1.0 - val).max(0.0);
    let beta_bar = gs.energy.max(0.0);
    let constant = (alpha_bar > 1e-9 && beta_bar > 0.0).then(|| alpha_bar / beta_bar.sqrt());
    let spectrum = Spectrum {
        lambda_min: gs.energy,
        residual: gs.residual,
        alpha_bar,
        beta_bar,
        completeness: 1.0 - alpha_bar / mf,
        soundness: 1.0 - beta_bar / mf,
        constant,
    };
    Ok(Reduction { padded, program, hamiltonian, verifier, num_terms, val: Some(val), spectrum: Some(spectrum) })
}

/// ⟨Ψ|H^out|Ψ⟩ divided by the rejection probability of the final state ψ_T, for the
/// honest history state of `witness`. Equals 1/(T+1) for the uniform-weight history state.
pub fn out_normalization(h: &EncodedHamiltonian, witness: &PureState) -> Result<f64> {
    let p = &h.program;
    let hist = history_state(&p.seq, witness)?;
    let out_idx = h.h.terms().iter().position(|t| t.kind == TermKind::Out).expect("out term present");
    let e_out = h.h.term_energies(hist.amplitudes())?[out_idx];
    let reject = 1.0 - p.run(witness)?;
    Ok(e_out / reject)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::qsim::trace_distance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vanilla(inst: &QsatInstance) -> EncodedProgram {
        build_program(inst, CodeParams::new(0)).unwrap()
    }

    #[test]
    fn vanilla_step_count() {
        let p = vanilla(&fixtures::all_accept(2, 2, 1, 1).unwrap());
        assert_eq!(p.len(), 6 + 3 + 4);
        let lens: Vec<usize> = p.phases().iter().map(|x| x.1).collect();
        assert_eq!(lens, vec![2, 1, 1, 1, 3, 4, 1]);
        let h = build_encoded_hamiltonian(&p);
        assert_eq!(h.num_terms(), 2 * p.len() + PARTS + 1);
        assert_eq!(h.count_law(), TermCountLaw { a: 6, b: 8, c: 18 });
    }

    #[test]
    fn steane_program_counts() {
        let inst = fixtures::all_accept(2, 2, 1, 1).unwrap();
        let p = build_program(&inst, CodeParams::new(1)).unwrap();
        assert_eq!(p.len(), 44 + 90 + 4);
        let h = build_encoded_hamiltonian(&p);
        assert_eq!(h.num_terms(), 180 + 8 + 94);
        assert_eq!(h.count_law().eval(1, 1), h.num_terms());
        assert!(matches!(build_program(&fixtures::mixed(2, 3, 1, 1).unwrap(), CodeParams::new(0)), Err(EncverError::NotPowerOfTwo(3))));
    }

    #[test]
    fn one_check_accepts_padded_one() {
        let inst = fixtures::copy_checks(1, 1, 1, 1).unwrap();
        let p = vanilla(&inst);
        let one = PureState::from_bits(&[true]).unwrap();
        let w = otp_witness(p.params(), &one, &Pad::Keys { a: vec![false], b: vec![false] }).unwrap();
        assert!((run_venc_ensemble(&p, &w).unwrap() - 1.0).abs() < 1e-12);
        let w = otp_witness(p.params(), &one, &Pad::Uniform).unwrap();
        assert!((run_venc_ensemble(&p, &w).unwrap() - 1.0).abs() < 1e-12);
        let zero = PureState::from_bits(&[false]).unwrap();
        let w = otp_witness(p.params(), &zero, &Pad::Uniform).unwrap();
        assert!(run_venc_ensemble(&p, &w).unwrap().abs() < 1e-12);
    }

    #[test]
    fn t_gadget_matches_instance_value() {
        let inst = fixtures::with_t(1, 1, 1).unwrap();
        let p = vanilla(&inst);
        let vm = inst.val_max().unwrap();
        let w = otp_witness(p.params(), &vm.maximizer, &Pad::Uniform).unwrap();
        assert!((run_venc_ensemble(&p, &w).unwrap() - vm.value).abs() < 1e-9);
    }

    #[test]
    fn history_energy_equals_rejection_over_t_plus_one() {
        let inst = fixtures::three_quarter(1, 1, 1).unwrap();
        let p = vanilla(&inst);
        let h = build_encoded_hamiltonian(&p);
        let vm = inst.val_max().unwrap();
        let w = &otp_witness(p.params(), &vm.maximizer, &Pad::Keys { a: vec![true], b: vec![false] }).unwrap()[0].1;
        let ratio = out_normalization(&h, w).unwrap();
        assert!((ratio * (p.len() + 1) as f64 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn verifier_rejects_with_energy_over_m() {
        let inst = fixtures::contradictory(1, 1, 1).unwrap();
        let h = build_encoded_hamiltonian(&vanilla(&inst));
        let v = VencHVerifier::new(&h).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let psi = PureState::random(h.total_qubits(), &mut rng).unwrap();
        let rej = v.rejection_probability(&psi).unwrap();
        let e = h.energy(&psi).unwrap() / h.num_terms() as f64;
        assert!((rej - e).abs() < 1e-9, "{rej} vs {e}");
    }

    #[test]
    fn views_match_full_history_state() {
        let inst = fixtures::three_quarter(1, 1, 1).unwrap();
        let h = build_encoded_hamiltonian(&vanilla(&inst));
        let sim = ViewSimulator::new(&h).unwrap();
        for idx in [0, 5, 9, h.num_terms() - 2, h.num_terms() - 3] {
            let view = sim.view(idx, None).unwrap();
            let full = sim.full_view(&view.support).unwrap();
            let d = trace_distance(&view.state, &full).unwrap();
            assert!(d <= view.alpha + 1e-9, "term {idx}: {d} > {}", view.alpha);
            if view.case == ViewCase::BeforeWitness {
                assert!(d < 1e-9);
            }
        }
    }
}
