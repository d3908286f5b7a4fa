//! Feynman–Kitaev history states and Hamiltonians with a unary clock.
//!
//! The full register is `T` clock qubits followed by the state register
//! (`n1` witness qubits, then `n2` ancillas). Clock qubit `clock(t)`, for `t` in `1..=T`,
//! is register index `t − 1`; legal clock words are `unary(t) = 1^t 0^(T−t)`.
//!
//! Propagation term `t` acts on `clock(t−1), clock(t), clock(t+1)` (neighbours that exist):
//! it hops `…1 0 0…` ↔ `…1 1 0…` while applying `U_t`, so at the ends it touches two clock
//! qubits. Every term preserves the legal-clock subspace, which lets [`LegalClockView`]
//! solve the spectrum on `(T+1)·2^(n1+n2)` amplitudes.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{dot, lowest_eigenpair, norm, EigenPair, LanczosOptions, LinalgError, LinearOperator, Matrix};
use crate::qsim::{circuit_unitary, local_offsets, rest_bases, GateOp, PureState, QsimError, MAX_PURE_QUBITS};
use crate::C64;

/// Largest full register on which [`min_eigenvalue`] runs Lanczos directly.
pub const FULL_SOLVE_QUBITS: usize = 16;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClockError {
    #[error("sequence needs at least one step")]
    NoSteps,
    #[error("partition: {0}")]
    Partition(&'static str),
    #[error("step {step} touches qubit {qubit} outside the {width}-qubit state register")]
    StepSupport { step: usize, qubit: usize, width: usize },
    #[error("indexed step {step}: branch gates touch the control register")]
    ControlOverlap { step: usize },
    #[error("clock value {t} outside 0..={max}")]
    ClockRange { t: usize, max: usize },
    #[error("vector length {got} does not match {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("term {0} has no branch decomposition")]
    NotIndexed(usize),
    #[error("legal-clock solution {0} is not below 1, so it need not be the global minimum")]
    RestrictedAboveOne(f64),
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// One sub-unitary U_t of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    /// Product of gates, applied in order.
    Gates(Vec<GateOp>),
    /// Σ_i (gates_i) ⊗ Π_i on `control`. The control is read in digits of `digit` qubits,
    /// each digit valued by its parity, most significant first; with `digit = 1` this is the
    /// basis value. Index values with no branch act as identity.
    Indexed { control: Vec<usize>, digit: usize, branches: Vec<Vec<GateOp>> },
}

fn support_of(gates: &[GateOp]) -> Vec<usize> {
    let mut s: Vec<usize> = gates.iter().flat_map(|g| g.targets().iter().copied()).collect();
    s.sort_unstable();
    s.dedup();
    s
}

impl Step {
    pub fn identity() -> Self {
        Step::Gates(Vec::new())
    }

    /// Sorted qubits the step acts on (control included).
    pub fn support(&self) -> Vec<usize> {
        match self {
            Step::Gates(g) => support_of(g),
            Step::Indexed { control, branches, .. } => {
                let mut s: Vec<usize> = branches.iter().flat_map(|b| support_of(b)).collect();
                s.extend_from_slice(control);
                s.sort_unstable();
                s.dedup();
                s
            }
        }
    }

    pub fn is_indexed(&self) -> bool {
        matches!(self, Step::Indexed { .. })
    }

    /// Sorted support of branch `i` alone (control excluded).
    pub fn branch_support(&self, i: usize) -> Vec<usize> {
        match self {
            Step::Gates(g) => support_of(g),
            Step::Indexed { branches, .. } => branches.get(i).map_or(Vec::new(), |b| support_of(b)),
        }
    }

    fn gates_adjoint(gates: &[GateOp]) -> Vec<GateOp> {
        gates.iter().rev().map(GateOp::adjoint).collect()
    }

    pub fn adjoint(&self) -> Self {
        match self {
            Step::Gates(g) => Step::Gates(Self::gates_adjoint(g)),
            Step::Indexed { control, digit, branches } => Step::Indexed {
                control: control.clone(),
                digit: *digit,
                branches: branches.iter().map(|b| Self::gates_adjoint(b)).collect(),
            },
        }
    }

    /// Applies the step to an amplitude vector over `n` qubits.
    pub fn apply(&self, amps: &mut [C64], n: usize) -> Result<(), QsimError> {
        match self {
            Step::Gates(g) => {
                for gate in g {
                    gate.apply_to(amps, n)?;
                }
            }
            Step::Indexed { control, digit, branches } => {
                let offs = local_offsets(n, control);
                let bases: Vec<usize> = rest_bases(n, control).collect();
                let mut tmp = vec![C64::new(0.0, 0.0); amps.len()];
                for (i, gates) in branches.iter().enumerate() {
                    if gates.is_empty() {
                        continue;
                    }
                    let values: Vec<usize> =
                        (0..offs.len()).filter(|&v| index_value(v, control.len(), *digit) == i).collect();
                    tmp.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
                    for &v in &values {
                        for &b in &bases {
                            tmp[b + offs[v]] = amps[b + offs[v]];
                        }
                    }
                    for gate in gates {
                        gate.apply_to(&mut tmp, n)?;
                    }
                    for &v in &values {
                        for &b in &bases {
                            amps[b + offs[v]] = tmp[b + offs[v]];
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Dense unitary of the whole step on `support` (ordered).
    pub fn dense(&self, support: &[usize]) -> Result<Matrix, QsimError> {
        match self {
            Step::Gates(g) => circuit_unitary(g, support),
            Step::Indexed { .. } => {
                let n = support.len();
                let remapped = self.remap(|q| support.iter().position(|&s| s == q).unwrap_or(usize::MAX));
                let d = 1usize << n;
                let mut u = Matrix::zeros(d, d);
                for col in 0..d {
                    let mut v = vec![C64::new(0.0, 0.0); d];
                    v[col] = C64::new(1.0, 0.0);
                    remapped.apply(&mut v, n)?;
                    for (row, a) in v.into_iter().enumerate() {
                        u[(row, col)] = a;
                    }
                }
                Ok(u)
            }
        }
    }

    /// Dense unitary of branch `i` on `support` (ordered).
    pub fn branch_dense(&self, i: usize, support: &[usize]) -> Result<Matrix, QsimError> {
        match self {
            Step::Gates(g) => circuit_unitary(g, support),
            Step::Indexed { branches, .. } => circuit_unitary(branches.get(i).map_or(&[][..], |b| b), support),
        }
    }

    /// Relabels every qubit through `f`.
    pub fn remap(&self, f: impl Fn(usize) -> usize + Copy) -> Self {
        match self {
            Step::Gates(g) => Step::Gates(g.iter().map(|x| x.remap(f)).collect()),
            Step::Indexed { control, digit, branches } => Step::Indexed {
                control: control.iter().map(|&q| f(q)).collect(),
                digit: *digit,
                branches: branches.iter().map(|b| b.iter().map(|x| x.remap(f)).collect()).collect(),
            },
        }
    }
}

/// Index read from control value `v` over `width` qubits in parity digits of `digit` qubits.
pub fn index_value(v: usize, width: usize, digit: usize) -> usize {
    if digit <= 1 {
        return v;
    }
    (0..width / digit).fold(0, |acc, d| {
        let shift = width - (d + 1) * digit;
        let bits = (v >> shift) & ((1usize << digit) - 1);
        (acc << 1) | (bits.count_ones() as usize & 1)
    })
}

/// U_1, …, U_T on `n1` witness and `n2` ancilla qubits, with an ancilla partition S_1…S_B.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitarySequence {
    steps: Vec<Step>,
    n1: usize,
    n2: usize,
    partition: Vec<Vec<usize>>,
}

impl UnitarySequence {
    /// A single step is padded with an identity step so that T ≥ 2.
    /// Partition entries are ancilla-relative (0..n2); empty parts are allowed.
    pub fn new(steps: Vec<Step>, n1: usize, n2: usize, partition: Vec<Vec<usize>>) -> Result<Self, ClockError> {
        let mut steps = steps;
        match steps.len() {
            0 => return Err(ClockError::NoSteps),
            1 => steps.push(Step::identity()),
            _ => {}
        }
        let width = n1 + n2;
        for (t, s) in steps.iter().enumerate() {
            if let Some(&q) = s.support().iter().find(|&&q| q >= width) {
                return Err(ClockError::StepSupport { step: t + 1, qubit: q, width });
            }
            if let Step::Indexed { control, branches, .. } = s {
                if branches.iter().flatten().any(|g| g.targets().iter().any(|q| control.contains(q))) {
                    return Err(ClockError::ControlOverlap { step: t + 1 });
                }
            }
        }
        let mut seen = vec![false; n2];
        for part in &partition {
            for &q in part {
                if q >= n2 {
                    return Err(ClockError::Partition("ancilla index out of range"));
                }
                if core::mem::replace(&mut seen[q], true) {
                    return Err(ClockError::Partition("parts overlap"));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(ClockError::Partition("parts do not cover the ancilla register"));
        }
        Ok(Self { steps, n1, n2, partition })
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    /// T
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    pub fn state_qubits(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn partition(&self) -> &[Vec<usize>] {
        &self.partition
    }

    pub fn total_qubits(&self) -> usize {
        self.len() + self.state_qubits()
    }

    /// ψ_t = U_t ⋯ U_1 (φ ⊗ 0^{n2}) for t = 0..=T.
    pub fn components(&self, phi: &[C64]) -> Result<Vec<Vec<C64>>, ClockError> {
        if phi.len() != 1 << self.n1 {
            return Err(ClockError::Dimension { expected: 1 << self.n1, got: phi.len() });
        }
        let ns = self.state_qubits();
        let mut psi = vec![C64::new(0.0, 0.0); 1 << ns];
        for (i, &a) in phi.iter().enumerate() {
            psi[i << self.n2] = a;
        }
        let mut out = Vec::with_capacity(self.len() + 1);
        out.push(psi.clone());
        for s in &self.steps {
            s.apply(&mut psi, ns)?;
            out.push(psi.clone());
        }
        Ok(out)
    }
}

/// Clock word 1^t 0^(T−t) as a basis-state index over T qubits.
pub fn unary_index(t: usize, clock: usize) -> usize {
    ((1usize << t) - 1) << (clock - t)
}

/// |unary(t, T)⟩.
pub fn unary_clock(t: usize, clock: usize) -> Result<PureState, ClockError> {
    if t > clock {
        return Err(ClockError::ClockRange { t, max: clock });
    }
    Ok(PureState::basis(clock, unary_index(t, clock))?)
}

/// Output penalty (I − |pattern⟩⟨pattern|) on state qubits ⊗ |1⟩⟨1| on clock(T).
#[derive(Debug, Clone, PartialEq)]
pub struct OutTerm {
    pub qubits: Vec<usize>,
    pub accept: Vec<bool>,
}

pub fn out_term(qubits: Vec<usize>, accept: Vec<bool>) -> OutTerm {
    OutTerm { qubits, accept }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum TermKind {
    Prop,
    Stab,
    In,
    Out,
    /// A counted slot carrying the zero operator.
    Vacant,
}

/// One Hermitian term. `index` is t for prop/stab and i for in (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub kind: TermKind,
    pub index: usize,
    /// Full-register qubits, sorted.
    pub support: Vec<usize>,
}

/// A term as a dense matrix on an ordered list of full-register qubits.
#[derive(Debug, Clone)]
pub struct LocalTerm {
    pub support: Vec<usize>,
    pub matrix: Matrix,
}

/// H^prop + H^stab + H^in, optionally with H^out and vacant slots.
#[derive(Debug, Clone)]
pub struct HistoryHamiltonian {
    seq: UnitarySequence,
    out: Option<OutTerm>,
    terms: Vec<Term>,
}

pub fn build_history_hamiltonian(seq: &UnitarySequence) -> HistoryHamiltonian {
    let t_max = seq.len();
    let mut terms = Vec::new();
    for t in 1..=t_max {
        let mut support: Vec<usize> = prop_clock_bits(t, t_max).iter().map(|c| c - 1).collect();
        support.extend(seq.steps[t - 1].support().iter().map(|q| q + t_max));
        support.sort_unstable();
        terms.push(Term { kind: TermKind::Prop, index: t, support });
    }
    for t in 1..t_max {
        terms.push(Term { kind: TermKind::Stab, index: t, support: vec![t - 1, t] });
    }
    for (i, part) in seq.partition.iter().enumerate() {
        let mut support = vec![0];
        support.extend(part.iter().map(|q| t_max + seq.n1 + q));
        support.sort_unstable();
        terms.push(Term { kind: TermKind::In, index: i + 1, support });
    }
    HistoryHamiltonian { seq: seq.clone(), out: None, terms }
}

/// Clock positions (1-based) touched by propagation term t.
fn prop_clock_bits(t: usize, t_max: usize) -> Vec<usize> {
    (t.saturating_sub(1).max(1)..=(t + 1).min(t_max)).collect()
}

impl HistoryHamiltonian {
    pub fn with_out(mut self, out: OutTerm) -> Self {
        let t_max = self.seq.len();
        let mut support = vec![t_max - 1];
        support.extend(out.qubits.iter().map(|q| q + t_max));
        support.sort_unstable();
        self.terms.push(Term { kind: TermKind::Out, index: 1, support });
        self.out = Some(out);
        self
    }

    /// Adds a counted zero-operator slot.
    pub fn with_vacant(mut self, index: usize) -> Self {
        self.terms.push(Term { kind: TermKind::Vacant, index, support: Vec::new() });
        self
    }

    pub fn sequence(&self) -> &UnitarySequence {
        &self.seq
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn clock_width(&self) -> usize {
        self.seq.len()
    }

    pub fn total_qubits(&self) -> usize {
        self.seq.total_qubits()
    }

    pub fn dim(&self) -> usize {
        1 << self.total_qubits()
    }

    fn clock_bit(&self, t: usize) -> usize {
        1usize << (self.seq.len() - t)
    }

    fn state_mask(&self, qubits: &[usize]) -> usize {
        let ns = self.seq.state_qubits();
        qubits.iter().map(|q| 1usize << (ns - 1 - q)).sum()
    }

    fn pattern_value(&self, qubits: &[usize], bits: &[bool]) -> usize {
        let ns = self.seq.state_qubits();
        qubits.iter().zip(bits).filter(|(_, &b)| b).map(|(q, _)| 1usize << (ns - 1 - q)).sum()
    }

    /// y = term · x on the full register.
    pub fn apply_term(&self, idx: usize, x: &[C64], y: &mut [C64]) -> Result<(), ClockError> {
        let dim = self.dim();
        if x.len() != dim || y.len() != dim {
            return Err(ClockError::Dimension { expected: dim, got: x.len() });
        }
        y.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        let term = &self.terms[idx];
        let t_max = self.seq.len();
        let ns = self.seq.state_qubits();
        let ds = 1usize << ns;
        let clocks = 1usize << t_max;
        match term.kind {
            TermKind::Prop => {
                let t = term.index;
                let step = &self.seq.steps[t - 1];
                let adj = step.adjoint();
                let flip = self.clock_bit(t);
                let mut buf = vec![C64::new(0.0, 0.0); ds];
                for c in 0..clocks {
                    if c & flip != 0 {
                        continue;
                    }
                    if t > 1 && c & self.clock_bit(t - 1) == 0 {
                        continue;
                    }
                    if t < t_max && c & self.clock_bit(t + 1) != 0 {
                        continue;
                    }
                    let c1 = c | flip;
                    let (a, b) = (c * ds, c1 * ds);
                    buf.copy_from_slice(&x[b..b + ds]);
                    adj.apply(&mut buf, ns)?;
                    for s in 0..ds {
                        y[a + s] = (x[a + s] - buf[s]) * 0.5;
                    }
                    buf.copy_from_slice(&x[a..a + ds]);
                    step.apply(&mut buf, ns)?;
                    for s in 0..ds {
                        y[b + s] = (x[b + s] - buf[s]) * 0.5;
                    }
                }
            }
            TermKind::Stab => {
                let (lo, hi) = (self.clock_bit(term.index), self.clock_bit(term.index + 1));
                for c in 0..clocks {
                    if c & lo == 0 && c & hi != 0 {
                        y[c * ds..(c + 1) * ds].copy_from_slice(&x[c * ds..(c + 1) * ds]);
                    }
                }
            }
            TermKind::In => {
                let part: Vec<usize> = self.seq.partition[term.index - 1].iter().map(|q| q + self.seq.n1).collect();
                let mask = self.state_mask(&part);
                let first = self.clock_bit(1);
                for c in (0..clocks).filter(|c| c & first == 0) {
                    for s in (0..ds).filter(|s| s & mask != 0) {
                        y[c * ds + s] = x[c * ds + s];
                    }
                }
            }
            TermKind::Out => {
                let out = self.out.as_ref().expect("out term present");
                let mask = self.state_mask(&out.qubits);
                let want = self.pattern_value(&out.qubits, &out.accept);
                let last = self.clock_bit(t_max);
                for c in (0..clocks).filter(|c| c & last != 0) {
                    for s in (0..ds).filter(|s| s & mask != want) {
                        y[c * ds + s] = x[c * ds + s];
                    }
                }
            }
            TermKind::Vacant => {}
        }
        Ok(())
    }

    /// y = H x on the full register.
    pub fn apply_sum(&self, x: &[C64], y: &mut [C64]) -> Result<(), ClockError> {
        y.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        let mut buf = vec![C64::new(0.0, 0.0); x.len()];
        for idx in 0..self.terms.len() {
            self.apply_term(idx, x, &mut buf)?;
            for (a, b) in y.iter_mut().zip(&buf) {
                *a += b;
            }
        }
        Ok(())
    }

    /// ⟨ψ|term|ψ⟩ for every term.
    pub fn term_energies(&self, psi: &[C64]) -> Result<Vec<f64>, ClockError> {
        let mut buf = vec![C64::new(0.0, 0.0); psi.len()];
        (0..self.terms.len())
            .map(|idx| {
                self.apply_term(idx, psi, &mut buf)?;
                Ok(dot(psi, &buf).re)
            })
            .collect()
    }

    /// Dense matrix of term `idx` on its support (in `support` order).
    pub fn local_term(&self, idx: usize) -> Result<LocalTerm, ClockError> {
        let term = &self.terms[idx];
        match term.kind {
            TermKind::Prop => {
                let step = &self.seq.steps[term.index - 1];
                let state: Vec<usize> = step.support();
                self.prop_local(term.index, &state, &step.dense(&state)?)
            }
            _ => self.diagonal_local(idx),
        }
    }

    /// J_i for an indexed propagation term: the term with U_t replaced by branch `i`, control excluded.
    pub fn local_branch(&self, idx: usize, branch: usize) -> Result<LocalTerm, ClockError> {
        let term = &self.terms[idx];
        let step = match term.kind {
            TermKind::Prop => &self.seq.steps[term.index - 1],
            _ => return Err(ClockError::NotIndexed(idx)),
        };
        if !step.is_indexed() {
            return Err(ClockError::NotIndexed(idx));
        }
        let state = step.branch_support(branch);
        self.prop_local(term.index, &state, &step.branch_dense(branch, &state)?)
    }

    fn prop_local(&self, t: usize, state: &[usize], u: &Matrix) -> Result<LocalTerm, ClockError> {
        let t_max = self.seq.len();
        let bits = prop_clock_bits(t, t_max);
        let nc = bits.len();
        let pos = bits.iter().position(|&b| b == t).expect("t among its clock bits");
        // a: t−1 set (if present), t clear, t+1 clear; b: a with t set
        let a: usize = bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b < t)
            .map(|(k, _)| 1usize << (nc - 1 - k))
            .sum();
        let b = a | (1usize << (nc - 1 - pos));
        let ds = u.rows();
        let d = (1usize << nc) * ds;
        let mut m = Matrix::zeros(d, d);
        for s in 0..ds {
            m[(a * ds + s, a * ds + s)] += C64::new(0.5, 0.0);
            m[(b * ds + s, b * ds + s)] += C64::new(0.5, 0.0);
            for r in 0..ds {
                m[(b * ds + r, a * ds + s)] -= u[(r, s)] * 0.5;
                m[(a * ds + s, b * ds + r)] -= u[(r, s)].conj() * 0.5;
            }
        }
        let mut support: Vec<usize> = bits.iter().map(|c| c - 1).collect();
        support.extend(state.iter().map(|q| q + t_max));
        Ok(LocalTerm { support, matrix: m })
    }

    fn diagonal_local(&self, idx: usize) -> Result<LocalTerm, ClockError> {
        let term = &self.terms[idx];
        let t_max = self.seq.len();
        let support = term.support.clone();
        let n = support.len();
        let d = 1usize << n;
        let bit = |l: usize, q: usize| -> bool {
            let k = support.iter().position(|&s| s == q).expect("qubit in support");
            (l >> (n - 1 - k)) & 1 == 1
        };
        let mut m = Matrix::zeros(d, d);
        for l in 0..d {
            let on = match term.kind {
                TermKind::Stab => !bit(l, term.index - 1) && bit(l, term.index),
                TermKind::In => {
                    let part = &self.seq.partition[term.index - 1];
                    !bit(l, 0) && part.iter().any(|q| bit(l, t_max + self.seq.n1 + q))
                }
                TermKind::Out => {
                    let out = self.out.as_ref().expect("out term present");
                    bit(l, t_max - 1) && out.qubits.iter().zip(&out.accept).any(|(q, &a)| bit(l, t_max + q) != a)
                }
                TermKind::Vacant => false,
                TermKind::Prop => unreachable!("propagation terms are not diagonal"),
            };
            if on {
                m[(l, l)] = C64::new(1.0, 0.0);
            }
        }
        Ok(LocalTerm { support, matrix: m })
    }
}

impl LinearOperator for HistoryHamiltonian {
    fn dim(&self) -> usize {
        HistoryHamiltonian::dim(self)
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        self.apply_sum(x, y).expect("dimensions checked by caller");
    }
}

/// The Hamiltonian restricted to legal clock words: blocks x_0…x_T of 2^(n1+n2) amplitudes.
pub struct LegalClockView<'a>(pub &'a HistoryHamiltonian);

impl LegalClockView<'_> {
    pub fn block(&self) -> usize {
        1 << self.0.seq.state_qubits()
    }

    /// Places the blocks at their unary clock words in a full-register vector.
    pub fn embed(&self, v: &[C64]) -> Result<Vec<C64>, ClockError> {
        let h = self.0;
        let t_max = h.seq.len();
        let ds = self.block();
        let total = h.total_qubits();
        if total > MAX_PURE_QUBITS {
            return Err(QsimError::Capacity { requested: total, limit: MAX_PURE_QUBITS }.into());
        }
        let mut out = vec![C64::new(0.0, 0.0); h.dim()];
        for t in 0..=t_max {
            let c = unary_index(t, t_max);
            out[c * ds..(c + 1) * ds].copy_from_slice(&v[t * ds..(t + 1) * ds]);
        }
        Ok(out)
    }

    fn apply_term(&self, idx: usize, x: &[C64], y: &mut [C64]) {
        let h = self.0;
        let term = &h.terms[idx];
        let ds = self.block();
        let ns = h.seq.state_qubits();
        let t_max = h.seq.len();
        match term.kind {
            TermKind::Prop => {
                let t = term.index;
                let step = &h.seq.steps[t - 1];
                let mut buf = x[t * ds..(t + 1) * ds].to_vec();
                step.adjoint().apply(&mut buf, ns).expect("validated step");
                for s in 0..ds {
                    y[(t - 1) * ds + s] += (x[(t - 1) * ds + s] - buf[s]) * 0.5;
                }
                buf.copy_from_slice(&x[(t - 1) * ds..t * ds]);
                step.apply(&mut buf, ns).expect("validated step");
                for s in 0..ds {
                    y[t * ds + s] += (x[t * ds + s] - buf[s]) * 0.5;
                }
            }
            TermKind::Stab | TermKind::Vacant => {}
            TermKind::In => {
                let part: Vec<usize> = h.seq.partition[term.index - 1].iter().map(|q| q + h.seq.n1).collect();
                let mask = h.state_mask(&part);
                for s in (0..ds).filter(|s| s & mask != 0) {
                    y[s] += x[s];
                }
            }
            TermKind::Out => {
                let out = h.out.as_ref().expect("out term present");
                let mask = h.state_mask(&out.qubits);
                let want = h.pattern_value(&out.qubits, &out.accept);
                for s in (0..ds).filter(|s| s & mask != want) {
                    y[t_max * ds + s] += x[t_max * ds + s];
                }
            }
        }
    }
}

impl LinearOperator for LegalClockView<'_> {
    fn dim(&self) -> usize {
        (self.0.seq.len() + 1) * self.block()
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        for idx in 0..self.0.terms.len() {
            self.apply_term(idx, x, y);
        }
    }
}

/// Where a ground vector lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Full,
    /// Blocks per legal clock word, see [`LegalClockView`].
    LegalClock,
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub energy: f64,
    pub vector: Vec<C64>,
    pub residual: f64,
    pub space: Space,
}

/// Lowest eigenpair. Registers above [`FULL_SOLVE_QUBITS`] are solved on the legal-clock block;
/// illegal clock words cost at least 1 through H^stab, so a legal value below 1 is the global minimum.
pub fn min_eigenvalue(h: &HistoryHamiltonian, tol: f64) -> Result<GroundState, ClockError> {
    let opts = LanczosOptions { tol, ..LanczosOptions::default() };
    if h.total_qubits() <= FULL_SOLVE_QUBITS {
        let EigenPair { value, vector, residual } = lowest_eigenpair(h, opts)?;
        return Ok(GroundState { energy: value, vector, residual, space: Space::Full });
    }
    let view = LegalClockView(h);
    let EigenPair { value, vector, residual } = lowest_eigenpair(&view, opts)?;
    if value >= 1.0 {
        return Err(ClockError::RestrictedAboveOne(value));
    }
    Ok(GroundState { energy: value, vector, residual, space: Space::LegalClock })
}

/// (1/√(T+1)) Σ_t |unary(t)⟩ ⊗ U_[1,t](φ ⊗ 0^{n2}).
pub fn history_state(seq: &UnitarySequence, phi: &PureState) -> Result<PureState, ClockError> {
    let total = seq.total_qubits();
    if total > MAX_PURE_QUBITS {
        return Err(QsimError::Capacity { requested: total, limit: MAX_PURE_QUBITS }.into());
    }
    let comps = seq.components(phi.amplitudes())?;
    let t_max = seq.len();
    let ds = 1usize << seq.state_qubits();
    let w = 1.0 / ((t_max + 1) as f64).sqrt();
    let mut amps = vec![C64::new(0.0, 0.0); 1 << total];
    for (t, psi) in comps.iter().enumerate() {
        let c = unary_index(t, t_max);
        for (s, a) in psi.iter().enumerate() {
            amps[c * ds + s] = a * w;
        }
    }
    Ok(PureState::from_amplitudes(amps)?)
}

/// ⟨ψ|H|ψ⟩ summed term by term.
pub fn energy(h: &HistoryHamiltonian, psi: &PureState) -> Result<f64, ClockError> {
    Ok(h.term_energies(psi.amplitudes())?.iter().sum())
}

/// ‖ψ − WW†ψ‖, where W maps φ to its history state.
pub fn history_subspace_distance(seq: &UnitarySequence, psi: &PureState) -> Result<f64, ClockError> {
    let t_max = seq.len();
    let ns = seq.state_qubits();
    let ds = 1usize << ns;
    if psi.num_qubits() != t_max + ns {
        return Err(ClockError::Dimension { expected: t_max + ns, got: psi.num_qubits() });
    }
    let amps = psi.amplitudes();
    // Σ_t U_[1,t]† ψ_t, peeled one step at a time from the top
    let mut running = vec![C64::new(0.0, 0.0); ds];
    for t in (0..=t_max).rev() {
        let c = unary_index(t, t_max);
        for (r, a) in running.iter_mut().zip(&amps[c * ds..(c + 1) * ds]) {
            *r += a;
        }
        if t > 0 {
            seq.steps[t - 1].adjoint().apply(&mut running, ns)?;
        }
    }
    let w = 1.0 / (t_max + 1) as f64;
    let anc_mask = (1usize << seq.n2) - 1;
    let mut proj: Vec<C64> = running.iter().enumerate().map(|(s, a)| if s & anc_mask == 0 { a * w } else { C64::new(0.0, 0.0) }).collect();
    let legal: Vec<usize> = (0..=t_max).map(|t| unary_index(t, t_max)).collect();
    let mut resid: f64 = amps
        .chunks(ds)
        .enumerate()
        .filter(|(c, _)| !legal.contains(c))
        .flat_map(|(_, block)| block.iter().map(|a| a.norm_sqr()))
        .sum();
    for (t, &c) in legal.iter().enumerate() {
        if t > 0 {
            seq.steps[t - 1].apply(&mut proj, ns)?;
        }
        resid += proj.iter().zip(&amps[c * ds..(c + 1) * ds]).map(|(p, a)| (a - p).norm_sqr()).sum::<f64>();
    }
    Ok(resid.max(0.0).sqrt())
}

/// ‖v‖ helper for callers working with raw vectors.
pub fn vector_norm(v: &[C64]) -> f64 {
    norm(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x_seq() -> UnitarySequence {
        UnitarySequence::new(vec![Step::Gates(vec![GateOp::x(0)])], 1, 0, vec![]).unwrap()
    }

    #[test]
    fn unary_words() {
        assert_eq!(unary_clock(0, 3).unwrap().amplitudes()[0], C64::new(1.0, 0.0));
        assert_eq!(unary_index(2, 4), 0b1100);
        assert_eq!(unary_index(3, 3), 0b111);
        assert!(unary_clock(4, 3).is_err());
    }

    #[test]
    fn single_step_is_padded() {
        let s = x_seq();
        assert_eq!(s.len(), 2);
        let phi = PureState::zero(1).unwrap();
        let hist = history_state(&s, &phi).unwrap();
        // clock 11, state |1⟩ → index 0b111
        assert!((hist.amplitudes()[0b111].norm() - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn identity_history_has_zero_energy() {
        let seq = UnitarySequence::new(vec![Step::identity(), Step::identity()], 1, 0, vec![]).unwrap();
        let h = build_history_hamiltonian(&seq);
        let hist = history_state(&seq, &PureState::zero(1).unwrap()).unwrap();
        assert!(energy(&h, &hist).unwrap().abs() < 1e-12);
        assert!(history_subspace_distance(&seq, &hist).unwrap() < 1e-9);
    }

    #[test]
    fn init_term_penalizes_dirty_ancilla() {
        let seq = UnitarySequence::new(vec![Step::identity(), Step::identity()], 1, 1, vec![vec![0]]).unwrap();
        let h = build_history_hamiltonian(&seq);
        // clock 00, witness 0, ancilla 1
        let psi = PureState::basis(4, 0b0001).unwrap();
        let in_idx = h.terms().iter().position(|t| t.kind == TermKind::In).unwrap();
        let e = h.term_energies(psi.amplitudes()).unwrap();
        assert!((e[in_idx] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stabilizer_violation_costs_one() {
        let seq = x_seq();
        let h = build_history_hamiltonian(&seq);
        let psi = PureState::basis(3, 0b010).unwrap();
        let e = h.term_energies(psi.amplitudes()).unwrap();
        let stab = h.terms().iter().position(|t| t.kind == TermKind::Stab).unwrap();
        assert!((e[stab] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn entangling_history_is_ground_state() {
        let steps = vec![
            Step::Gates(vec![GateOp::h(0)]),
            Step::Gates(vec![GateOp::cnot(0, 1)]),
            Step::Gates(vec![GateOp::t(1), GateOp::h(1)]),
        ];
        let seq = UnitarySequence::new(steps, 1, 1, vec![vec![0]]).unwrap();
        let h = build_history_hamiltonian(&seq);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(5);
        let phi = PureState::random(1, &mut rng).unwrap();
        let hist = history_state(&seq, &phi).unwrap();
        assert!(energy(&h, &hist).unwrap().abs() < 1e-12);
        let g = min_eigenvalue(&h, 1e-10).unwrap();
        assert!(g.energy.abs() < 1e-8);
        let gs = PureState::normalized(g.vector).unwrap();
        assert!(history_subspace_distance(&seq, &gs).unwrap() < 1e-4);
    }

    #[test]
    fn legal_view_matches_full_spectrum() {
        let steps = vec![Step::Gates(vec![GateOp::h(0)]), Step::Gates(vec![GateOp::cnot(0, 1)])];
        let seq = UnitarySequence::new(steps, 1, 1, vec![vec![0]]).unwrap();
        let h = build_history_hamiltonian(&seq).with_out(out_term(vec![0, 1], vec![false, true]));
        let opts = LanczosOptions { tol: 1e-11, ..LanczosOptions::default() };
        let full = lowest_eigenpair(&h, opts).unwrap().value;
        let legal = lowest_eigenpair(&LegalClockView(&h), opts).unwrap().value;
        assert!((full - legal).abs() < 1e-8);
        assert!(full > 1e-3);
    }

    #[test]
    fn indexed_step_selects_branch() {
        let step = Step::Indexed { control: vec![0], digit: 1, branches: vec![vec![], vec![GateOp::x(1)]] };
        let mut amps = PureState::basis(2, 0b10).unwrap().into_amplitudes();
        step.apply(&mut amps, 2).unwrap();
        assert!((amps[0b11].re - 1.0).abs() < 1e-12);
        let u = step.dense(&[0, 1]).unwrap();
        assert!(u.max_abs_diff(GateOp::cnot(0, 1).matrix()) < 1e-12);
    }

    #[test]
    fn term_count() {
        let seq = UnitarySequence::new(vec![Step::identity(); 4], 1, 2, vec![vec![0], vec![1]]).unwrap();
        let h = build_history_hamiltonian(&seq);
        assert_eq!(h.terms().len(), 4 + 3 + 2);
        assert_eq!(h.with_out(out_term(vec![1], vec![true])).terms().len(), 4 + 3 + 2 + 1);
    }

    #[test]
    fn orthogonal_to_history_subspace() {
        let seq = x_seq();
        // clock word 01 is illegal, hence orthogonal to every history state
        let psi = PureState::basis(3, 0b010).unwrap();
        assert!((history_subspace_distance(&seq, &psi).unwrap() - 1.0).abs() < 1e-12);
    }
}
