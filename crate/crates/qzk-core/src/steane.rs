//! Concatenated [[7,1,3]] Steane code: encoding, syndrome extraction, transversal gates,
//! and σ-independent marginals of partially executed logical gates.
//!
//! Level-1 stabilizers (qubit 0 is the leftmost bit):
//! Z checks and X checks both use the Hamming rows `0001111`, `0110011`, `1010101`.
//! Logical X is `X` on `1110000`; logical Z is `Z` on the same support.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::Matrix;
use crate::qsim::{cross_reduced, GateOp, MixedState, PureState, QsimError, MAX_PURE_QUBITS};
use crate::C64;

/// Hamming parity-check rows, used for both check families.
pub const CHECK_ROWS: [[u8; 7]; 3] = [[0, 0, 0, 1, 1, 1, 1], [0, 1, 1, 0, 0, 1, 1], [1, 0, 1, 0, 1, 0, 1]];

/// Pivot qubits and the qubits each one flips during encoding.
const ENCODE_FANOUT: [(usize, [usize; 3]); 3] = [(4, [1, 2, 3]), (5, [0, 2, 3]), (6, [0, 1, 3])];

/// Largest κ whose blocks fit the numeric paths.
pub const MAX_NUMERIC_KAPPA: u32 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SteaneError {
    #[error("κ={0} exceeds the numeric limit {MAX_NUMERIC_KAPPA}")]
    Capacity(u32),
    #[error("unsupported logical gate {0:?}")]
    Unsupported(alloc::string::String),
    #[error("step {t} outside 0..={len}")]
    Step { t: usize, len: usize },
    #[error("subset meets block {block} in {count} qubits, limit {limit}")]
    SubsetTooLarge { block: usize, count: usize, limit: usize },
    #[error("qubit {qubit} outside {width}-qubit register")]
    Qubit { qubit: usize, width: usize },
    #[error("marginal of {gate:?} at step {t} depends on the logical input (deviation {deviation:.3e})")]
    NonSimulable { gate: LogicalGate, t: usize, deviation: f64 },
    #[error("bitstrings must have equal length")]
    Length,
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum LogicalGate {
    Cnot,
    H,
    P,
    T,
}

impl LogicalGate {
    /// Logical wires consumed (data blocks).
    pub fn arity(self) -> usize {
        match self {
            LogicalGate::Cnot => 2,
            _ => 1,
        }
    }

    /// Magic-state blocks m_G.
    pub fn magic_arity(self) -> usize {
        match self {
            LogicalGate::T => 1,
            _ => 0,
        }
    }
}

impl core::str::FromStr for LogicalGate {
    type Err = SteaneError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "CNOT" => Ok(LogicalGate::Cnot),
            "H" => Ok(LogicalGate::H),
            "P" | "S" => Ok(LogicalGate::P),
            "T" => Ok(LogicalGate::T),
            _ => Err(SteaneError::Unsupported(s.into())),
        }
    }
}

/// κ, N = 7^κ, D = 3^κ and the per-block subset limits of the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CodeParams {
    pub kappa: u32,
    pub n: usize,
    pub d: usize,
    /// Limit for static codeword marginals (t = 0).
    pub s_max: usize,
    /// Limit while a transversal gate is partially applied.
    pub step_s_max: usize,
}

impl CodeParams {
    pub fn new(kappa: u32) -> Self {
        let n = 7usize.pow(kappa);
        let d = 3usize.pow(kappa);
        Self { kappa, n, d, s_max: d - 1, step_s_max: (d - 1).min(2) }
    }

    pub fn with_s_max(mut self, s_max: usize, step_s_max: usize) -> Self {
        self.s_max = s_max;
        self.step_s_max = step_s_max;
        self
    }

    /// Per-block bound under which encoded cross terms vanish: ⌊(D−1)/2⌋ capped at 10.
    pub fn cross_bound(&self) -> usize {
        ((self.d - 1) / 2).min(10)
    }

    fn numeric(&self) -> Result<(), SteaneError> {
        if self.kappa > MAX_NUMERIC_KAPPA {
            return Err(SteaneError::Capacity(self.kappa));
        }
        Ok(())
    }
}

/// A gate list on `width` physical qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSequence {
    pub gates: Vec<GateOp>,
    pub width: usize,
}

impl GateSequence {
    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Reverse order, each gate inverted.
    pub fn adjoint(&self) -> Self {
        Self { gates: self.gates.iter().rev().map(GateOp::adjoint).collect(), width: self.width }
    }

    pub fn shifted(&self, offset: usize, width: usize) -> Self {
        Self { gates: self.gates.iter().map(|g| g.remap(|q| q + offset)).collect(), width }
    }

    /// Applies the first `steps` gates.
    pub fn apply_prefix(&self, state: &mut PureState, steps: usize) -> Result<(), QsimError> {
        for g in &self.gates[..steps] {
            state.apply_gate_mut(g)?;
        }
        Ok(())
    }

    pub fn apply(&self, state: &mut PureState) -> Result<(), QsimError> {
        self.apply_prefix(state, self.gates.len())
    }

    /// Dense product on all `width` qubits.
    pub fn unitary(&self) -> Result<Matrix, QsimError> {
        let support: Vec<usize> = (0..self.width).collect();
        crate::qsim::circuit_unitary(&self.gates, &support)
    }
}

fn level_one_encoding(qubits: &[usize]) -> Vec<GateOp> {
    let q = |i: usize| qubits[i];
    let mut gates = vec![GateOp::cnot(q(0), q(1)), GateOp::cnot(q(0), q(2))];
    gates.extend(ENCODE_FANOUT.iter().map(|&(p, _)| GateOp::h(q(p))));
    for &(p, targets) in &ENCODE_FANOUT {
        gates.extend(targets.iter().map(|&t| GateOp::cnot(q(p), q(t))));
    }
    gates
}

fn encoding_gates(kappa: u32, offset: usize) -> Vec<GateOp> {
    if kappa == 0 {
        return Vec::new();
    }
    let sub = 7usize.pow(kappa - 1);
    let heads: Vec<usize> = (0..7).map(|j| offset + j * sub).collect();
    let mut gates = level_one_encoding(&heads);
    for j in 0..7 {
        gates.extend(encoding_gates(kappa - 1, offset + j * sub));
    }
    gates
}

/// U^Enc on one block: data on qubit 0, the rest starting in |0⟩.
/// Emitted for any κ; numeric use is limited by the register size.
pub fn encoding_sequence(params: &CodeParams) -> GateSequence {
    GateSequence { gates: encoding_gates(params.kappa, 0), width: params.n }
}

/// U^Dec = (U^Enc)†.
pub fn decoding_sequence(params: &CodeParams) -> GateSequence {
    encoding_sequence(params).adjoint()
}

/// Syndrome extraction on (block 0..N, syndrome N..2N−1): three Z-parity checks
/// copied by CNOTs, then three X-parity checks through Hadamard-conjugated ancillas.
pub fn syndrome_sequence(params: &CodeParams) -> Result<GateSequence, SteaneError> {
    params.numeric()?;
    let n = params.n;
    let width = 2 * n - 1;
    if params.kappa == 0 {
        return Ok(GateSequence { gates: Vec::new(), width });
    }
    let mut gates = Vec::new();
    for (r, row) in CHECK_ROWS.iter().enumerate() {
        let anc = n + r;
        gates.extend((0..7).filter(|&j| row[j] == 1).map(|j| GateOp::cnot(j, anc)));
    }
    for (r, row) in CHECK_ROWS.iter().enumerate() {
        let anc = n + 3 + r;
        gates.push(GateOp::h(anc));
        gates.extend((0..7).filter(|&j| row[j] == 1).map(|j| GateOp::cnot(anc, j)));
        gates.push(GateOp::h(anc));
    }
    Ok(GateSequence { gates, width })
}

/// The fix-up a transversal sequence leaves to the protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    /// Block whose logical value, when 1, calls for `gate` on `target_block`.
    pub flag_block: usize,
    pub target_block: usize,
    pub gate: LogicalGate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransversalGate {
    pub gate: LogicalGate,
    pub sequence: GateSequence,
    /// Magic-state blocks, placed after the data blocks.
    pub magic_arity: usize,
    pub correction: Option<Correction>,
}

/// Transversal realization of `gate` on N-qubit blocks (data blocks first, then magic blocks).
/// Logical P is physical P† on every qubit at odd κ, P at even κ.
pub fn transversal_sequence(gate: LogicalGate, params: &CodeParams) -> TransversalGate {
    let n = params.n;
    let width = n * (gate.arity() + gate.magic_arity());
    let gates: Vec<GateOp> = match gate {
        LogicalGate::H => (0..n).map(GateOp::h).collect(),
        LogicalGate::P if params.kappa % 2 == 1 => (0..n).map(|q| GateOp::p(q).adjoint()).collect(),
        LogicalGate::P => (0..n).map(GateOp::p).collect(),
        LogicalGate::Cnot | LogicalGate::T => (0..n).map(|q| GateOp::cnot(q, n + q)).collect(),
    };
    let correction = (gate == LogicalGate::T).then_some(Correction { flag_block: 1, target_block: 0, gate: LogicalGate::P });
    TransversalGate { gate, sequence: GateSequence { gates, width }, magic_arity: gate.magic_arity(), correction }
}

/// Enc(ψ) for a one-qubit ψ given by its two amplitudes.
pub fn encode_qubit(params: &CodeParams, amps: [C64; 2]) -> Result<PureState, SteaneError> {
    params.numeric()?;
    let n = params.n;
    let mut v = vec![C64::new(0.0, 0.0); 1 << n];
    v[0] = amps[0];
    v[1 << (n - 1)] = amps[1];
    let mut st = PureState::from_amplitudes(v)?;
    encoding_sequence(params).apply(&mut st)?;
    Ok(st)
}

/// Enc(|x_1…x_n⟩) on n consecutive blocks.
pub fn encode_bits(params: &CodeParams, bits: &[bool]) -> Result<PureState, SteaneError> {
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let mut out = PureState::zero(0)?;
    for &b in bits {
        let block = encode_qubit(params, if b { [zero, one] } else { [one, zero] })?;
        out = out.tensor(&block)?;
    }
    Ok(out)
}

/// Spanning inputs |0⟩, |1⟩, |+⟩, |+i⟩.
fn spanning_qubits() -> [[C64; 2]; 4] {
    let r = core::f64::consts::FRAC_1_SQRT_2;
    [
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        [C64::new(r, 0.0), C64::new(r, 0.0)],
        [C64::new(r, 0.0), C64::new(0.0, r)],
    ]
}

/// Magic state |T⟩ = T|+⟩.
pub fn magic_amplitudes() -> [C64; 2] {
    let r = core::f64::consts::FRAC_1_SQRT_2;
    [C64::new(r, 0.0), C64::from_polar(r, core::f64::consts::FRAC_PI_4)]
}

fn check_subset(params: &CodeParams, subset: &[usize], blocks: usize, limit: usize) -> Result<(), SteaneError> {
    let width = blocks * params.n;
    let mut counts = vec![0usize; blocks];
    for &q in subset {
        if q >= width {
            return Err(SteaneError::Qubit { qubit: q, width });
        }
        counts[q / params.n] += 1;
    }
    if let Some((block, &count)) = counts.iter().enumerate().find(|(_, &c)| c > limit) {
        return Err(SteaneError::SubsetTooLarge { block, count, limit });
    }
    Ok(())
}

/// Encoded input for a tuple of one-qubit logical states, magic blocks appended.
fn encoded_input(params: &CodeParams, logical: &[[C64; 2]], magic: usize) -> Result<PureState, SteaneError> {
    let mut out = PureState::zero(0)?;
    for amps in logical.iter().copied().chain(core::iter::repeat_n(magic_amplitudes(), magic)) {
        out = out.tensor(&encode_qubit(params, amps)?)?;
    }
    Ok(out)
}

/// Tolerance for σ-independence.
pub const SIM_TOLERANCE: f64 = 1e-9;

/// ρ(G, t, S): the marginal on `subset` after the first `t` transversal steps of `gate`,
/// identical for every logical input. Qubits are numbered block by block (data, then magic).
pub fn sim_marginal(gate: LogicalGate, t: usize, subset: &[usize], params: &CodeParams) -> Result<MixedState, SteaneError> {
    params.numeric()?;
    let tg = transversal_sequence(gate, params);
    if t > tg.sequence.len() {
        return Err(SteaneError::Step { t, len: tg.sequence.len() });
    }
    let blocks = gate.arity() + gate.magic_arity();
    let limit = if t == 0 { params.s_max } else { params.step_s_max };
    check_subset(params, subset, blocks, limit)?;
    if subset.is_empty() {
        return Ok(MixedState::from_matrix(Matrix::identity(1))?);
    }
    let span = spanning_qubits();
    let mut first: Option<MixedState> = None;
    let mut deviation = 0.0f64;
    let combos = span.len().pow(gate.arity() as u32);
    for c in 0..combos {
        let logical: Vec<[C64; 2]> = (0..gate.arity()).map(|w| span[(c / span.len().pow(w as u32)) % span.len()]).collect();
        let mut st = encoded_input(params, &logical, gate.magic_arity())?;
        tg.sequence.apply_prefix(&mut st, t)?;
        let rho = st.reduced(subset)?;
        match &first {
            None => first = Some(rho),
            Some(f) => deviation = deviation.max(f.matrix().max_abs_diff(rho.matrix())),
        }
    }
    if deviation > SIM_TOLERANCE {
        return Err(SteaneError::NonSimulable { gate, t, deviation });
    }
    Ok(first.expect("at least one spanning input"))
}

/// Static marginal of Enc(σ) on `subset` of n blocks: the tensor product of per-block marginals.
/// The result is ordered by ascending qubit index.
pub fn sim_marginal_blocks(blocks: usize, subset: &[usize], params: &CodeParams) -> Result<MixedState, SteaneError> {
    params.numeric()?;
    check_subset(params, subset, blocks, params.s_max)?;
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut out = MixedState::from_matrix(Matrix::identity(1))?;
    for b in 0..blocks {
        let local: Vec<usize> = sorted.iter().filter(|&&q| q / params.n == b).map(|q| q % params.n).collect();
        if local.is_empty() {
            continue;
        }
        out = out.tensor(&sim_marginal(LogicalGate::H, 0, &local, params)?)?;
    }
    Ok(out)
}

/// Largest entry magnitude of Tr_{S^c}(Enc|a⟩⟨b|), with S kept in the given order.
pub fn cross_term_norm(a: &[bool], b: &[bool], subset: &[usize], params: &CodeParams) -> Result<f64, SteaneError> {
    if a.len() != b.len() {
        return Err(SteaneError::Length);
    }
    params.numeric()?;
    let width = a.len() * params.n;
    if width > MAX_PURE_QUBITS {
        return Err(QsimError::Capacity { requested: width, limit: MAX_PURE_QUBITS }.into());
    }
    let x = encode_bits(params, a)?;
    let y = encode_bits(params, b)?;
    Ok(cross_reduced(&x, &y, subset)?.max_abs())
}

/// Codeword amplitudes built from the stabilizer span (independent of the circuit).
pub fn codeword_by_span(logical: bool) -> Vec<C64> {
    let gens: [u8; 3] = [0b0111100, 0b1011010, 0b1101001];
    let shift: u8 = if logical { 0b1110000 } else { 0 };
    let mut v = vec![C64::new(0.0, 0.0); 128];
    let amp = 1.0 / 8f64.sqrt();
    for mask in 0..8u8 {
        let word = (0..3).filter(|i| mask >> i & 1 == 1).fold(shift, |acc, i| acc ^ gens[i]);
        v[word as usize] = C64::new(amp, 0.0);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn k1() -> CodeParams {
        CodeParams::new(1)
    }

    fn close(a: &[C64], b: &[C64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn encoding_matches_stabilizer_span() {
        let p = k1();
        assert_eq!(encoding_sequence(&p).len(), 14);
        let zero = encode_bits(&p, &[false]).unwrap();
        let one = encode_bits(&p, &[true]).unwrap();
        assert!(close(zero.amplitudes(), &codeword_by_span(false)) < 1e-12);
        assert!(close(one.amplitudes(), &codeword_by_span(true)) < 1e-12);
    }

    #[test]
    fn kappa_zero_is_identity_code() {
        let p = CodeParams::new(0);
        assert!(encoding_sequence(&p).is_empty());
        assert!(syndrome_sequence(&p).unwrap().is_empty());
        assert_eq!((p.n, p.d, p.s_max), (1, 1, 0));
    }

    #[test]
    fn higher_levels_are_symbolic() {
        let p = CodeParams::new(2);
        let enc = encoding_sequence(&p);
        assert_eq!(enc.len(), 14 + 7 * 14);
        assert!(enc.gates.iter().all(|g| g.targets().len() <= 2));
        assert!(matches!(syndrome_sequence(&p), Err(SteaneError::Capacity(2))));
    }

    #[test]
    fn single_qubit_marginals_are_maximally_mixed() {
        let p = k1();
        let zero = encode_bits(&p, &[false]).unwrap();
        let half = MixedState::maximally_mixed(1).unwrap();
        for q in 0..7 {
            let rho = zero.reduced(&[q]).unwrap();
            assert!(rho.matrix().max_abs_diff(half.matrix()) < 1e-12);
        }
    }

    #[test]
    fn syndrome_detects_single_errors() {
        let p = k1();
        let syn = syndrome_sequence(&p).unwrap();
        assert_eq!(syn.len(), 30);
        let zero = encode_bits(&p, &[false]).unwrap();
        let anc = PureState::zero(6).unwrap();
        let clean = zero.tensor(&anc).unwrap();
        let syndrome_zero = |st: &PureState| -> f64 {
            st.amplitudes().iter().enumerate().filter(|(i, _)| i & 0b111111 == 0).map(|(_, a)| a.norm_sqr()).sum()
        };
        let mut s = clean.clone();
        syn.apply(&mut s).unwrap();
        assert!((syndrome_zero(&s) - 1.0).abs() < 1e-12);
        for err in [GateOp::x(3), GateOp::z(3), GateOp::x(0), GateOp::z(6)] {
            let mut s = clean.apply_gate(&err).unwrap();
            syn.apply(&mut s).unwrap();
            assert!(syndrome_zero(&s) < 1e-12);
        }
    }

    #[test]
    fn transversal_clifford_gates() {
        let p = k1();
        let r = core::f64::consts::FRAC_1_SQRT_2;
        let plus = encode_qubit(&p, [C64::new(r, 0.0), C64::new(r, 0.0)]).unwrap();
        let mut s = encode_bits(&p, &[false]).unwrap();
        transversal_sequence(LogicalGate::H, &p).sequence.apply(&mut s).unwrap();
        assert!((s.inner(&plus).unwrap().norm() - 1.0).abs() < 1e-10);

        let mut s = plus.clone();
        transversal_sequence(LogicalGate::P, &p).sequence.apply(&mut s).unwrap();
        let plus_i = encode_qubit(&p, [C64::new(r, 0.0), C64::new(0.0, r)]).unwrap();
        assert!((s.inner(&plus_i).unwrap() - C64::new(1.0, 0.0)).norm() < 1e-10);

        let mut s = encode_bits(&p, &[true, false]).unwrap();
        transversal_sequence(LogicalGate::Cnot, &p).sequence.apply(&mut s).unwrap();
        let want = encode_bits(&p, &[true, true]).unwrap();
        assert!((s.inner(&want).unwrap().norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn transversal_t_with_correction() {
        let p = k1();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let psi = PureState::random(1, &mut rng).unwrap();
        let a = [psi.amplitudes()[0], psi.amplitudes()[1]];
        let tg = transversal_sequence(LogicalGate::T, &p);
        assert_eq!(tg.magic_arity, 1);
        let mut st = encode_qubit(&p, a).unwrap().tensor(&encode_qubit(&p, magic_amplitudes()).unwrap()).unwrap();
        tg.sequence.apply(&mut st).unwrap();
        let w = C64::from_polar(1.0, core::f64::consts::FRAC_PI_4);
        for flag in [false, true] {
            // project the magic block onto Enc(flag) and compare the data block
            let m = encode_bits(&p, &[flag]).unwrap();
            let mut data = vec![C64::new(0.0, 0.0); 128];
            for (i, d) in data.iter_mut().enumerate() {
                *d = (0..128).map(|j| m.amplitudes()[j].conj() * st.amplitudes()[i * 128 + j]).sum();
            }
            let mut data = PureState::normalized(data).unwrap();
            if tg.correction.is_some() && flag {
                transversal_sequence(LogicalGate::P, &p).sequence.apply(&mut data).unwrap();
            }
            let want = encode_qubit(&p, [a[0], a[1] * w]).unwrap();
            assert!((data.inner(&want).unwrap().norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn mid_cnot_marginal_is_input_independent() {
        let p = k1();
        for t in 0..=7 {
            let rho = sim_marginal(LogicalGate::Cnot, t, &[2, 9], &p).unwrap();
            assert!((rho.matrix().trace().re - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            sim_marginal(LogicalGate::H, 0, &[0, 1, 2], &p),
            Err(SteaneError::SubsetTooLarge { .. })
        ));
    }

    #[test]
    fn permissive_limit_reports_non_simulable() {
        let p = k1().with_s_max(7, 7);
        assert!(matches!(sim_marginal(LogicalGate::H, 0, &[0, 1, 2], &p), Err(SteaneError::NonSimulable { .. })));
    }

    #[test]
    fn cross_terms() {
        let p = k1();
        assert!(cross_term_norm(&[false], &[true], &[4], &p).unwrap() < 1e-10);
        let all: Vec<usize> = (0..7).collect();
        assert!(cross_term_norm(&[false], &[true], &all, &p).unwrap() > 0.1);
        let same = cross_term_norm(&[true], &[true], &[1, 5], &p).unwrap();
        assert!(same > 0.0);
    }
}
