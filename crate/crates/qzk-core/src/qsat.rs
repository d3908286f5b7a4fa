//! (k,γ)-QSAT instances: m checks, each a Clifford+T circuit reading k witness qubits
//! plus γ ancillas, accepting when its first ancilla reads 1.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{lowest_eigenpair, LanczosOptions, LinalgError, LinearOperator, Matrix, Negated};
use crate::qsim::{apply_operator, GateOp, MixedState, PureState, QsimError};
use crate::C64;

pub const MAX_VAL_QUBITS: usize = 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QsatError {
    #[error("check {check}: wire {wire} outside the {width} circuit wires")]
    Wire { check: usize, wire: usize, width: usize },
    #[error("check {check}: CNOT with identical control and target")]
    SelfControl { check: usize },
    #[error("check {check}: subset {detail}")]
    Subset { check: usize, detail: &'static str },
    #[error("instance needs at least one ancilla for the output wire")]
    NoOutputWire,
    #[error("instance has no checks")]
    Empty,
    #[error("{got} subsets but {circuits} circuits")]
    Count { got: usize, circuits: usize },
    #[error("witness register of {0} qubits exceeds the solver capacity of {MAX_VAL_QUBITS}")]
    Capacity(usize),
    #[error("state has {got} qubits, instance has {expected}")]
    QubitMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Gate set {CNOT, P, H, T}; wires index the circuit's k data wires followed by its ancillas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Cnot { control: usize, target: usize },
    P(usize),
    H(usize),
    T(usize),
}

impl Gate {
    pub fn wires(&self) -> Vec<usize> {
        match *self {
            Gate::Cnot { control, target } => vec![control, target],
            Gate::P(w) | Gate::H(w) | Gate::T(w) => vec![w],
        }
    }

    /// The gate on physical qubits `map[wire]`.
    pub fn to_op(&self, map: &[usize]) -> GateOp {
        match *self {
            Gate::Cnot { control, target } => GateOp::cnot(map[control], map[target]),
            Gate::P(w) => GateOp::p(map[w]),
            Gate::H(w) => GateOp::h(map[w]),
            Gate::T(w) => GateOp::t(map[w]),
        }
    }
}

/// X on `wire`, spelled in the gate set as H·P·P·H.
pub fn x_gates(wire: usize) -> [Gate; 4] {
    [Gate::H(wire), Gate::P(wire), Gate::P(wire), Gate::H(wire)]
}

fn check_circuit(check: usize, gates: &[Gate], width: usize) -> Result<(), QsatError> {
    for g in gates {
        for w in g.wires() {
            if w >= width {
                return Err(QsatError::Wire { check, wire: w, width });
            }
        }
        if let Gate::Cnot { control, target } = *g {
            if control == target {
                return Err(QsatError::SelfControl { check });
            }
        }
    }
    Ok(())
}

/// Effect M with Tr[Mσ] = Pr[circuit accepts σ]: ancillas start in |0⟩, output is the first ancilla.
pub fn accept_effect(gates: &[Gate], k: usize, gamma: usize) -> Result<Matrix, QsatError> {
    if gamma == 0 {
        return Err(QsatError::NoOutputWire);
    }
    let width = k + gamma;
    check_circuit(0, gates, width)?;
    let map: Vec<usize> = (0..width).collect();
    let ops: Vec<GateOp> = gates.iter().map(|g| g.to_op(&map)).collect();
    let dk = 1usize << k;
    let shift = gamma;
    let out_bit = 1usize << (gamma - 1);
    let columns: Vec<Vec<C64>> = (0..dk)
        .map(|x| {
            let mut v = vec![C64::new(0.0, 0.0); 1 << width];
            v[x << shift] = C64::new(1.0, 0.0);
            for op in &ops {
                op.apply_to(&mut v, width).expect("validated wires");
            }
            v
        })
        .collect();
    let mut m = Matrix::zeros(dk, dk);
    for x in 0..dk {
        for y in 0..dk {
            m[(x, y)] = columns[x]
                .iter()
                .zip(&columns[y])
                .enumerate()
                .filter(|(z, _)| z & out_bit != 0)
                .map(|(_, (a, b))| a.conj() * b)
                .sum();
        }
    }
    Ok(m)
}

/// An instance I = (n, m, {S_i}, {C_i}).
#[derive(Debug, Clone, PartialEq)]
pub struct QsatInstance {
    n: usize,
    k: usize,
    gamma: usize,
    subsets: Vec<Vec<usize>>,
    circuits: Vec<Vec<Gate>>,
}

impl QsatInstance {
    /// Validates and normalizes: subsets shorter than k are extended with the smallest unused witness qubits.
    pub fn new(
        n: usize,
        k: usize,
        gamma: usize,
        subsets: Vec<Vec<usize>>,
        circuits: Vec<Vec<Gate>>,
    ) -> Result<Self, QsatError> {
        if subsets.is_empty() {
            return Err(QsatError::Empty);
        }
        if subsets.len() != circuits.len() {
            return Err(QsatError::Count { got: subsets.len(), circuits: circuits.len() });
        }
        if gamma == 0 {
            return Err(QsatError::NoOutputWire);
        }
        let mut norm = Vec::with_capacity(subsets.len());
        for (i, s) in subsets.into_iter().enumerate() {
            if s.len() > k {
                return Err(QsatError::Subset { check: i, detail: "larger than k" });
            }
            if k > n {
                return Err(QsatError::Subset { check: i, detail: "k exceeds n" });
            }
            for (j, &q) in s.iter().enumerate() {
                if q >= n {
                    return Err(QsatError::Subset { check: i, detail: "qubit out of range" });
                }
                if s[..j].contains(&q) {
                    return Err(QsatError::Subset { check: i, detail: "repeated qubit" });
                }
            }
            let mut s = s;
            let mut q = 0;
            while s.len() < k {
                if !s.contains(&q) {
                    s.push(q);
                }
                q += 1;
            }
            norm.push(s);
        }
        for (i, c) in circuits.iter().enumerate() {
            check_circuit(i, c, k + gamma)?;
        }
        Ok(Self { n, k, gamma, subsets: norm, circuits })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.subsets.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn subsets(&self) -> &[Vec<usize>] {
        &self.subsets
    }

    pub fn circuits(&self) -> &[Vec<Gate>] {
        &self.circuits
    }

    pub fn effects(&self) -> Result<Vec<Matrix>, QsatError> {
        self.circuits.iter().map(|c| accept_effect(c, self.k, self.gamma)).collect()
    }

    /// (1/m) Σ_i Tr[M_i σ_{S_i}].
    pub fn val_of_state(&self, sigma: &MixedState) -> Result<f64, QsatError> {
        if sigma.num_qubits() != self.n {
            return Err(QsatError::QubitMismatch { expected: self.n, got: sigma.num_qubits() });
        }
        let mut total = 0.0;
        for (m, s) in self.effects()?.iter().zip(&self.subsets) {
            total += sigma.expectation(m, s)?.re;
        }
        Ok(total / self.m() as f64)
    }

    pub fn val_of_pure(&self, psi: &PureState) -> Result<f64, QsatError> {
        if psi.num_qubits() != self.n {
            return Err(QsatError::QubitMismatch { expected: self.n, got: psi.num_qubits() });
        }
        let mut total = 0.0;
        for (m, s) in self.effects()?.iter().zip(&self.subsets) {
            total += psi.expectation(m, s)?.re;
        }
        Ok(total / self.m() as f64)
    }

    /// The largest eigenvalue of A = (1/m) Σ_i M_i ⊗ I, with its eigenvector.
    pub fn val_max(&self) -> Result<ValMax, QsatError> {
        if self.n > MAX_VAL_QUBITS {
            return Err(QsatError::Capacity(self.n));
        }
        let op = AcceptanceOperator { n: self.n, terms: self.effects()?.into_iter().zip(self.subsets.clone()).collect() };
        let opts = LanczosOptions { tol: 1e-12, ..LanczosOptions::default() };
        let pair = lowest_eigenpair(&Negated(&op), opts)?;
        Ok(ValMax { value: -pair.value, maximizer: PureState::normalized(pair.vector)? })
    }

    /// Appends always-accepting checks until m is a power of two.
    pub fn pad_to_power_of_two(&self) -> Self {
        let m = self.m();
        let target = m.next_power_of_two();
        let mut out = self.clone();
        let dummy_subset: Vec<usize> = (0..self.k).collect();
        for _ in m..target {
            out.subsets.push(dummy_subset.clone());
            out.circuits.push(x_gates(self.k).to_vec());
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ValMax {
    pub value: f64,
    pub maximizer: PureState,
}

struct AcceptanceOperator {
    n: usize,
    terms: Vec<(Matrix, Vec<usize>)>,
}

impl LinearOperator for AcceptanceOperator {
    fn dim(&self) -> usize {
        1 << self.n
    }
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        let w = 1.0 / self.terms.len() as f64;
        let mut buf = x.to_vec();
        for (m, s) in &self.terms {
            buf.copy_from_slice(x);
            apply_operator(&mut buf, self.n, s, m);
            for (yi, bi) in y.iter_mut().zip(&buf) {
                *yi += bi * w;
            }
        }
    }
}
