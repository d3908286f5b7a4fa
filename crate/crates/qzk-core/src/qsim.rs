//! State-vector and density-matrix simulation over a fixed qubit ordering:
//! qubit 0 is the most significant bit of every basis label.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{LinalgError, Matrix};
use crate::C64;

pub const MAX_PURE_QUBITS: usize = 24;
pub const MAX_MIXED_QUBITS: usize = 13;

const UNITARY_TOL: f64 = 1e-10;
const POVM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QsimError {
    #[error("{requested} qubits exceeds the capacity of {limit}")]
    Capacity { requested: usize, limit: usize },
    #[error("qubit {qubit} out of range for a {num_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, num_qubits: usize },
    #[error("qubit {0} listed twice")]
    DuplicateQubit(usize),
    #[error("gate matrix is not unitary (deviation {0:e})")]
    NotUnitary(f64),
    #[error("operator dimension {got} does not match {expected}")]
    BadDimension { expected: usize, got: usize },
    #[error("qubit counts differ: {left} vs {right}")]
    QubitMismatch { left: usize, right: usize },
    #[error("effect {0} is not positive semidefinite")]
    NotPositive(usize),
    #[error("effects do not sum to the identity (deviation {0:e})")]
    NotComplete(f64),
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("invalid density matrix: {0}")]
    InvalidDensity(&'static str),
    #[error("register layout: {0}")]
    Layout(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A named group of qubits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Register {
    pub name: String,
    pub qubits: Vec<usize>,
}

/// Ordered map from register names to qubit indices. Covers every qubit exactly once.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RegisterMap {
    registers: Vec<Register>,
}

impl RegisterMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// One register `q` spanning all qubits.
    pub fn single(num_qubits: usize) -> Self {
        let mut m = Self::new();
        m.push("q", num_qubits);
        m
    }

    /// Appends a register of `len` fresh qubits and returns their indices.
    pub fn push(&mut self, name: &str, len: usize) -> Vec<usize> {
        let start = self.num_qubits();
        let qubits: Vec<usize> = (start..start + len).collect();
        self.registers.push(Register { name: name.to_string(), qubits: qubits.clone() });
        qubits
    }

    pub fn num_qubits(&self) -> usize {
        self.registers.iter().map(|r| r.qubits.len()).sum()
    }

    pub fn registers(&self) -> &[Register] {
        &self.registers
    }

    pub fn get(&self, name: &str) -> Option<&[usize]> {
        self.registers.iter().find(|r| r.name == name).map(|r| r.qubits.as_slice())
    }

    /// Checks that the registers partition `0..num_qubits`.
    pub fn validate(&self, num_qubits: usize) -> Result<(), QsimError> {
        let mut seen = vec![false; num_qubits];
        for r in &self.registers {
            for &q in &r.qubits {
                if q >= num_qubits {
                    return Err(QsimError::QubitOutOfRange { qubit: q, num_qubits });
                }
                if core::mem::replace(&mut seen[q], true) {
                    return Err(QsimError::DuplicateQubit(q));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(QsimError::Layout("registers do not cover every qubit".into()));
        }
        Ok(())
    }

    /// Registers of `self` followed by those of `other` shifted past `self`.
    pub fn concat(&self, other: &RegisterMap) -> Self {
        let off = self.num_qubits();
        let mut out = self.clone();
        out.registers.extend(other.registers.iter().map(|r| Register {
            name: r.name.clone(),
            qubits: r.qubits.iter().map(|q| q + off).collect(),
        }));
        out
    }
}

fn check_targets(targets: &[usize], num_qubits: usize) -> Result<(), QsimError> {
    for (i, &q) in targets.iter().enumerate() {
        if q >= num_qubits {
            return Err(QsimError::QubitOutOfRange { qubit: q, num_qubits });
        }
        if targets[..i].contains(&q) {
            return Err(QsimError::DuplicateQubit(q));
        }
    }
    Ok(())
}

/// Offsets of each local basis index (targets[0] most significant) inside a full index.
pub(crate) fn local_offsets(num_qubits: usize, targets: &[usize]) -> Vec<usize> {
    let t = targets.len();
    (0..1usize << t)
        .map(|l| {
            targets
                .iter()
                .enumerate()
                .filter(|(k, _)| (l >> (t - 1 - k)) & 1 == 1)
                .map(|(_, &q)| 1usize << (num_qubits - 1 - q))
                .sum()
        })
        .collect()
}

/// All basis indices whose target bits are zero, in increasing order.
pub(crate) fn rest_bases(num_qubits: usize, targets: &[usize]) -> impl Iterator<Item = usize> {
    let mask: usize = targets.iter().map(|&q| 1usize << (num_qubits - 1 - q)).sum();
    let count = 1usize << (num_qubits - targets.len());
    let mut x = 0usize;
    (0..count).map(move |_| {
        let cur = x;
        x = ((x | mask).wrapping_add(1)) & !mask;
        cur
    })
}

/// Applies an arbitrary (not necessarily unitary) operator on `targets` of an amplitude vector.
pub(crate) fn apply_operator(amps: &mut [C64], num_qubits: usize, targets: &[usize], m: &Matrix) {
    let d = m.rows();
    let offs = local_offsets(num_qubits, targets);
    let mut buf = vec![C64::new(0.0, 0.0); d];
    let mut out = vec![C64::new(0.0, 0.0); d];
    for base in rest_bases(num_qubits, targets) {
        for (b, &o) in buf.iter_mut().zip(&offs) {
            *b = amps[base + o];
        }
        for (i, oi) in out.iter_mut().enumerate() {
            *oi = m.row(i).iter().zip(&buf).map(|(a, b)| a * b).sum();
        }
        for (&v, &o) in out.iter().zip(&offs) {
            amps[base + o] = v;
        }
    }
}

/// ρ_keep[i,j] = Σ_r x[i,r]·conj(y[j,r]) with `keep` in the given order.
pub(crate) fn cross_reduce(x: &[C64], y: &[C64], num_qubits: usize, keep: &[usize]) -> Matrix {
    let offs = local_offsets(num_qubits, keep);
    let d = offs.len();
    let mut rho = Matrix::zeros(d, d);
    let mut gx = vec![C64::new(0.0, 0.0); d];
    let mut gy = vec![C64::new(0.0, 0.0); d];
    let data = rho.data_mut();
    for base in rest_bases(num_qubits, keep) {
        for ((a, b), &o) in gx.iter_mut().zip(gy.iter_mut()).zip(&offs) {
            *a = x[base + o];
            *b = y[base + o].conj();
        }
        for (i, &a) in gx.iter().enumerate() {
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            let row = &mut data[i * d..(i + 1) * d];
            for (r, &b) in row.iter_mut().zip(&gy) {
                *r += a * b;
            }
        }
    }
    rho
}

/// A unitary acting on an ordered list of target qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct GateOp {
    matrix: Matrix,
    targets: Vec<usize>,
}

impl GateOp {
    pub fn new(matrix: Matrix, targets: Vec<usize>) -> Result<Self, QsimError> {
        let d = 1usize << targets.len();
        if matrix.rows() != d || matrix.cols() != d {
            return Err(QsimError::BadDimension { expected: d, got: matrix.rows() });
        }
        check_targets(&targets, usize::MAX)?;
        let dev = matrix.adjoint().matmul(&matrix).max_abs_diff(&Matrix::identity(d));
        if dev > UNITARY_TOL {
            return Err(QsimError::NotUnitary(dev));
        }
        Ok(Self { matrix, targets })
    }

    fn fixed(entries: &[(f64, f64)], targets: Vec<usize>) -> Self {
        let d = 1usize << targets.len();
        let data = entries.iter().map(|&(re, im)| C64::new(re, im)).collect();
        Self { matrix: Matrix::from_vec(d, d, data).expect("fixed gate shape"), targets }
    }

    pub fn x(q: usize) -> Self {
        Self::fixed(&[(0., 0.), (1., 0.), (1., 0.), (0., 0.)], vec![q])
    }

    pub fn z(q: usize) -> Self {
        Self::fixed(&[(1., 0.), (0., 0.), (0., 0.), (-1., 0.)], vec![q])
    }

    pub fn h(q: usize) -> Self {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        Self::fixed(&[(s, 0.), (s, 0.), (s, 0.), (-s, 0.)], vec![q])
    }

    /// Phase gate diag(1, i).
    pub fn p(q: usize) -> Self {
        Self::fixed(&[(1., 0.), (0., 0.), (0., 0.), (0., 1.)], vec![q])
    }

    /// diag(1, e^{iπ/4}).
    pub fn t(q: usize) -> Self {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        Self::fixed(&[(1., 0.), (0., 0.), (0., 0.), (s, s)], vec![q])
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        let mut e = [(0., 0.); 16];
        for (r, c) in [(0, 0), (1, 1), (2, 3), (3, 2)] {
            e[r * 4 + c] = (1., 0.);
        }
        Self::fixed(&e, vec![control, target])
    }

    pub fn cz(a: usize, b: usize) -> Self {
        let mut e = [(0., 0.); 16];
        for (i, s) in [1., 1., 1., -1.].iter().enumerate() {
            e[i * 5] = (*s, 0.);
        }
        Self::fixed(&e, vec![a, b])
    }

    /// `u` on `target` conditioned on `control` being 1.
    pub fn controlled(control: usize, u: &GateOp) -> Self {
        let d = u.matrix.rows();
        let mut m = Matrix::identity(2 * d);
        for i in 0..d {
            for j in 0..d {
                m[(d + i, d + j)] = u.matrix[(i, j)];
            }
        }
        let mut targets = vec![control];
        targets.extend_from_slice(&u.targets);
        Self { matrix: m, targets }
    }

    pub fn identity(targets: Vec<usize>) -> Self {
        Self { matrix: Matrix::identity(1 << targets.len()), targets }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint(), targets: self.targets.clone() }
    }

    /// Same matrix on relabelled targets.
    pub fn remap(&self, f: impl Fn(usize) -> usize) -> Self {
        Self { matrix: self.matrix.clone(), targets: self.targets.iter().map(|&q| f(q)).collect() }
    }

    /// Applies to a raw amplitude vector over `num_qubits` qubits.
    pub fn apply_to(&self, amps: &mut [C64], num_qubits: usize) -> Result<(), QsimError> {
        check_targets(&self.targets, num_qubits)?;
        apply_operator(amps, num_qubits, &self.targets, &self.matrix);
        Ok(())
    }
}

/// Dense matrix of a gate list restricted to `support` (ordered, support[0] most significant).
pub fn circuit_unitary(gates: &[GateOp], support: &[usize]) -> Result<Matrix, QsimError> {
    let n = support.len();
    let local = |q: usize| support.iter().position(|&s| s == q);
    let remapped: Vec<GateOp> = gates
        .iter()
        .map(|g| {
            let mut out = Vec::with_capacity(g.targets.len());
            for &q in &g.targets {
                out.push(local(q).ok_or(QsimError::QubitOutOfRange { qubit: q, num_qubits: n })?);
            }
            Ok(GateOp { matrix: g.matrix.clone(), targets: out })
        })
        .collect::<Result<_, QsimError>>()?;
    let d = 1usize << n;
    let mut u = Matrix::zeros(d, d);
    for col in 0..d {
        let mut v = vec![C64::new(0.0, 0.0); d];
        v[col] = C64::new(1.0, 0.0);
        for g in &remapped {
            g.apply_to(&mut v, n)?;
        }
        for (row, a) in v.into_iter().enumerate() {
            u[(row, col)] = a;
        }
    }
    Ok(u)
}

/// A normalized state vector with a register layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    num_qubits: usize,
    amps: Vec<C64>,
    layout: RegisterMap,
}

fn check_pure_capacity(n: usize) -> Result<(), QsimError> {
    if n > MAX_PURE_QUBITS {
        return Err(QsimError::Capacity { requested: n, limit: MAX_PURE_QUBITS });
    }
    Ok(())
}

fn check_mixed_capacity(n: usize) -> Result<(), QsimError> {
    if n > MAX_MIXED_QUBITS {
        return Err(QsimError::Capacity { requested: n, limit: MAX_MIXED_QUBITS });
    }
    Ok(())
}

fn qubits_of_len(len: usize) -> Option<usize> {
    len.is_power_of_two().then(|| len.trailing_zeros() as usize)
}

impl PureState {
    pub fn zero(num_qubits: usize) -> Result<Self, QsimError> {
        Self::basis(num_qubits, 0)
    }

    pub fn basis(num_qubits: usize, index: usize) -> Result<Self, QsimError> {
        check_pure_capacity(num_qubits)?;
        let mut amps = vec![C64::new(0.0, 0.0); 1 << num_qubits];
        *amps.get_mut(index).ok_or(QsimError::BadDimension { expected: 1 << num_qubits, got: index })? =
            C64::new(1.0, 0.0);
        Ok(Self { num_qubits, amps, layout: RegisterMap::single(num_qubits) })
    }

    /// Basis state from a bit string, qubit 0 first.
    pub fn from_bits(bits: &[bool]) -> Result<Self, QsimError> {
        let idx = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        Self::basis(bits.len(), idx)
    }

    /// Checks normalization within 1e-10.
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self, QsimError> {
        let n = qubits_of_len(amps.len()).ok_or(QsimError::BadDimension { expected: 0, got: amps.len() })?;
        check_pure_capacity(n)?;
        let nrm: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if (nrm - 1.0).abs() > 1e-10 {
            return Err(QsimError::NotNormalized(nrm));
        }
        Ok(Self { num_qubits: n, amps, layout: RegisterMap::single(n) })
    }

    /// Rescales a nonzero vector to unit norm.
    pub fn normalized(mut amps: Vec<C64>) -> Result<Self, QsimError> {
        let nrm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return Err(QsimError::NotNormalized(0.0));
        }
        amps.iter_mut().for_each(|z| *z /= nrm);
        Self::from_amplitudes(amps)
    }

    /// Haar-random pure state (normalized complex Gaussian vector).
    pub fn random<R: Rng + ?Sized>(num_qubits: usize, rng: &mut R) -> Result<Self, QsimError> {
        check_pure_capacity(num_qubits)?;
        let amps = (0..1usize << num_qubits)
            .map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::normalized(amps)
    }

    pub fn with_layout(mut self, layout: RegisterMap) -> Result<Self, QsimError> {
        layout.validate(self.num_qubits)?;
        self.layout = layout;
        Ok(self)
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn layout(&self) -> &RegisterMap {
        &self.layout
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &PureState) -> Result<C64, QsimError> {
        if self.num_qubits != other.num_qubits {
            return Err(QsimError::QubitMismatch { left: self.num_qubits, right: other.num_qubits });
        }
        Ok(crate::linalg::dot(&self.amps, &other.amps))
    }

    /// self ⊗ other; layouts are concatenated.
    pub fn tensor(&self, other: &PureState) -> Result<Self, QsimError> {
        let n = self.num_qubits + other.num_qubits;
        check_pure_capacity(n)?;
        let amps = self.amps.iter().flat_map(|a| other.amps.iter().map(move |b| a * b)).collect();
        Ok(Self { num_qubits: n, amps, layout: self.layout.concat(&other.layout) })
    }

    pub fn apply_gate(&self, gate: &GateOp) -> Result<Self, QsimError> {
        let mut out = self.clone();
        out.apply_gate_mut(gate)?;
        Ok(out)
    }

    pub fn apply_gate_mut(&mut self, gate: &GateOp) -> Result<(), QsimError> {
        gate.apply_to(&mut self.amps, self.num_qubits)
    }

    /// ⟨ψ|O_targets|ψ⟩ for an arbitrary operator.
    pub fn expectation(&self, op: &Matrix, targets: &[usize]) -> Result<C64, QsimError> {
        check_targets(targets, self.num_qubits)?;
        if op.rows() != 1 << targets.len() {
            return Err(QsimError::BadDimension { expected: 1 << targets.len(), got: op.rows() });
        }
        let mut v = self.amps.clone();
        apply_operator(&mut v, self.num_qubits, targets, op);
        Ok(crate::linalg::dot(&self.amps, &v))
    }

    /// Reduced density matrix on `keep`, in the order given.
    pub fn reduced(&self, keep: &[usize]) -> Result<MixedState, QsimError> {
        check_targets(keep, self.num_qubits)?;
        check_mixed_capacity(keep.len())?;
        Ok(MixedState { num_qubits: keep.len(), rho: cross_reduce(&self.amps, &self.amps, self.num_qubits, keep) })
    }

    pub fn to_mixed(&self) -> Result<MixedState, QsimError> {
        check_mixed_capacity(self.num_qubits)?;
        Ok(MixedState { num_qubits: self.num_qubits, rho: Matrix::outer(&self.amps, &self.amps) })
    }
}

/// Entrywise partial trace of |x⟩⟨y| onto `keep` (an operator, generally not a state).
pub fn cross_reduced(x: &PureState, y: &PureState, keep: &[usize]) -> Result<Matrix, QsimError> {
    if x.num_qubits != y.num_qubits {
        return Err(QsimError::QubitMismatch { left: x.num_qubits, right: y.num_qubits });
    }
    check_targets(keep, x.num_qubits)?;
    check_mixed_capacity(keep.len())?;
    Ok(cross_reduce(&x.amps, &y.amps, x.num_qubits, keep))
}

/// A density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedState {
    num_qubits: usize,
    rho: Matrix,
}

impl MixedState {
    /// Validates Hermiticity and unit trace within 1e-10, and positivity (eigenvalues ≥ −1e-9).
    pub fn from_matrix(rho: Matrix) -> Result<Self, QsimError> {
        let n = qubits_of_len(rho.rows()).ok_or(QsimError::BadDimension { expected: 0, got: rho.rows() })?;
        check_mixed_capacity(n)?;
        if !rho.is_hermitian(1e-10) {
            return Err(QsimError::InvalidDensity("not Hermitian"));
        }
        if (rho.trace().re - 1.0).abs() > 1e-10 {
            return Err(QsimError::InvalidDensity("trace differs from 1"));
        }
        if n <= 8 && rho.eigh()?.values[0] < -1e-9 {
            return Err(QsimError::InvalidDensity("negative eigenvalue"));
        }
        Ok(Self { num_qubits: n, rho })
    }

    pub fn maximally_mixed(num_qubits: usize) -> Result<Self, QsimError> {
        check_mixed_capacity(num_qubits)?;
        let d = 1usize << num_qubits;
        Ok(Self { num_qubits, rho: Matrix::identity(d).scale(C64::new(1.0 / d as f64, 0.0)) })
    }

    /// Σ_k w_k |ψ_k⟩⟨ψ_k|.
    pub fn from_ensemble(items: &[(f64, PureState)]) -> Result<Self, QsimError> {
        let n = items.first().map_or(0, |(_, s)| s.num_qubits);
        check_mixed_capacity(n)?;
        let d = 1usize << n;
        let mut rho = Matrix::zeros(d, d);
        for (w, s) in items {
            if s.num_qubits != n {
                return Err(QsimError::QubitMismatch { left: n, right: s.num_qubits });
            }
            rho = rho.add(&Matrix::outer(&s.amps, &s.amps).scale(C64::new(*w, 0.0)));
        }
        Self::from_matrix(rho)
    }

    pub(crate) fn from_matrix_unchecked(rho: Matrix) -> Self {
        let n = rho.rows().trailing_zeros() as usize;
        Self { num_qubits: n, rho }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn matrix(&self) -> &Matrix {
        &self.rho
    }

    pub fn into_matrix(self) -> Matrix {
        self.rho
    }

    /// ρ ↦ UρU†, computed as U ⊗ conj(U) on the vectorized matrix.
    pub fn apply_gate(&self, gate: &GateOp) -> Result<Self, QsimError> {
        check_targets(gate.targets(), self.num_qubits)?;
        let n = self.num_qubits;
        let mut data = self.rho.data().to_vec();
        apply_operator(&mut data, 2 * n, gate.targets(), gate.matrix());
        let col_targets: Vec<usize> = gate.targets().iter().map(|q| q + n).collect();
        apply_operator(&mut data, 2 * n, &col_targets, &gate.matrix().conj());
        let d = 1usize << n;
        Ok(Self { num_qubits: n, rho: Matrix::from_vec(d, d, data)? })
    }

    /// Reduced state on `keep`, with the kept qubits in ascending order.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self, QsimError> {
        let mut sorted = keep.to_vec();
        sorted.sort_unstable();
        self.reduce_ordered(&sorted)
    }

    /// Reduced state on `keep`, with the kept qubits in the order given.
    pub fn reduce_ordered(&self, keep: &[usize]) -> Result<Self, QsimError> {
        check_targets(keep, self.num_qubits)?;
        let n = self.num_qubits;
        let offs = local_offsets(n, keep);
        let d = offs.len();
        let mut out = Matrix::zeros(d, d);
        let full = 1usize << n;
        for base in rest_bases(n, keep) {
            for (i, &oi) in offs.iter().enumerate() {
                for (j, &oj) in offs.iter().enumerate() {
                    out[(i, j)] += self.rho.data()[(base + oi) * full + base + oj];
                }
            }
        }
        Ok(Self { num_qubits: keep.len(), rho: out })
    }

    /// Tr[(O on targets) ρ].
    pub fn expectation(&self, op: &Matrix, targets: &[usize]) -> Result<C64, QsimError> {
        let red = self.reduce_ordered(targets)?;
        if op.rows() != red.rho.rows() {
            return Err(QsimError::BadDimension { expected: red.rho.rows(), got: op.rows() });
        }
        Ok(op.matmul(&red.rho).trace())
    }

    pub fn tensor(&self, other: &MixedState) -> Result<Self, QsimError> {
        check_mixed_capacity(self.num_qubits + other.num_qubits)?;
        Ok(Self { num_qubits: self.num_qubits + other.num_qubits, rho: self.rho.kron(&other.rho) })
    }
}

/// ½ Σ |eigenvalues of a − b|.
pub fn trace_distance(a: &MixedState, b: &MixedState) -> Result<f64, QsimError> {
    if a.num_qubits != b.num_qubits {
        return Err(QsimError::QubitMismatch { left: a.num_qubits, right: b.num_qubits });
    }
    trace_norm_half(&a.rho.sub(&b.rho))
}

/// ½‖A‖₁ for a Hermitian matrix.
pub fn trace_norm_half(a: &Matrix) -> Result<f64, QsimError> {
    Ok(0.5 * a.eigh()?.values.iter().map(|x| x.abs()).sum::<f64>())
}

/// A POVM on an ordered list of target qubits, with Lüders Kraus operators √Π_j.
#[derive(Debug, Clone)]
pub struct Povm {
    targets: Vec<usize>,
    effects: Vec<Matrix>,
    kraus: Vec<Matrix>,
}

impl Povm {
    pub fn new(targets: Vec<usize>, effects: Vec<Matrix>) -> Result<Self, QsimError> {
        check_targets(&targets, usize::MAX)?;
        let d = 1usize << targets.len();
        let mut sum = Matrix::zeros(d, d);
        let mut kraus = Vec::with_capacity(effects.len());
        for (j, e) in effects.iter().enumerate() {
            if e.rows() != d || e.cols() != d {
                return Err(QsimError::BadDimension { expected: d, got: e.rows() });
            }
            if !e.is_hermitian(POVM_TOL) || e.eigh()?.values[0] < -POVM_TOL {
                return Err(QsimError::NotPositive(j));
            }
            sum = sum.add(e);
            let projector = e.matmul(e).max_abs_diff(e) <= 1e-12;
            kraus.push(if projector { e.clone() } else { e.sqrt_psd()? });
        }
        let dev = sum.max_abs_diff(&Matrix::identity(d));
        if dev > POVM_TOL {
            return Err(QsimError::NotComplete(dev));
        }
        Ok(Self { targets, effects, kraus })
    }

    /// Projective measurement in the computational basis of `targets`.
    pub fn computational(targets: Vec<usize>) -> Self {
        let d = 1usize << targets.len();
        let effects: Vec<Matrix> = (0..d)
            .map(|j| {
                let mut m = Matrix::zeros(d, d);
                m[(j, j)] = C64::new(1.0, 0.0);
                m
            })
            .collect();
        Self { targets, kraus: effects.clone(), effects }
    }

    /// {J, I − J}: outcome 0 is J.
    pub fn binary(targets: Vec<usize>, j: Matrix) -> Result<Self, QsimError> {
        let d = j.rows();
        let comp = Matrix::identity(d).sub(&j);
        Self::new(targets, vec![j, comp])
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    /// The same measurement on other qubits.
    pub fn retarget(&self, targets: Vec<usize>) -> Result<Self, QsimError> {
        check_targets(&targets, usize::MAX)?;
        if targets.len() != self.targets.len() {
            return Err(QsimError::QubitMismatch { left: self.targets.len(), right: targets.len() });
        }
        Ok(Self { targets, effects: self.effects.clone(), kraus: self.kraus.clone() })
    }

    pub fn effects(&self) -> &[Matrix] {
        &self.effects
    }

    pub fn len(&self) -> usize {
        self.effects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effects.is_empty()
    }
}

/// One outcome of a measurement: its probability and normalized post-state (absent when p = 0).
#[derive(Debug, Clone)]
pub struct Branch<S> {
    pub outcome: usize,
    pub probability: f64,
    pub state: Option<S>,
}

const ZERO_PROB: f64 = 1e-300;

/// Common interface of pure and mixed states.
pub trait QuantumState: Sized + Clone {
    fn num_qubits(&self) -> usize;
    fn apply_gate(&self, gate: &GateOp) -> Result<Self, QsimError>;
    /// Every outcome with its exact probability and Lüders post-state.
    fn branches(&self, povm: &Povm) -> Result<Vec<Branch<Self>>, QsimError>;
}

impl QuantumState for PureState {
    fn num_qubits(&self) -> usize {
        self.num_qubits
    }
    fn apply_gate(&self, gate: &GateOp) -> Result<Self, QsimError> {
        PureState::apply_gate(self, gate)
    }
    fn branches(&self, povm: &Povm) -> Result<Vec<Branch<Self>>, QsimError> {
        check_targets(&povm.targets, self.num_qubits)?;
        povm.kraus
            .iter()
            .enumerate()
            .map(|(j, k)| {
                let mut v = self.amps.clone();
                apply_operator(&mut v, self.num_qubits, &povm.targets, k);
                let p: f64 = v.iter().map(|z| z.norm_sqr()).sum();
                let state = (p > ZERO_PROB).then(|| {
                    let s = p.sqrt();
                    v.iter_mut().for_each(|z| *z /= s);
                    PureState { num_qubits: self.num_qubits, amps: v, layout: self.layout.clone() }
                });
                Ok(Branch { outcome: j, probability: p, state })
            })
            .collect()
    }
}

impl QuantumState for MixedState {
    fn num_qubits(&self) -> usize {
        self.num_qubits
    }
    fn apply_gate(&self, gate: &GateOp) -> Result<Self, QsimError> {
        MixedState::apply_gate(self, gate)
    }
    fn branches(&self, povm: &Povm) -> Result<Vec<Branch<Self>>, QsimError> {
        check_targets(&povm.targets, self.num_qubits)?;
        let n = self.num_qubits;
        let col_targets: Vec<usize> = povm.targets.iter().map(|q| q + n).collect();
        let d = 1usize << n;
        povm.kraus
            .iter()
            .enumerate()
            .map(|(j, k)| {
                let mut data = self.rho.data().to_vec();
                apply_operator(&mut data, 2 * n, &povm.targets, k);
                apply_operator(&mut data, 2 * n, &col_targets, &k.conj());
                let rho = Matrix::from_vec(d, d, data)?;
                let p = rho.trace().re;
                let state = (p > ZERO_PROB).then(|| MixedState { num_qubits: n, rho: rho.scale(C64::new(1.0 / p, 0.0)) });
                Ok(Branch { outcome: j, probability: p, state })
            })
            .collect()
    }
}

/// Samples one outcome: returns (outcome, post-state, probability).
pub fn measure<S: QuantumState, R: Rng + ?Sized>(
    state: &S,
    povm: &Povm,
    rng: &mut R,
) -> Result<(usize, S, f64), QsimError> {
    let branches = state.branches(povm)?;
    let r: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for b in branches {
        if b.state.is_none() {
            continue;
        }
        acc += b.probability;
        let hit = r < acc;
        last = Some(b);
        if hit {
            break;
        }
    }
    let b = last.ok_or(QsimError::NotNormalized(0.0))?;
    Ok((b.outcome, b.state.expect("nonzero branch"), b.probability))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn x_on_qubit_zero_flips_msb() {
        let s = PureState::zero(2).unwrap().apply_gate(&GateOp::x(0)).unwrap();
        assert_eq!(s.amplitudes()[2], c(1.0));
    }

    #[test]
    fn hh_is_identity() {
        let s = PureState::zero(1).unwrap().apply_gate(&GateOp::h(0)).unwrap().apply_gate(&GateOp::h(0)).unwrap();
        assert!((s.amplitudes()[0] - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn gate_errors() {
        let s = PureState::zero(2).unwrap();
        assert!(matches!(s.apply_gate(&GateOp::x(2)), Err(QsimError::QubitOutOfRange { .. })));
        assert!(matches!(
            GateOp::new(Matrix::identity(4), vec![1, 1]),
            Err(QsimError::DuplicateQubit(1))
        ));
        let m = Matrix::from_real(2, 2, &[1.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(GateOp::new(m, vec![0]), Err(QsimError::NotUnitary(_))));
    }

    #[test]
    fn bell_marginal_is_maximally_mixed() {
        let bell = PureState::zero(2).unwrap().apply_gate(&GateOp::h(0)).unwrap().apply_gate(&GateOp::cnot(0, 1)).unwrap();
        let r = bell.to_mixed().unwrap().partial_trace(&[0]).unwrap();
        assert!(r.matrix().max_abs_diff(&MixedState::maximally_mixed(1).unwrap().into_matrix()) < 1e-12);
    }

    #[test]
    fn partial_trace_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = PureState::random(3, &mut rng).unwrap();
        let r = psi.to_mixed().unwrap().partial_trace(&[0, 2]).unwrap();
        // direct: ρ[(a,c),(a',c')] = Σ_b ψ[a b c] ψ*[a' b c']
        let a = psi.amplitudes();
        for i in 0..4 {
            for j in 0..4 {
                let (i0, i2, j0, j2) = (i >> 1, i & 1, j >> 1, j & 1);
                let want: C64 = (0..2).map(|b| a[i0 * 4 + b * 2 + i2] * a[j0 * 4 + b * 2 + j2].conj()).sum();
                assert!((r.matrix()[(i, j)] - want).norm() < 1e-12);
            }
        }
        assert!((r.matrix().trace().re - 1.0).abs() < 1e-12);
        assert!(r.matrix().is_hermitian(1e-12));
    }

    #[test]
    fn trace_distance_examples() {
        let zero = PureState::zero(1).unwrap().to_mixed().unwrap();
        let one = PureState::basis(1, 1).unwrap().to_mixed().unwrap();
        let plus = PureState::zero(1).unwrap().apply_gate(&GateOp::h(0)).unwrap().to_mixed().unwrap();
        assert!(trace_distance(&zero, &zero).unwrap() < 1e-12);
        assert!((trace_distance(&zero, &one).unwrap() - 1.0).abs() < 1e-12);
        // difference [[1/2,-1/2],[-1/2,-1/2]] has eigenvalues ±1/√2
        assert!((trace_distance(&zero, &plus).unwrap() - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn computational_measurement() {
        let one = PureState::basis(1, 1).unwrap();
        let b = one.branches(&Povm::computational(vec![0])).unwrap();
        assert!((b[1].probability - 1.0).abs() < 1e-12 && b[0].probability.abs() < 1e-12);
        let plus = PureState::zero(1).unwrap().apply_gate(&GateOp::h(0)).unwrap();
        let b = plus.branches(&Povm::computational(vec![0])).unwrap();
        assert!((b[0].probability - 0.5).abs() < 1e-12 && (b[1].probability - 0.5).abs() < 1e-12);
    }

    #[test]
    fn binary_povm_matches_expectation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let phi = PureState::random(2, &mut rng).unwrap();
        let psi = PureState::random(2, &mut rng).unwrap();
        let j = Matrix::outer(phi.amplitudes(), phi.amplitudes());
        let povm = Povm::binary(vec![0, 1], j).unwrap();
        let b = psi.branches(&povm).unwrap();
        let want = phi.inner(&psi).unwrap().norm_sqr();
        assert!((b[0].probability - want).abs() < 1e-12);
        assert!((b[0].probability + b[1].probability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn povm_validation() {
        let half = Matrix::identity(2).scale(c(0.5));
        assert!(matches!(Povm::new(vec![0], vec![half.clone()]), Err(QsimError::NotComplete(_))));
        let neg = Matrix::from_real(2, 2, &[1.5, 0.0, 0.0, 1.0]).unwrap();
        let rest = Matrix::identity(2).sub(&neg);
        assert!(matches!(Povm::new(vec![0], vec![neg, rest]), Err(QsimError::NotPositive(1))));
    }

    #[test]
    fn empty_partial_trace_is_scalar_one() {
        let r = PureState::zero(2).unwrap().to_mixed().unwrap().partial_trace(&[]).unwrap();
        assert_eq!(r.num_qubits(), 0);
        assert!((r.matrix()[(0, 0)] - c(1.0)).norm() < 1e-12);
    }

    #[test]
    fn capacity_is_enforced() {
        assert!(matches!(PureState::zero(25), Err(QsimError::Capacity { .. })));
        assert!(matches!(MixedState::maximally_mixed(14), Err(QsimError::Capacity { .. })));
    }

    #[test]
    fn layout_must_cover_register() {
        let mut m = RegisterMap::new();
        m.push("a", 1);
        assert!(PureState::zero(2).unwrap().with_layout(m).is_err());
        let mut m = RegisterMap::new();
        m.push("a", 1);
        m.push("b", 1);
        let s = PureState::zero(2).unwrap().with_layout(m).unwrap();
        assert_eq!(s.layout().get("b"), Some(&[1usize][..]));
    }
}
