//! Haar-random oracle unitaries with query counting.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{qr, Matrix};
use crate::qsim::{GateOp, QsimError, QuantumState};
use crate::C64;

pub const MAX_LAMBDA: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HaarError {
    #[error("oracle width λ={0} outside 1..={MAX_LAMBDA}")]
    Lambda(usize),
    #[error("oracle acts on {expected} qubits, got {got} targets")]
    TargetCount { expected: usize, got: usize },
    #[error(transparent)]
    Qsim(#[from] QsimError),
}

/// Samples a Haar unitary: Ginibre matrix, QR, then each Q column divided by the phase of R's diagonal.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Matrix {
    let scale = core::f64::consts::FRAC_1_SQRT_2;
    let data: Vec<C64> = (0..dim * dim)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re * scale, im * scale)
        })
        .collect();
    let g = Matrix::from_vec(dim, dim, data).expect("square");
    let (mut q, r) = qr(&g).expect("square");
    for j in 0..dim {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// The shared oracle pair (G, G†) on λ qubits.
#[derive(Debug, Clone)]
pub struct OracleHandle {
    lambda: usize,
    gate: Matrix,
    adjoint: Matrix,
    queries: u64,
    seed: u64,
}

impl OracleHandle {
    pub fn sample(lambda: usize, seed: u64) -> Result<Self, HaarError> {
        if !(1..=MAX_LAMBDA).contains(&lambda) {
            return Err(HaarError::Lambda(lambda));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = haar_unitary(1 << lambda, &mut rng);
        Ok(Self::from_unitary(lambda, u, seed))
    }

    /// Wraps a fixed unitary, e.g. the identity oracle in tests.
    pub fn from_unitary(lambda: usize, unitary: Matrix, seed: u64) -> Self {
        let adjoint = unitary.adjoint();
        Self { lambda, gate: unitary, adjoint, queries: 0, seed }
    }

    pub fn lambda(&self) -> usize {
        self.lambda
    }

    pub fn unitary(&self) -> &Matrix {
        &self.gate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    /// The gate G (or G†) on `targets`, counted as one query.
    pub fn gate(&mut self, targets: &[usize], inverse: bool) -> Result<GateOp, HaarError> {
        if targets.len() != self.lambda {
            return Err(HaarError::TargetCount { expected: self.lambda, got: targets.len() });
        }
        let m = if inverse { &self.adjoint } else { &self.gate };
        let gate = GateOp::new(m.clone(), targets.to_vec())?;
        self.queries += 1;
        Ok(gate)
    }

    /// Applies G (or G† when `inverse`) on `targets` and counts one query.
    pub fn query<S: QuantumState>(&mut self, state: &S, targets: &[usize], inverse: bool) -> Result<S, HaarError> {
        let gate = self.gate(targets, inverse)?;
        Ok(state.apply_gate(&gate)?)
    }
}

/// Draws a Haar oracle.
pub fn sample_haar(lambda: usize, seed: u64) -> Result<OracleHandle, HaarError> {
    OracleHandle::sample(lambda, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qsim::PureState;

    #[test]
    fn unitary_and_deterministic() {
        let a = sample_haar(1, 7).unwrap();
        let b = sample_haar(1, 7).unwrap();
        assert!(a.unitary().is_unitary(1e-12));
        assert_eq!(a.unitary(), b.unitary());
        assert_eq!(a.queries(), 0);
    }

    #[test]
    fn query_then_inverse_restores() {
        let mut o = sample_haar(2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = PureState::random(3, &mut rng).unwrap();
        let fwd = o.query(&psi, &[2, 0], false).unwrap();
        let back = o.query(&fwd, &[2, 0], true).unwrap();
        assert!((back.inner(&psi).unwrap().norm() - 1.0).abs() < 1e-10);
        assert_eq!(o.queries(), 2);
        assert!(matches!(o.query(&psi, &[0], false), Err(HaarError::TargetCount { .. })));
    }

    #[test]
    fn lambda_range() {
        assert!(sample_haar(0, 1).is_err());
        assert!(sample_haar(9, 1).is_err());
    }
}
