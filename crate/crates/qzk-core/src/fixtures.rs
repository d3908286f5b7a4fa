//! Small named QSAT instances with known values.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::clockham::{ClockError, Step, UnitarySequence};
use crate::qsat::{x_gates, Gate, QsatError, QsatInstance};
use crate::qsim::GateOp;

/// Accepts iff data wire 0 reads 1.
pub fn one_gate(k: usize) -> Vec<Gate> {
    vec![Gate::Cnot { control: 0, target: k }]
}

/// Accepts iff data wire 0 reads 0.
pub fn zero_gate(k: usize) -> Vec<Gate> {
    let mut g = x_gates(k).to_vec();
    g.push(Gate::Cnot { control: 0, target: k });
    g
}

/// Accepts with probability ½ whatever the input.
pub fn coin_gate(k: usize) -> Vec<Gate> {
    vec![Gate::H(k)]
}

/// H·T·H on the output: accepts with probability (1 − cos π/4)/2.
pub fn t_gate(k: usize) -> Vec<Gate> {
    vec![Gate::H(k), Gate::T(k), Gate::H(k)]
}

fn window(i: usize, n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|j| (i + j) % n).collect()
}

/// Every check always accepts: val = 1.
pub fn all_accept(n: usize, m: usize, k: usize, gamma: usize) -> Result<QsatInstance, QsatError> {
    let subsets = (0..m).map(|i| window(i, n, k)).collect();
    QsatInstance::new(n, k, gamma, subsets, vec![x_gates(k).to_vec(); m])
}

/// Check i reads qubit i mod n and wants 1: val = 1, attained by |1…1⟩.
pub fn copy_checks(n: usize, m: usize, k: usize, gamma: usize) -> Result<QsatInstance, QsatError> {
    let subsets = (0..m).map(|i| window(i, n, k)).collect();
    QsatInstance::new(n, k, gamma, subsets, vec![one_gate(k); m])
}

/// A |1⟩-check and a |0⟩-check on qubit 0: val = ½.
pub fn contradictory(n: usize, k: usize, gamma: usize) -> Result<QsatInstance, QsatError> {
    QsatInstance::new(n, k, gamma, vec![window(0, n, k); 2], vec![one_gate(k), zero_gate(k)])
}

/// A fair-coin check and a |1⟩-check: val = ¾.
pub fn three_quarter(n: usize, k: usize, gamma: usize) -> Result<QsatInstance, QsatError> {
    QsatInstance::new(n, k, gamma, vec![window(0, n, k); 2], vec![coin_gate(k), one_gate(k)])
}

/// A |1⟩-check and an H·T·H check: val = (1 + (1 − cos π/4)/2)/2. Exercises the T gadget.
pub fn with_t(n: usize, k: usize, gamma: usize) -> Result<QsatInstance, QsatError> {
    QsatInstance::new(n, k, gamma, vec![window(0, n, k); 2], vec![one_gate(k), t_gate(k)])
}

/// `m` checks cycling through |1⟩-, |0⟩- and coin checks over a sliding window.
pub fn mixed(n: usize, m: usize, k: usize, gamma: usize) -> Result<QsatInstance, QsatError> {
    let subsets = (0..m).map(|i| window(i, n, k)).collect();
    let circuits = (0..m)
        .map(|i| match i % 3 {
            0 => one_gate(k),
            1 => zero_gate(k),
            _ => coin_gate(k),
        })
        .collect();
    QsatInstance::new(n, k, gamma, subsets, circuits)
}

fn random_gate<R: Rng + ?Sized>(width: usize, rng: &mut R) -> GateOp {
    let a = rng.random_range(0..width);
    let pick = if width > 1 { rng.random_range(0..5) } else { rng.random_range(0..3) };
    if pick < 3 {
        return [GateOp::h, GateOp::p, GateOp::t][pick](a);
    }
    let b = (a + rng.random_range(1..width)) % width;
    if pick == 3 {
        GateOp::cnot(a, b)
    } else {
        GateOp::cz(a, b)
    }
}

/// A random sequence of 1–`max_steps` steps of up to three Clifford+T gates on at most
/// `max_qubits` qubits, with at least one witness qubit and a random ancilla partition.
pub fn random_sequence<R: Rng + ?Sized>(max_steps: usize, max_qubits: usize, rng: &mut R) -> Result<UnitarySequence, ClockError> {
    let width = rng.random_range(1..=max_qubits.max(1));
    let n1 = rng.random_range(1..=width);
    let n2 = width - n1;
    let steps = (0..rng.random_range(1..=max_steps.max(1)))
        .map(|_| Step::Gates((0..rng.random_range(1..=3)).map(|_| random_gate(width, rng)).collect()))
        .collect();
    let parts = rng.random_range(1..=3);
    let mut partition = vec![Vec::new(); parts];
    for q in 0..n2 {
        partition[rng.random_range(0..parts)].push(q);
    }
    UnitarySequence::new(steps, n1, n2, partition)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        let cases = [
            (all_accept(2, 2, 1, 1).unwrap(), 1.0),
            (copy_checks(2, 2, 2, 1).unwrap(), 1.0),
            (contradictory(1, 1, 1).unwrap(), 0.5),
            (three_quarter(1, 1, 1).unwrap(), 0.75),
            (with_t(1, 1, 1).unwrap(), 0.5 + (1.0 - core::f64::consts::FRAC_1_SQRT_2) / 4.0),
        ];
        for (inst, v) in cases {
            assert!((inst.val_max().unwrap().value - v).abs() < 1e-9);
        }
    }
}
