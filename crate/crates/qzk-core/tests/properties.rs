use std::collections::BTreeSet;

use proptest::prelude::*;
use qzk_core::clockham::{build_history_hamiltonian, energy, history_state, history_subspace_distance};
use qzk_core::encver::{build_encoded_hamiltonian, build_program, Phase, VencHVerifier, PARTS};
use qzk_core::fixtures;
use qzk_core::haar::{haar_unitary, OracleHandle};
use qzk_core::linalg::Matrix;
use qzk_core::merkle::{commit, decommit_exact, r_set_of, TreeLayout};
use qzk_core::qsat::QsatInstance;
use qzk_core::qsim::{cross_reduced, GateOp, MixedState, Povm, PureState, QuantumState};
use qzk_core::steane::{encode_qubit, encoding_sequence, CodeParams};
use qzk_core::zkproto::{run_protocol_exact, AdaptiveVerifier, Direction, HonestProver, Payload, StaticVerifier};
use qzk_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_gate(n: usize, r: &mut ChaCha8Rng) -> GateOp {
    let a = r.random_range(0..n);
    let b = (a + r.random_range(1..n)) % n;
    match r.random_range(0..6) {
        0 => GateOp::h(a),
        1 => GateOp::t(a),
        2 => GateOp::p(a).adjoint(),
        3 => GateOp::cnot(a, b),
        4 => GateOp::cz(a, b),
        _ => GateOp::new(haar_unitary(4, r), vec![a, b]).unwrap(),
    }
}

fn random_mixed(n: usize, r: &mut ChaCha8Rng) -> MixedState {
    let items: Vec<(f64, PureState)> = (0..3).map(|_| (r.random::<f64>() + 0.1, PureState::random(n, r).unwrap())).collect();
    let total: f64 = items.iter().map(|x| x.0).sum();
    let items: Vec<_> = items.into_iter().map(|(w, s)| (w / total, s)).collect();
    MixedState::from_ensemble(&items).unwrap()
}

fn random_subset(n: usize, r: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).filter(|_| r.random_bool(0.5)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gates_preserve_norm_and_trace(seed in any::<u64>(), n in 2usize..6) {
        let mut r = rng(seed);
        let mut psi = PureState::random(n, &mut r).unwrap();
        let mut rho = random_mixed(n, &mut r);
        for _ in 0..8 {
            let g = random_gate(n, &mut r);
            psi = psi.apply_gate(&g).unwrap();
            rho = rho.apply_gate(&g).unwrap();
        }
        prop_assert!((psi.norm_sqr() - 1.0).abs() < 1e-10);
        prop_assert!((rho.matrix().trace().re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn partial_traces_compose(seed in any::<u64>(), n in 2usize..6) {
        let mut r = rng(seed);
        let rho = random_mixed(n, &mut r);
        let ab = random_subset(n, &mut r);
        let a: Vec<usize> = ab.iter().copied().filter(|_| r.random_bool(0.5)).collect();
        let pos: Vec<usize> = a.iter().map(|q| ab.iter().position(|x| x == q).unwrap()).collect();
        let twice = rho.partial_trace(&ab).unwrap().partial_trace(&pos).unwrap();
        let once = rho.partial_trace(&a).unwrap();
        prop_assert!(twice.matrix().max_abs_diff(once.matrix()) < 1e-10);
    }

    #[test]
    fn povm_probabilities_are_born_rule(seed in any::<u64>(), n in 1usize..5) {
        let mut r = rng(seed);
        let rho = random_mixed(n, &mut r);
        let targets: Vec<usize> = {
            let t = random_subset(n, &mut r);
            if t.is_empty() { vec![0] } else { t }
        };
        let d = 1usize << targets.len();
        let u = haar_unitary(d, &mut r);
        let effects: Vec<Matrix> = (0..d)
            .map(|j| { let c = u.column(j); Matrix::outer(&c, &c) })
            .collect();
        let povm = Povm::new(targets.clone(), effects.clone()).unwrap();
        let branches = rho.branches(&povm).unwrap();
        let total: f64 = branches.iter().map(|b| b.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        for (b, e) in branches.iter().zip(&effects) {
            prop_assert!((b.probability - rho.expectation(e, &targets).unwrap().re).abs() < 1e-9);
        }
        let psi = PureState::random(n, &mut r).unwrap();
        let pure: f64 = psi.branches(&povm).unwrap().iter().map(|b| b.probability).sum();
        prop_assert!((pure - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mixed_gate_matches_purification(seed in any::<u64>(), n in 2usize..4) {
        let mut r = rng(seed);
        let psi = PureState::random(2 * n, &mut r).unwrap();
        let sys: Vec<usize> = (0..n).collect();
        let rho = psi.reduced(&sys).unwrap();
        let g = random_gate(n, &mut r);
        let via_mixed = rho.apply_gate(&g).unwrap();
        let via_pure = psi.apply_gate(&g).unwrap().reduced(&sys).unwrap();
        prop_assert!(via_mixed.matrix().max_abs_diff(via_pure.matrix()) < 1e-10);
    }

    #[test]
    fn haar_samples_are_unitary(seed in any::<u64>(), lambda in 1usize..4) {
        let u = haar_unitary(1 << lambda, &mut rng(seed));
        prop_assert!(u.is_unitary(1e-12));
    }

    #[test]
    fn values_are_probabilities(seed in any::<u64>(), n in 1usize..4, m in 1usize..5) {
        let mut r = rng(seed);
        let inst = fixtures::mixed(n, m, 1, 1).unwrap();
        let vm = inst.val_max().unwrap();
        for _ in 0..4 {
            let sigma = random_mixed(n, &mut r);
            let v = inst.val_of_state(&sigma).unwrap();
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v));
            prop_assert!(vm.value >= v - 1e-9);
        }
    }

    #[test]
    fn history_states_have_zero_energy(seed in any::<u64>()) {
        let mut r = rng(seed);
        let seq = fixtures::random_sequence(6, 6, &mut r).unwrap();
        let h = build_history_hamiltonian(&seq);
        let b = seq.partition().len();
        prop_assert_eq!(h.terms().len(), seq.len() + (seq.len() - 1) + b);
        let phi = PureState::random(seq.n1(), &mut r).unwrap();
        let psi = history_state(&seq, &phi).unwrap();
        prop_assert!(energy(&h, &psi).unwrap().abs() < 1e-10);
        prop_assert!(history_subspace_distance(&seq, &psi).unwrap() < 1e-8);
    }

    #[test]
    fn r_sets_cover_and_grow(seed in any::<u64>(), log_ell in 0u32..5) {
        let ell = 1usize << log_ell;
        let mut r = rng(seed);
        let leaves: BTreeSet<usize> = (ell..2 * ell).filter(|_| r.random_bool(0.4)).collect();
        let more: BTreeSet<usize> = leaves.iter().copied().chain((ell..2 * ell).filter(|_| r.random_bool(0.3))).collect();
        let a = r_set_of(&leaves, ell).unwrap();
        let b = r_set_of(&more, ell).unwrap();
        prop_assert!(a.is_superset(&leaves));
        prop_assert!(b.is_superset(&a));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn commit_uses_ell_minus_one_queries_and_opens_cleanly(seed in any::<u64>(), log_ell in 1u32..3, b in 1usize..3) {
        let ell = 1usize << log_ell;
        let layout = TreeLayout::new(ell, b).unwrap();
        let mut r = rng(seed);
        let mut o = OracleHandle::sample(3 * b, seed).unwrap();
        let sigma = PureState::random(ell, &mut r).unwrap();
        let mut regs = commit(&sigma, layout, &mut o).unwrap();
        prop_assert_eq!(o.queries() as usize, ell - 1);
        regs.send(&(1..=layout.num_nodes()).collect()).unwrap();
        let mut opened = BTreeSet::new();
        for leaf in ell..2 * ell {
            let new: BTreeSet<usize> = [leaf].into();
            let before = o.queries();
            let e = decommit_exact(&regs, &opened, &new, &mut o).unwrap();
            prop_assert_eq!((o.queries() - before) as usize, e.node_zero_probabilities.len());
            for (_, p) in &e.node_zero_probabilities {
                prop_assert!((p - 1.0).abs() < 1e-9);
            }
            regs = e.registers.unwrap();
            opened.insert(leaf);
        }
        let leaves: Vec<usize> = (ell..2 * ell).collect();
        let got = regs.state().reduced(&regs.leaf_qubits(&leaves)).unwrap();
        let d = qzk_core::qsim::trace_distance(&got, &sigma.to_mixed().unwrap()).unwrap();
        prop_assert!(d < 1e-9);
    }

    #[test]
    fn transcripts_add_up_and_sends_are_disjoint(seed in any::<u64>()) {
        let v = StaticVerifier::toy_bell();
        let mut o = OracleHandle::sample(3, seed).unwrap();
        let sigma = PureState::random(4, &mut rng(seed)).unwrap();
        let run = run_protocol_exact(&v, &sigma, TreeLayout::new(4, 1).unwrap(), &mut HonestProver, &mut o).unwrap();
        for br in &run.branches {
            let t = &br.transcript;
            let mut seen = BTreeSet::new();
            let (mut qubits, mut bits) = (0, 0);
            for msg in &t.messages {
                match &msg.payload {
                    Payload::Registers { nodes, qubits: q } => {
                        prop_assert_eq!(msg.direction, Direction::ProverToVerifier);
                        for u in nodes {
                            prop_assert!(seen.insert(*u), "node {} sent twice", u);
                        }
                        qubits += q;
                    }
                    Payload::Classical { bits: b, .. } => bits += b,
                }
            }
            let totals = t.totals();
            prop_assert_eq!(totals.qubits_sent, qubits);
            prop_assert_eq!(totals.bits_sent, bits);
        }
    }

    #[test]
    fn local_cross_operators_vanish_for_distinguishable_complements(seed in any::<u64>(), n in 2usize..5) {
        let mut r = rng(seed);
        let keep: Vec<usize> = (0..n - 1).filter(|_| r.random_bool(0.5)).collect();
        let rest: Vec<usize> = (0..n).filter(|q| !keep.contains(q)).collect();
        // φ and ψ agree on S but put their complement on orthogonal basis strings
        let s = PureState::random(keep.len(), &mut r).unwrap();
        let mut x = vec![C64::new(0.0, 0.0); 1 << n];
        let mut y = x.clone();
        let place = |sv: usize, rv: usize| -> usize {
            keep.iter().enumerate().filter(|(j, _)| sv >> (keep.len() - 1 - j) & 1 == 1).map(|(_, q)| 1usize << (n - 1 - q)).sum::<usize>()
                + rest.iter().enumerate().filter(|(j, _)| rv >> (rest.len() - 1 - j) & 1 == 1).map(|(_, q)| 1usize << (n - 1 - q)).sum::<usize>()
        };
        let all_ones = (1usize << rest.len()) - 1;
        for (sv, &a) in s.amplitudes().iter().enumerate() {
            x[place(sv, 0)] = a;
            y[place(sv, all_ones)] = a;
        }
        let x = PureState::from_amplitudes(x).unwrap();
        let y = PureState::from_amplitudes(y).unwrap();
        let fid = x.reduced(&rest).unwrap().expectation(y.reduced(&rest).unwrap().matrix(), &(0..rest.len()).collect::<Vec<_>>()).unwrap().re;
        prop_assert!(fid <= 1e-12);
        prop_assert!(cross_reduced(&x, &y, &keep).unwrap().max_abs() <= 1e-9);
    }
}

#[test]
fn encoding_gates_compose_to_the_dense_encoder() {
    let p = CodeParams::new(1);
    let u = encoding_sequence(&p).unitary().unwrap();
    let zero = qzk_core::steane::codeword_by_span(false);
    let one = qzk_core::steane::codeword_by_span(true);
    // columns |0⟩|000000⟩ and |1⟩|000000⟩ of the dense encoder are the codewords
    for (col, want) in [(0usize, &zero), (64, &one)] {
        let got = u.column(col);
        let overlap: C64 = got.iter().zip(want.iter()).map(|(a, b)| a.conj() * b).sum();
        assert!((overlap.norm() - 1.0).abs() < 1e-9);
    }
    let mut r = rng(3);
    let psi = PureState::random(1, &mut r).unwrap();
    let amps = [psi.amplitudes()[0], psi.amplitudes()[1]];
    let enc = encode_qubit(&p, amps).unwrap();
    let want: Vec<C64> = zero.iter().zip(&one).map(|(z, o)| amps[0] * z + amps[1] * o).collect();
    let overlap: C64 = enc.amplitudes().iter().zip(&want).map(|(a, b)| a.conj() * b).sum();
    assert!((overlap.norm() - 1.0).abs() < 1e-9);
}

#[test]
fn haar_moment_is_invariant_under_fixed_rotation() {
    let mut r = rng(77);
    let v = haar_unitary(4, &mut r);
    let samples = 4000;
    let (mut plain, mut rotated) = (0.0, 0.0);
    for _ in 0..samples {
        let u = haar_unitary(4, &mut r);
        plain += u[(0, 0)].norm_sqr();
        rotated += v.matmul(&u)[(0, 0)].norm_sqr();
    }
    let (a, b) = (plain / samples as f64, rotated / samples as f64);
    // Var |U00|² = 3/80 at d = 4
    let se = (2.0 * 3.0 / 80.0 / samples as f64).sqrt();
    assert!((a - b).abs() < 4.0 * se, "{a} vs {b}");
}

fn vanilla_grid() -> Vec<QsatInstance> {
    let mut out = Vec::new();
    for k in 1..=2 {
        for gamma in 1..=2 {
            for m in [1, 2, 4] {
                out.push(fixtures::mixed(2, m, k, gamma).unwrap());
            }
        }
    }
    out
}

#[test]
fn term_count_is_two_t_plus_parts_plus_one() {
    for kappa in [0, 1] {
        for inst in vanilla_grid() {
            let p = build_program(&inst, CodeParams::new(kappa)).unwrap();
            let h = build_encoded_hamiltonian(&p);
            assert_eq!(h.num_terms(), 2 * p.len() + PARTS + 1);
            assert_eq!(h.count_law().eval(inst.k(), inst.gamma()), h.num_terms());
        }
    }
}

#[test]
fn indexed_terms_are_exactly_check_and_test_propagation() {
    for kappa in [0, 1] {
        for inst in vanilla_grid() {
            let p = build_program(&inst, CodeParams::new(kappa)).unwrap();
            let h = build_encoded_hamiltonian(&p);
            let log_m = inst.m().trailing_zeros() as usize;
            for idx in 0..h.num_terms() {
                let phase = h.term_phase(idx);
                assert_eq!(h.is_indexed(idx), matches!(phase, Some(Phase::Check | Phase::Test)), "term {idx}");
            }
            let nb = p.params().n;
            let bound = 3 + 3 * inst.k() * (nb - 1) + 2 * inst.gamma() * nb + 2 * log_m * nb;
            assert!(h.plain_locality() <= bound, "{} > {bound}", h.plain_locality());
        }
    }
}

#[test]
fn term_verifier_rounds_are_disjoint() {
    let inst = fixtures::three_quarter(1, 1, 1).unwrap();
    let h = build_encoded_hamiltonian(&build_program(&inst, CodeParams::new(0)).unwrap());
    let v = VencHVerifier::new(&h).unwrap();
    for tau in 0..v.coins() {
        let q1 = v.query(&[tau]).unwrap();
        for o in 0..v.outcome_alphabet() {
            let q2 = v.query(&[tau, o]).unwrap();
            assert!(q1.subset.iter().all(|q| !q2.subset.contains(q)), "term {tau}");
            assert!(q1.subset.len().max(q2.subset.len()) <= v.locality());
        }
    }
}
