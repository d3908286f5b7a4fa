use qzk_core::clockham::{history_state, unary_index, TermKind};
use qzk_core::encver::{
    build_encoded_hamiltonian, build_program, otp_witness, reduce_localqma, run_venc, run_venc_ensemble, venc_h_verify, EncodedProgram,
    Pad, Phase, VencHVerifier, ViewCase, ViewSimulator,
};
use qzk_core::fixtures;
use qzk_core::linalg::Matrix;
use qzk_core::qsat::QsatInstance;
use qzk_core::qsim::{trace_distance, GateOp, MixedState, PureState};
use qzk_core::steane::CodeParams;
use qzk_core::zkproto::AdaptiveVerifier;
use qzk_core::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vanilla(inst: &QsatInstance) -> EncodedProgram {
    build_program(&inst.pad_to_power_of_two(), CodeParams::new(0)).unwrap()
}

fn bits(v: usize, n: usize) -> Vec<bool> {
    (0..n).map(|j| v >> (n - 1 - j) & 1 == 1).collect()
}

/// Undo X^a Z^b on every data qubit: CNOT from the X key, then CZ from the Z key.
fn undo_all(n: usize, psi: &PureState) -> PureState {
    let mut s = psi.clone();
    for u in 0..n {
        s.apply_gate_mut(&GateOp::cnot(n + u, u)).unwrap();
        s.apply_gate_mut(&GateOp::cz(2 * n + u, u)).unwrap();
    }
    s
}

#[test]
fn uniform_pad_hides_the_witness() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let phi = PureState::random(1, &mut r).unwrap();
        let ens = otp_witness(&CodeParams::new(0), &phi, &Pad::Uniform).unwrap();
        assert_eq!(ens.len(), 4);
        let rho = MixedState::from_ensemble(&ens).unwrap().partial_trace(&[0]).unwrap();
        assert!(rho.matrix().max_abs_diff(&Matrix::identity(2).scale(C64::new(0.5, 0.0))) < 1e-12);
    }
    let trivial = otp_witness(&CodeParams::new(0), &PureState::basis(1, 1).unwrap(), &Pad::Keys { a: vec![false], b: vec![false] }).unwrap();
    assert!((trivial[0].1.amplitudes()[0b100].re - 1.0).abs() < 1e-12);
}

#[test]
fn undoing_the_pad_recovers_the_witness() {
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let n = 2;
    for _ in 0..8 {
        let phi = PureState::random(n, &mut r).unwrap();
        let (a, b) = (r.random_range(0..4), r.random_range(0..4));
        let pad = Pad::Keys { a: bits(a, n), b: bits(b, n) };
        let w = &otp_witness(&CodeParams::new(0), &phi, &pad).unwrap()[0].1;
        let keys = PureState::basis(2 * n, a << n | b).unwrap();
        let want = phi.tensor(&keys).unwrap();
        assert!((undo_all(n, w).inner(&want).unwrap().norm() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn vanilla_phase_lengths() {
    let p = vanilla(&fixtures::mixed(2, 2, 1, 1).unwrap());
    let lens: Vec<(Phase, usize)> = p.phases().to_vec();
    assert_eq!(lens.iter().map(|x| x.0).collect::<Vec<_>>(), Phase::ALL.to_vec());
    assert_eq!(lens.iter().map(|x| x.1).collect::<Vec<_>>(), vec![2, 1, 1, 1, 3, 4, 1]);
    assert_eq!(p.len(), 13);
}

#[test]
fn hadamard_phase_spreads_the_index() {
    let p = vanilla(&fixtures::mixed(1, 4, 1, 1).unwrap());
    let lay = p.layout().clone();
    let comps = p.sequence().components(PureState::zero(lay.witness_qubits()).unwrap().amplitudes()).unwrap();
    let after_h = p.phase_steps(Phase::Hadamard).end - 1;
    let st = PureState::from_amplitudes(comps[after_h].clone()).unwrap();
    let idx: Vec<usize> = lay.eidx.clone().collect();
    let rho = st.reduced(&idx).unwrap();
    let d = 1 << idx.len();
    let uniform = Matrix::from_vec(d, d, vec![C64::new(1.0 / d as f64, 0.0); d * d]).unwrap();
    assert!(rho.matrix().max_abs_diff(&uniform) < 1e-12);
}

/// Σ_i |i,i⟩_{idx,midx}/√m ⊗ C_i · undo_{S_i} (ψ ⊗ 0), built gate by gate from the instance.
fn reference_output(p: &EncodedProgram, witness: &PureState) -> PureState {
    let inst = p.instance();
    let lay = p.layout();
    let ns = lay.state_qubits();
    let n = inst.n();
    let m = inst.m();
    let mut total = vec![C64::new(0.0, 0.0); 1 << ns];
    for i in 0..m {
        let mut s = witness.tensor(&PureState::zero(ns - lay.witness_qubits()).unwrap()).unwrap();
        for &u in &inst.subsets()[i] {
            s.apply_gate_mut(&GateOp::cnot(lay.eotp.start + u, lay.edata.start + u)).unwrap();
            s.apply_gate_mut(&GateOp::cz(lay.eotp.start + n + u, lay.edata.start + u)).unwrap();
        }
        let map: Vec<usize> = inst.subsets()[i].iter().map(|&u| lay.edata.start + u).chain(lay.eanc.clone()).collect();
        for g in &inst.circuits()[i] {
            s.apply_gate_mut(&g.to_op(&map)).unwrap();
        }
        for (j, (qi, qm)) in lay.eidx.clone().zip(lay.emidx.clone()).enumerate() {
            if i >> (lay.log_m - 1 - j) & 1 == 1 {
                s.apply_gate_mut(&GateOp::x(qi)).unwrap();
                s.apply_gate_mut(&GateOp::x(qm)).unwrap();
            }
        }
        let w = 1.0 / (m as f64).sqrt();
        for (t, a) in total.iter_mut().zip(s.amplitudes()) {
            *t += a * w;
        }
    }
    PureState::from_amplitudes(total).unwrap()
}

#[test]
fn emitted_steps_multiply_to_the_whole_verifier() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    for inst in [fixtures::with_t(1, 1, 1).unwrap(), fixtures::three_quarter(1, 1, 1).unwrap()] {
        let p = vanilla(&inst);
        let lay = p.layout();
        let keep: Vec<usize> = (0..lay.state_qubits()).filter(|q| !lay.emagic.contains(q)).collect();
        for _ in 0..4 {
            let w = PureState::random(lay.witness_qubits(), &mut r).unwrap();
            let comps = p.sequence().components(w.amplitudes()).unwrap();
            let got = PureState::from_amplitudes(comps.last().unwrap().clone()).unwrap().reduced(&keep).unwrap();
            let want = reference_output(&p, &w).reduced(&keep).unwrap();
            assert!(trace_distance(&got, &want).unwrap() < 1e-9);
        }
    }
}

#[test]
fn acceptance_is_the_value_of_the_unpadded_witness() {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    for inst in [fixtures::contradictory(1, 1, 1).unwrap(), fixtures::with_t(2, 1, 1).unwrap(), fixtures::mixed(2, 3, 1, 1).unwrap()] {
        let p = vanilla(&inst);
        let n = inst.n();
        let vm = p.instance().val_max().unwrap().value;
        for _ in 0..4 {
            let w = PureState::random(3 * n, &mut r).unwrap();
            let alpha = run_venc(&p, &w).unwrap();
            let data = undo_all(n, &w).reduced(&(0..n).collect::<Vec<_>>()).unwrap();
            let oracle = p.instance().val_of_state(&data).unwrap();
            assert!((alpha - oracle).abs() < 1e-9, "{alpha} vs {oracle}");
            assert!(vm >= alpha - 1e-9);
        }
    }
    let p = vanilla(&fixtures::all_accept(2, 2, 1, 1).unwrap());
    let w = PureState::random(6, &mut r).unwrap();
    assert!((run_venc(&p, &w).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn honest_witness_reaches_the_instance_value() {
    for inst in [fixtures::copy_checks(1, 2, 1, 1).unwrap(), fixtures::with_t(1, 1, 1).unwrap(), fixtures::mixed(2, 3, 1, 1).unwrap()] {
        let p = vanilla(&inst);
        let vm = p.instance().val_max().unwrap();
        let ens = otp_witness(p.params(), &vm.maximizer, &Pad::Uniform).unwrap();
        assert!((run_venc_ensemble(&p, &ens).unwrap() - vm.value).abs() < 1e-9);
    }
}

#[test]
fn ground_energy_is_below_the_rejection_of_the_best_witness() {
    for inst in [
        fixtures::all_accept(1, 2, 1, 1).unwrap(),
        fixtures::copy_checks(2, 2, 1, 1).unwrap(),
        fixtures::contradictory(1, 1, 1).unwrap(),
        fixtures::three_quarter(2, 1, 1).unwrap(),
        fixtures::with_t(1, 1, 1).unwrap(),
    ] {
        let red = reduce_localqma(&inst, CodeParams::new(0)).unwrap();
        let val = red.val.unwrap();
        let sp = red.spectrum.unwrap();
        assert!(sp.lambda_min <= 1.0 - val + 1e-8, "{} > {}", sp.lambda_min, 1.0 - val);
        if val > 1.0 - 1e-12 {
            assert!(sp.lambda_min.abs() <= 1e-8);
            assert!((sp.completeness - 1.0).abs() < 1e-12);
            assert!(sp.constant.is_none());
        } else {
            let c = sp.constant.unwrap();
            assert!(sp.lambda_min >= ((1.0 - val) / c).powi(2) - 1e-12);
        }
        assert_eq!(red.num_terms, 2 * red.program.len() + 6);
    }
}

#[test]
fn rejection_is_energy_over_m() {
    let inst = fixtures::three_quarter(1, 1, 1).unwrap();
    let h = build_encoded_hamiltonian(&vanilla(&inst));
    let v = VencHVerifier::new(&h).unwrap();
    let mf = h.num_terms() as f64;
    let mut r = ChaCha8Rng::seed_from_u64(10);
    let psi = PureState::random(h.total_qubits(), &mut r).unwrap();
    assert!((v.rejection_probability(&psi).unwrap() - h.energy(&psi).unwrap() / mf).abs() < 1e-9);

    // clock reads 0 1 0 … : one violated stabilizer term, witness untouched
    let t_max = h.program().len();
    let clock = PureState::basis(t_max, 1 << (t_max - 2)).unwrap();
    let st = clock.tensor(&PureState::random(h.program().layout().state_qubits(), &mut r).unwrap()).unwrap();
    let rej = v.rejection_probability(&st).unwrap();
    assert!((rej - h.energy(&st).unwrap() / mf).abs() < 1e-9);
    let energies = h.hamiltonian().term_energies(st.amplitudes()).unwrap();
    let stab: Vec<f64> = h.hamiltonian().terms().iter().zip(&energies).filter(|(t, _)| t.kind == TermKind::Stab).map(|(_, e)| *e).collect();
    assert!((stab[0] - 1.0).abs() < 1e-12);
    assert!(stab[1..].iter().all(|e| e.abs() < 1e-12));
}

#[test]
fn honest_history_of_an_accepting_instance_is_never_rejected() {
    let inst = fixtures::all_accept(1, 2, 1, 1).unwrap();
    let p = vanilla(&inst);
    let h = build_encoded_hamiltonian(&p);
    let v = VencHVerifier::new(&h).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(12);
    let w = PureState::random(p.layout().witness_qubits(), &mut r).unwrap();
    let hist = history_state(p.sequence(), &w).unwrap();
    assert!(v.rejection_probability(&hist).unwrap().abs() < 1e-9);
    for _ in 0..20 {
        let run = venc_h_verify(&v, &hist, &mut r).unwrap();
        assert!(run.accepted);
        assert_eq!(run.index.is_some(), h.is_indexed(run.term));
    }
    assert_eq!(v.rounds(), 2);
    assert_eq!(unary_index(0, p.len()), 0);
}

fn check_views(inst: &QsatInstance, exact: bool) {
    let h = build_encoded_hamiltonian(&vanilla(inst));
    let sim = ViewSimulator::new(&h).unwrap();
    let slack = 1.0 - sim.val();
    for idx in 0..h.num_terms() {
        let branches: Vec<Option<usize>> =
            if h.is_indexed(idx) { (0..h.program().instance().m()).map(Some).collect() } else { vec![None] };
        for br in branches {
            let view = sim.view(idx, br).unwrap();
            let full = sim.full_view(&view.support).unwrap();
            let d = trace_distance(&view.state, &full).unwrap();
            assert!(d <= slack + 1e-9, "term {idx}: {d}");
            if exact || view.case == ViewCase::BeforeWitness {
                assert!(d <= 1e-9, "term {idx} ({:?}): {d}", view.case);
            }
        }
    }
}

#[test]
fn simulated_views_match_the_honest_history_state() {
    check_views(&fixtures::copy_checks(1, 2, 1, 1).unwrap(), true);
    check_views(&fixtures::contradictory(1, 1, 1).unwrap(), false);
}

#[test]
fn steane_level_is_counted_but_not_run() {
    let inst = fixtures::mixed(2, 2, 1, 1).unwrap();
    let red = reduce_localqma(&inst, CodeParams::new(1)).unwrap();
    assert!(red.verifier.is_none() && red.spectrum.is_none());
    assert_eq!(red.num_terms, 2 * red.program.len() + 6);
    assert!(ViewSimulator::new(&red.hamiltonian).is_err());
}
