//! Qubits and bits in every branch transcript against the explicit bound.

use qzk_core::haar::{OracleHandle, MAX_LAMBDA};
use qzk_core::merkle::TreeLayout;
use qzk_core::qsim::{PureState, MAX_PURE_QUBITS};
use qzk_core::zkproto::{comm_cost, outcome_bits, run_protocol_exact, AdaptiveVerifier, CommParams, HonestProver, StaticVerifier};
use serde::Serialize;
use serde_json::json;

use super::{positive, power_of_two, rng, trial_seeds, Params};
use crate::error::CliError;
use crate::report::{Check, Report};

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub ell: Vec<usize>,
    pub b: Vec<usize>,
}

impl Settings {
    pub fn resolve(p: &Params) -> Result<Self, CliError> {
        let s = Self { ell: p.ell.clone().unwrap_or_else(|| vec![4, 8]), b: p.b.clone().unwrap_or_else(|| vec![1]) };
        for &ell in &s.ell {
            power_of_two("ell", ell)?;
            if ell < 2 {
                return Err(CliError::config("ell must be at least 2"));
            }
            for &b in &s.b {
                positive("b", b)?;
                if 3 * b > MAX_LAMBDA || (2 * ell - 1) * b > MAX_PURE_QUBITS {
                    return Err(CliError::config(format!("ell = {ell}, b = {b} exceeds the {MAX_PURE_QUBITS}-qubit register limit")));
                }
            }
        }
        Ok(s)
    }
}

pub fn run(s: &Settings, seed: u64) -> Result<Report, CliError> {
    let mut report = Report::new("comm-bound", serde_json::to_value(s).expect("settings serialize"));
    let mut cases: Vec<(String, StaticVerifier, usize, usize)> = Vec::new();
    for &ell in &s.ell {
        for &b in &s.b {
            if ell == 4 {
                cases.push(("toy-bell".into(), StaticVerifier::toy_bell(), ell, b));
            }
            cases.push(("single-z".into(), StaticVerifier::single_z(ell, ell - 1)?, ell, b));
            cases.push(("zero-round".into(), StaticVerifier::zero_round(ell), ell, b));
        }
    }
    let seeds = trial_seeds(seed, cases.len());
    report.seeds = seeds.clone();

    let (mut within, mut zero_ok, mut single_ok, mut bits_ok) = (true, true, true, true);
    let mut rows = Vec::new();
    for ((name, v, ell, b), &t) in cases.iter().zip(&seeds) {
        let layout = TreeLayout::new(*ell, *b)?;
        let lambda = layout.lambda();
        let mut oracle = OracleHandle::sample(lambda, t)?;
        let sigma = PureState::random(*ell, &mut rng(t))?;
        let run = run_protocol_exact(v, &sigma, layout, &mut HonestProver, &mut oracle)?;
        let params = CommParams { k: v.locality(), rounds: v.rounds(), ell: *ell, lambda };
        let (mut q_max, mut bits_max, mut bound) = (0, 0, 0);
        for br in run.branches.iter().filter(|br| !br.bottom) {
            let c = comm_cost(&br.transcript, params);
            within &= c.within_bound;
            q_max = q_max.max(c.qubits);
            bits_max = bits_max.max(c.bits);
            bound = c.bound;
            bits_ok &= c.bits == v.rounds() * outcome_bits(v.outcome_alphabet());
            match name.as_str() {
                "zero-round" => zero_ok &= c.qubits == lambda,
                "single-z" => single_ok &= c.qubits <= (2 * ell.trailing_zeros() as usize + 1) * *b + lambda,
                _ => {}
            }
        }
        rows.push(json!({
            "fixture": name, "ell": ell, "b": b, "lambda": lambda, "k": params.k, "rounds": params.rounds,
            "qubits": q_max, "bits": bits_max, "bound": bound, "acceptance": run.acceptance,
        }));
    }
    report.metric("transcripts", &rows);
    report.check(Check::holds("within-bound", within, cases.len() as f64, "qubits <= lambda (1 + rounds k 2 (log2 ell + 1))"));
    report.check(Check::holds("zero-round-qubits", zero_ok, 0.0, "first message only: lambda qubits"));
    report.check(Check::holds("single-round-qubits", single_ok, 0.0, "first message plus one path"));
    report.check(Check::holds("classical-bits", bits_ok, 0.0, "rounds * ceil(log2 m) bits"));
    Ok(report)
}
