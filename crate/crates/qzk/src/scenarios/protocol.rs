//! The committed protocol against the verifier run directly on the witness.

use qzk_core::haar::OracleHandle;
use qzk_core::merkle::TreeLayout;
use qzk_core::qsim::PureState;
use qzk_core::zkproto::{
    direct_acceptance, run_protocol_exact, run_protocol_sampled, EmptyProver, FlipProver, HonestProver, StaticVerifier,
};
use serde::Serialize;
use serde_json::json;

use super::{positive, rng, tolerance, trial_seeds, Params};
use crate::error::CliError;
use crate::report::{Check, Report};

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub ell: usize,
    pub b: usize,
    pub trials: usize,
    pub samples: usize,
    pub tolerance: f64,
}

impl Settings {
    pub fn resolve(p: &Params) -> Result<Self, CliError> {
        let ell = match p.ell.as_deref() {
            None | Some([4]) => 4,
            Some(other) => return Err(CliError::config(format!("the Bell fixture has ell = 4, got {other:?}"))),
        };
        let b = match p.b.as_deref() {
            None => 1,
            Some([b @ (1 | 2)]) => *b,
            Some(other) => return Err(CliError::config(format!("b must be a single value in 1..=2, got {other:?}"))),
        };
        Ok(Self {
            ell,
            b,
            trials: positive("trials", p.trials.unwrap_or(10))?,
            samples: positive("samples", p.samples.unwrap_or(200))?,
            tolerance: tolerance(p, 1e-9)?,
        })
    }
}

pub fn run(s: &Settings, seed: u64) -> Result<Report, CliError> {
    let mut report = Report::new("protocol-completeness", serde_json::to_value(s).expect("settings serialize"));
    let seeds = trial_seeds(seed, s.trials);
    report.seeds = seeds.clone();
    let v = StaticVerifier::toy_bell();
    let layout = TreeLayout::new(s.ell, s.b)?;
    let honest = StaticVerifier::toy_bell_witness();

    let (mut gap, mut honest_gap) = (0.0f64, 0.0f64);
    let mut queries_ok = true;
    let (mut z_max, mut bottom_min, mut empty_acc) = (0.0f64, 1.0f64, 0.0f64);
    let mut rows = Vec::new();
    let mut transcript = None;
    for &t in &seeds {
        let mut r = rng(t);
        let oracle = OracleHandle::sample(layout.lambda(), t)?;
        let random = PureState::random(s.ell, &mut r)?;
        let mut row = json!({ "oracle_seed": t });
        for (label, sigma) in [("honest", &honest), ("random", &random)] {
            let exact = run_protocol_exact(&v, sigma, layout, &mut HonestProver, &mut oracle.clone())?;
            let direct = direct_acceptance(&v, sigma)?;
            gap = gap.max((exact.acceptance - direct).abs());
            if label == "honest" {
                honest_gap = honest_gap.max((exact.acceptance - 1.0).abs());
                let rep = exact.representative().expect("at least one branch");
                queries_ok &= rep.transcript.oracle_queries_prover as usize == s.ell - 1;
                transcript.get_or_insert_with(|| rep.transcript.clone());
            } else {
                let mut o = oracle.clone();
                let hits = (0..s.samples)
                    .map(|_| run_protocol_sampled(&v, sigma, layout, &mut HonestProver, &mut o, &mut r).map(|x| x.accepted))
                    .collect::<Result<Vec<_>, _>>()?
                    .into_iter()
                    .filter(|&a| a)
                    .count();
                let freq = hits as f64 / s.samples as f64;
                let se = (exact.acceptance * (1.0 - exact.acceptance) / s.samples as f64).sqrt().max(1e-12);
                z_max = z_max.max((freq - exact.acceptance).abs() / se);
                row[label] = json!({ "exact": exact.acceptance, "direct": direct, "sampled": freq });
                continue;
            }
            row[label] = json!({ "exact": exact.acceptance, "direct": direct });
        }
        let flip = run_protocol_exact(&v, &honest, layout, &mut FlipProver { node: s.ell }, &mut oracle.clone())?;
        bottom_min = bottom_min.min(flip.bottom_probability);
        let single = StaticVerifier::single_z(s.ell, 0)?;
        let empty = run_protocol_exact(&single, &random, layout, &mut EmptyProver, &mut oracle.clone())?;
        empty_acc = empty_acc.max(empty.acceptance);
        row["flip_bottom"] = json!(flip.bottom_probability);
        row["empty_single_z"] = json!(empty.acceptance);
        rows.push(row);
    }
    report.metric("oracles", &rows);
    report.metric("transcript", &transcript);
    report.check(Check::at_most("exact-matches-direct", gap, s.tolerance));
    report.check(Check::at_most("honest-acceptance", honest_gap, s.tolerance));
    report.check(Check::holds("prover-commit-queries", queries_ok, (s.ell - 1) as f64, "ell - 1 queries per honest run"));
    report.check(Check::at_most("sampled-matches-exact", z_max, 3.0).exploratory());
    report.check(Check::at_least("flip-prover-bottom", bottom_min, 1e-6).exploratory());
    report.check(Check::at_most("empty-prover-acceptance", empty_acc, 1.0).exploratory());
    Ok(report)
}
