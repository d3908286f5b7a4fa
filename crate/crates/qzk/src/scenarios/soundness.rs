//! Dishonest provers and the measured soundness constant. Nothing here is asserted.

use qzk_core::encver::reduce_localqma;
use qzk_core::fixtures;
use qzk_core::haar::OracleHandle;
use qzk_core::merkle::TreeLayout;
use qzk_core::qsim::PureState;
use qzk_core::steane::CodeParams;
use qzk_core::zkproto::{direct_acceptance, run_protocol_exact, EmptyProver, FlipProver, HonestProver, StaticVerifier};
use serde::Serialize;
use serde_json::json;

use super::{positive, rng, trial_seeds, Params};
use crate::error::CliError;
use crate::report::{Check, Report};

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub trials: usize,
    pub ell: usize,
    pub b: usize,
}

impl Settings {
    pub fn resolve(p: &Params) -> Result<Self, CliError> {
        if p.ell.as_deref().is_some_and(|e| e != [4]) {
            return Err(CliError::config("the Bell fixture has ell = 4"));
        }
        Ok(Self { trials: positive("trials", p.trials.unwrap_or(5))?, ell: 4, b: 1 })
    }
}

pub fn run(s: &Settings, seed: u64) -> Result<Report, CliError> {
    let mut report = Report::new("soundness-probe", serde_json::to_value(s).expect("settings serialize"));
    let seeds = trial_seeds(seed, s.trials);
    report.seeds = seeds.clone();
    let v = StaticVerifier::toy_bell();
    let layout = TreeLayout::new(s.ell, s.b)?;
    let honest = StaticVerifier::toy_bell_witness();

    let mut rows = Vec::new();
    let (mut gap_max, mut flip_min) = (0.0f64, 1.0f64);
    for &t in &seeds {
        let oracle = OracleHandle::sample(layout.lambda(), t)?;
        let sigma = PureState::random(s.ell, &mut rng(t))?;
        let honest_acc = run_protocol_exact(&v, &honest, layout, &mut HonestProver, &mut oracle.clone())?.acceptance;
        let empty = run_protocol_exact(&v, &sigma, layout, &mut EmptyProver, &mut oracle.clone())?;
        let zero_direct = direct_acceptance(&v, &PureState::zero(s.ell)?)?;
        let flips: Vec<f64> = (1..2 * s.ell)
            .map(|node| run_protocol_exact(&v, &honest, layout, &mut FlipProver { node }, &mut oracle.clone()).map(|r| r.acceptance))
            .collect::<Result<_, _>>()?;
        gap_max = gap_max.max(honest_acc - empty.acceptance);
        flip_min = flip_min.min(flips.iter().copied().fold(1.0, f64::min));
        rows.push(json!({
            "oracle_seed": t, "honest": honest_acc, "empty": empty.acceptance, "empty_bottom": empty.bottom_probability,
            "zero_witness_direct": zero_direct, "flip_by_node": flips,
        }));
    }
    report.metric("provers", &rows);
    report.check(Check::at_least("honest-minus-empty", gap_max, 0.0).exploratory());
    report.check(Check::at_most("flip-acceptance-min", flip_min, 1.0).exploratory());

    let mut constants = Vec::new();
    for (name, inst) in [
        ("contradictory(1,1,1)", fixtures::contradictory(1, 1, 1)?),
        ("contradictory(2,1,1)", fixtures::contradictory(2, 1, 1)?),
        ("three-quarter(1,1,1)", fixtures::three_quarter(1, 1, 1)?),
        ("with-t(1,1,1)", fixtures::with_t(1, 1, 1)?),
    ] {
        let red = reduce_localqma(&inst, CodeParams::new(0))?;
        let sp = red.spectrum.expect("kappa 0 computes the spectrum");
        constants.push(json!({ "instance": name, "val": red.val, "lambda_min": sp.lambda_min, "constant": sp.constant, "steps": red.program.len() }));
    }
    report.metric("soundness_constants", &constants);
    Ok(report)
}
