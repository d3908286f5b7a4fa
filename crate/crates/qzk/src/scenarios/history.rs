//! History states of random sequences, and the ground energy of encoded instances.

use qzk_core::clockham::{build_history_hamiltonian, energy, history_state, history_subspace_distance, min_eigenvalue};
use qzk_core::encver::{out_normalization, reduce_localqma};
use qzk_core::fixtures;
use qzk_core::qsim::PureState;
use qzk_core::steane::CodeParams;
use serde::Serialize;
use serde_json::json;

use super::{instances, positive, rng, trial_seeds, Params};
use crate::error::CliError;
use crate::report::{Check, Report};

pub const MAX_STEPS: usize = 6;
pub const MAX_QUBITS: usize = 6;

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub trials: usize,
    pub max_steps: usize,
    pub max_qubits: usize,
    pub energy_tolerance: f64,
    pub distance_tolerance: f64,
    pub spectrum_tolerance: f64,
    pub instances: Vec<String>,
    #[serde(skip)]
    cases: Vec<qzk_core::qsat::QsatInstance>,
}

fn default_instances() -> Result<Vec<(String, qzk_core::qsat::QsatInstance)>, CliError> {
    Ok(vec![
        ("all-accept(1,2,1,1)".into(), fixtures::all_accept(1, 2, 1, 1)?),
        ("all-accept(2,2,1,1)".into(), fixtures::all_accept(2, 2, 1, 1)?),
        ("copy-checks(1,2,1,1)".into(), fixtures::copy_checks(1, 2, 1, 1)?),
        ("copy-checks(2,2,1,1)".into(), fixtures::copy_checks(2, 2, 1, 1)?),
        ("contradictory(1,1,1)".into(), fixtures::contradictory(1, 1, 1)?),
        ("three-quarter(1,1,1)".into(), fixtures::three_quarter(1, 1, 1)?),
        ("three-quarter(2,1,1)".into(), fixtures::three_quarter(2, 1, 1)?),
        ("with-t(1,1,1)".into(), fixtures::with_t(1, 1, 1)?),
    ])
}

impl Settings {
    pub fn resolve(p: &Params) -> Result<Self, CliError> {
        let named = instances(p, default_instances()?)?;
        if let Some(k) = p.kappa.filter(|&k| k != 0) {
            return Err(CliError::config(format!("the spectrum is computed at kappa = 0 only, got {k}")));
        }
        let tol = super::tolerance(p, 1e-10)?;
        Ok(Self {
            trials: positive("trials", p.trials.unwrap_or(20))?,
            max_steps: MAX_STEPS,
            max_qubits: MAX_QUBITS,
            energy_tolerance: tol,
            distance_tolerance: 1e-8,
            spectrum_tolerance: 1e-8,
            instances: named.iter().map(|(n, _)| n.clone()).collect(),
            cases: named.into_iter().map(|(_, i)| i).collect(),
        })
    }
}

pub fn run(s: &Settings, seed: u64) -> Result<Report, CliError> {
    let mut report = Report::new("history-energy", serde_json::to_value(s).expect("settings serialize"));
    let seeds = trial_seeds(seed, s.trials + s.cases.len());
    report.seeds = seeds.clone();

    let (mut e_max, mut d_max, mut g_max, mut trend) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut rows = Vec::new();
    for &t in &seeds[..s.trials] {
        let mut r = rng(t);
        let seq = fixtures::random_sequence(s.max_steps, s.max_qubits, &mut r)?;
        let h = build_history_hamiltonian(&seq);
        let phi = PureState::random(seq.n1(), &mut r)?;
        let psi = history_state(&seq, &phi)?;
        let e = energy(&h, &psi)?;
        let d = history_subspace_distance(&seq, &psi)?;
        let gs = min_eigenvalue(&h, 1e-12)?;
        let ground = PureState::normalized(gs.vector)?;
        let gd = history_subspace_distance(&seq, &ground)?;
        let delta = energy(&h, &ground)?.max(0.0);
        if delta > 0.0 {
            trend = trend.max(gd / delta.sqrt());
        }
        e_max = e_max.max(e.abs());
        d_max = d_max.max(d);
        g_max = g_max.max(gd);
        rows.push(json!({
            "steps": seq.len(), "witness_qubits": seq.n1(), "ancilla_qubits": seq.n2(), "parts": seq.partition().len(),
            "terms": h.terms().len(), "history_energy": e, "history_distance": d,
            "ground_energy": gs.energy, "ground_residual": gs.residual, "ground_distance": gd,
        }));
    }
    report.metric("sequences", &rows);
    report.check(Check::at_most("history-state-energy", e_max, s.energy_tolerance));
    report.check(Check::at_most("history-subspace-distance", d_max, s.distance_tolerance));
    report.check(Check::at_most("ground-vector-distance", g_max, s.distance_tolerance).exploratory());
    report.metric("distance_over_sqrt_energy", trend);

    let mut gap = f64::NEG_INFINITY;
    let mut accept_max = 0.0f64;
    let mut constants = Vec::new();
    let mut spectra = Vec::new();
    for ((name, inst), &t) in s.instances.iter().zip(&s.cases).zip(&seeds[s.trials..]) {
        let red = reduce_localqma(inst, CodeParams::new(0))?;
        let val = red.val.expect("kappa 0 computes the value");
        let sp = red.spectrum.expect("kappa 0 computes the spectrum");
        gap = gap.max(sp.lambda_min - (1.0 - val));
        if val > 1.0 - 1e-12 {
            accept_max = accept_max.max(sp.lambda_min.abs());
        }
        if let Some(c) = sp.constant {
            constants.push(c);
        }
        let w = PureState::random(red.program.layout().witness_qubits(), &mut rng(t))?;
        let norm = if val < 1.0 - 1e-9 { Some(out_normalization(&red.hamiltonian, &w)? * (red.program.len() + 1) as f64) } else { None };
        spectra.push(json!({
            "instance": name, "val": val, "terms": red.num_terms, "steps": red.program.len(),
            "qubits": red.hamiltonian.total_qubits(), "spectrum": sp, "out_weight_times_t_plus_one": norm,
        }));
    }
    report.metric("encoded", &spectra);
    report.check(Check::at_most("lambda-min-below-rejection", gap, s.spectrum_tolerance));
    report.check(Check::at_most("all-accept-lambda-min", accept_max, s.spectrum_tolerance));
    let c_max = constants.iter().copied().fold(0.0, f64::max);
    report.metric("soundness_constant_max", c_max);
    report.check(Check::at_least("soundness-constant-measured", constants.len() as f64, 1.0).exploratory());
    Ok(report)
}
