//! Partial transversal gates against the static simulator, and simulated term views.

use std::collections::BTreeMap;

use qzk_core::encver::{build_encoded_hamiltonian, build_program, ViewCase, ViewSimulator};
use qzk_core::fixtures;
use qzk_core::qsat::QsatInstance;
use qzk_core::qsim::{trace_distance, MixedState, PureState};
use qzk_core::steane::{
    encode_bits, encode_qubit, magic_amplitudes, sim_marginal, sim_marginal_blocks, transversal_sequence, CodeParams, LogicalGate,
    SteaneError,
};
use qzk_core::C64;
use serde::Serialize;
use serde_json::json;

use super::{positive, rng, tolerance, trial_seeds, Params};
use crate::error::CliError;
use crate::report::{Check, Report};

pub const GATES: [LogicalGate; 4] = [LogicalGate::H, LogicalGate::P, LogicalGate::Cnot, LogicalGate::T];

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub kappa: u32,
    pub trials: usize,
    pub tolerance: f64,
    pub per_block: usize,
    pub composition_blocks: usize,
    pub view_instances: Vec<String>,
}

impl Settings {
    pub fn resolve(p: &Params) -> Result<Self, CliError> {
        match p.kappa {
            None | Some(1) => {}
            Some(k) => return Err(CliError::config(format!("the audit runs at kappa = 1, got {k}"))),
        }
        let params = CodeParams::new(1);
        Ok(Self {
            kappa: 1,
            trials: positive("trials", p.trials.unwrap_or(50))?,
            tolerance: tolerance(p, 1e-9)?,
            per_block: params.step_s_max,
            composition_blocks: 2,
            view_instances: view_cases()?.into_iter().map(|(n, _)| n).collect(),
        })
    }
}

fn view_cases() -> Result<Vec<(String, QsatInstance)>, CliError> {
    Ok(vec![
        ("contradictory(1,1,1)".into(), fixtures::contradictory(1, 1, 1)?),
        ("three-quarter(1,1,1)".into(), fixtures::three_quarter(1, 1, 1)?),
        ("with-t(1,1,1)".into(), fixtures::with_t(1, 1, 1)?),
        ("copy-checks(1,2,1,1)".into(), fixtures::copy_checks(1, 2, 1, 1)?),
    ])
}

/// Subsets of `blocks` blocks of `n` qubits with at most `limit` per block, ascending, nonempty.
pub fn subsets(blocks: usize, n: usize, limit: usize) -> Vec<Vec<usize>> {
    let per_block: Vec<usize> = (0..1usize << n).filter(|m| m.count_ones() as usize <= limit).collect();
    let mut out: Vec<Vec<usize>> = vec![Vec::new()];
    for b in 0..blocks {
        out = out
            .into_iter()
            .flat_map(|s| {
                per_block.iter().map(move |&mask| {
                    let mut t = s.clone();
                    t.extend((0..n).filter(|q| mask >> q & 1 == 1).map(|q| b * n + q));
                    t
                })
            })
            .collect();
    }
    out.retain(|s| !s.is_empty());
    out
}

/// Enc of a random logical state on `arity` qubits, magic blocks appended.
fn random_input(params: &CodeParams, arity: usize, magic: usize, basis: &[PureState], seed: u64) -> Result<PureState, CliError> {
    let logical = PureState::random(arity, &mut rng(seed))?;
    let dim = basis[0].amplitudes().len();
    let mut amps = vec![C64::new(0.0, 0.0); dim];
    for (c, b) in logical.amplitudes().iter().zip(basis) {
        for (a, x) in amps.iter_mut().zip(b.amplitudes()) {
            *a += c * x;
        }
    }
    let mut st = PureState::from_amplitudes(amps)?;
    for _ in 0..magic {
        st = st.tensor(&encode_qubit(params, magic_amplitudes())?)?;
    }
    Ok(st)
}

fn codeword_basis(params: &CodeParams, arity: usize) -> Result<Vec<PureState>, CliError> {
    (0..1usize << arity)
        .map(|x| {
            let bits: Vec<bool> = (0..arity).map(|j| x >> (arity - 1 - j) & 1 == 1).collect();
            Ok(encode_bits(params, &bits)?)
        })
        .collect()
}

struct GateAudit {
    subsets: usize,
    steps: usize,
    non_simulable: usize,
    sim_deviation: f64,
    brute_deviation: f64,
}

fn audit_gate(gate: LogicalGate, params: &CodeParams, seeds: &[u64]) -> Result<GateAudit, CliError> {
    let tg = transversal_sequence(gate, params);
    let blocks = gate.arity() + gate.magic_arity();
    let basis = codeword_basis(params, gate.arity())?;
    let mut states: Vec<PureState> =
        seeds.iter().map(|&s| random_input(params, gate.arity(), gate.magic_arity(), &basis, s)).collect::<Result<_, _>>()?;
    let mut audit = GateAudit { subsets: 0, steps: tg.sequence.len() + 1, non_simulable: 0, sim_deviation: 0.0, brute_deviation: 0.0 };
    for t in 0..=tg.sequence.len() {
        if t > 0 {
            for st in &mut states {
                st.apply_gate_mut(&tg.sequence.gates[t - 1])?;
            }
        }
        let limit = if t == 0 { params.s_max } else { params.step_s_max };
        let all = subsets(blocks, params.n, limit);
        audit.subsets += all.len();
        let mut sims: BTreeMap<Vec<usize>, MixedState> = BTreeMap::new();
        for s in &all {
            match sim_marginal(gate, t, s, params) {
                Ok(m) => {
                    sims.insert(s.clone(), m);
                }
                Err(SteaneError::NonSimulable { deviation, .. }) => {
                    audit.non_simulable += 1;
                    audit.sim_deviation = audit.sim_deviation.max(deviation);
                }
                Err(e) => return Err(e.into()),
            }
        }
        // brute force on the largest subsets; smaller ones are their partial traces
        let widest = all.iter().map(Vec::len).max().unwrap_or(0);
        let maximal: Vec<&Vec<usize>> = all.iter().filter(|s| s.len() == widest).collect();
        for st in &states {
            for s in &maximal {
                let rho = st.reduced(s)?;
                for mask in 1..1usize << s.len() {
                    let sub: Vec<usize> = (0..s.len()).filter(|i| mask >> (s.len() - 1 - i) & 1 == 1).collect();
                    let key: Vec<usize> = sub.iter().map(|&i| s[i]).collect();
                    let Some(sim) = sims.get(&key) else { continue };
                    let part = if sub.len() == s.len() { rho.clone() } else { rho.reduce_ordered(&sub)? };
                    audit.brute_deviation = audit.brute_deviation.max(part.matrix().max_abs_diff(sim.matrix()));
                }
            }
        }
    }
    Ok(audit)
}

/// Enc(σ) on two blocks against the product of per-block static marginals, before and after
/// a full transversal H or P on both blocks.
fn composition(params: &CodeParams, blocks: usize, seeds: &[u64]) -> Result<f64, CliError> {
    let basis = codeword_basis(params, blocks)?;
    let all = subsets(blocks, params.n, params.s_max);
    let sims: Vec<MixedState> = all.iter().map(|s| sim_marginal_blocks(blocks, s, params)).collect::<Result<_, _>>()?;
    let mut worst = 0.0f64;
    for (i, &seed) in seeds.iter().enumerate() {
        let mut st = random_input(params, blocks, 0, &basis, seed)?;
        let gate = [None, Some(LogicalGate::H), Some(LogicalGate::P)][i % 3];
        if let Some(g) = gate {
            let seq = transversal_sequence(g, params).sequence;
            for b in 0..blocks {
                seq.shifted(b * params.n, blocks * params.n).apply(&mut st)?;
            }
        }
        for (s, sim) in all.iter().zip(&sims) {
            worst = worst.max(st.reduced(s)?.matrix().max_abs_diff(sim.matrix()));
        }
    }
    Ok(worst)
}

struct ViewAudit {
    views: usize,
    slack_excess: f64,
    exact_worst: f64,
}

fn audit_views(inst: &QsatInstance) -> Result<(ViewAudit, f64), CliError> {
    let h = build_encoded_hamiltonian(&build_program(&inst.pad_to_power_of_two(), CodeParams::new(0))?);
    let sim = ViewSimulator::new(&h)?;
    let val = sim.val();
    let exact_everywhere = val > 1.0 - 1e-12;
    let mut a = ViewAudit { views: 0, slack_excess: f64::NEG_INFINITY, exact_worst: 0.0 };
    for idx in 0..h.num_terms() {
        let branches: Vec<Option<usize>> =
            if h.is_indexed(idx) { (0..h.program().instance().m()).map(Some).collect() } else { vec![None] };
        for br in branches {
            let view = sim.view(idx, br)?;
            let full = sim.full_view(&view.support)?;
            let d = trace_distance(&view.state, &full)?;
            a.views += 1;
            a.slack_excess = a.slack_excess.max(d - (1.0 - val));
            if exact_everywhere || view.case == ViewCase::BeforeWitness {
                a.exact_worst = a.exact_worst.max(d);
            }
        }
    }
    Ok((a, val))
}

pub fn run(s: &Settings, seed: u64) -> Result<Report, CliError> {
    let mut report = Report::new("simulability-audit", serde_json::to_value(s).expect("settings serialize"));
    let params = CodeParams::new(s.kappa);
    let seeds = trial_seeds(seed, s.trials * (GATES.len() + 1));
    report.seeds = seeds.clone();

    let (mut sim_dev, mut brute_dev, mut bad) = (0.0f64, 0.0f64, 0usize);
    let mut rows = Vec::new();
    for (i, &g) in GATES.iter().enumerate() {
        let a = audit_gate(g, &params, &seeds[i * s.trials..(i + 1) * s.trials])?;
        sim_dev = sim_dev.max(a.sim_deviation);
        brute_dev = brute_dev.max(a.brute_deviation);
        bad += a.non_simulable;
        rows.push(json!({
            "gate": g, "steps": a.steps, "subsets_checked": a.subsets, "non_simulable": a.non_simulable,
            "spanning_deviation": a.sim_deviation, "max_brute_force_difference": a.brute_deviation,
        }));
    }
    report.metric("gates", &rows);
    report.check(Check::holds("sim-marginal-defined", bad == 0, bad as f64, "no sigma-dependent marginal"));
    report.check(Check::at_most("sim-marginal-spanning", sim_dev, s.tolerance));
    report.check(Check::at_most("sim-marginal-brute-force", brute_dev, s.tolerance));

    let comp = composition(&params, s.composition_blocks, &seeds[GATES.len() * s.trials..])?;
    report.metric("composition_max_difference", comp);
    report.check(Check::at_most("tensor-composition", comp, s.tolerance));

    let (mut excess, mut exact) = (f64::NEG_INFINITY, 0.0f64);
    let mut views = Vec::new();
    for (name, inst) in view_cases()? {
        let (a, val) = audit_views(&inst)?;
        excess = excess.max(a.slack_excess);
        exact = exact.max(a.exact_worst);
        views.push(json!({ "instance": name, "val": val, "views": a.views, "max_excess_over_slack": a.slack_excess, "max_exact_case_distance": a.exact_worst }));
    }
    report.metric("views", &views);
    report.check(Check::at_most("view-within-slack", excess, s.tolerance));
    report.check(Check::at_most("view-exact-cases", exact, s.tolerance));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_counts() {
        assert_eq!(subsets(1, 7, 2).len(), 28);
        assert_eq!(subsets(2, 7, 2).len(), 29 * 29 - 1);
        assert_eq!(subsets(2, 7, 1).len(), 63);
        assert!(subsets(2, 3, 2).iter().all(|s| s.windows(2).all(|w| w[0] < w[1])));
    }
}
