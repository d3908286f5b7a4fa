//! The vanilla encoded verifier: energy identity, term accounting and padding.

use qzk_core::encver::{
    build_encoded_hamiltonian, build_program, otp_witness, run_venc_ensemble, EncodedHamiltonian, Pad, VencHVerifier,
};
use qzk_core::fixtures;
use qzk_core::qsat::QsatInstance;
use qzk_core::qsim::PureState;
use qzk_core::steane::{CodeParams, MAX_NUMERIC_KAPPA};
use serde::Serialize;
use serde_json::json;

use super::{instances, positive, rng, tolerance, trial_seeds, Params};
use crate::error::CliError;
use crate::report::{Check, Report};

/// Parts in the ancilla partition of every encoded program.
pub const PARTS: usize = 5;

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub trials: usize,
    pub tolerance: f64,
    pub instances: Vec<String>,
    pub grid: Vec<(usize, usize)>,
    pub grid_n: usize,
    pub grid_m: usize,
    pub kappas: Vec<u32>,
    pub padding_m: Vec<usize>,
    #[serde(skip)]
    cases: Vec<QsatInstance>,
}

impl Settings {
    pub fn resolve(p: &Params) -> Result<Self, CliError> {
        let named = instances(
            p,
            vec![
                ("three-quarter(1,1,1)".into(), fixtures::three_quarter(1, 1, 1)?),
                ("contradictory(1,1,1)".into(), fixtures::contradictory(1, 1, 1)?),
            ],
        )?;
        let kappas = match p.kappa {
            None => vec![0, 1],
            Some(k) if k <= MAX_NUMERIC_KAPPA => vec![k],
            Some(k) => return Err(CliError::config(format!("kappa = {k} above the supported {MAX_NUMERIC_KAPPA}"))),
        };
        let padding_m = match p.m {
            Some(m) if p.n.is_none() => vec![positive("m", m)?],
            _ => vec![2, 3, 5, 6],
        };
        Ok(Self {
            trials: positive("trials", p.trials.unwrap_or(20))?,
            tolerance: tolerance(p, 1e-9)?,
            instances: named.iter().map(|(n, _)| n.clone()).collect(),
            grid: (1..=3).flat_map(|k| (1..=3).map(move |g| (k, g))).collect(),
            grid_n: 3,
            grid_m: 2,
            kappas,
            padding_m,
            cases: named.into_iter().map(|(_, i)| i).collect(),
        })
    }
}

fn vanilla(inst: &QsatInstance) -> Result<EncodedHamiltonian, CliError> {
    Ok(build_encoded_hamiltonian(&build_program(&inst.pad_to_power_of_two(), CodeParams::new(0))?))
}

/// Least squares for M ≈ a·k + b·γ + c; returns the coefficients and the residual norm.
pub fn fit_law(points: &[(usize, usize, usize)]) -> Option<([f64; 3], f64)> {
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for &(k, g, m) in points {
        let row = [k as f64, g as f64, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * m as f64;
        }
    }
    let x = solve3(ata, atb)?;
    let residual = points
        .iter()
        .map(|&(k, g, m)| (x[0] * k as f64 + x[1] * g as f64 + x[2] - m as f64).powi(2))
        .sum::<f64>()
        .sqrt();
    Some((x, residual))
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..3 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for j in col..3 {
                    a[row][j] -= f * a[col][j];
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some([b[0] / a[0][0], b[1] / a[1][1], b[2] / a[2][2]])
}

pub fn run(s: &Settings, seed: u64) -> Result<Report, CliError> {
    let mut report = Report::new("venc-vanilla", serde_json::to_value(s).expect("settings serialize"));
    let seeds = trial_seeds(seed, s.trials);
    report.seeds = seeds.clone();

    // energy identity, spread over the instances
    let hams: Vec<EncodedHamiltonian> = s.cases.iter().map(vanilla).collect::<Result<_, _>>()?;
    let verifiers: Vec<VencHVerifier> = hams.iter().map(VencHVerifier::new).collect::<Result<_, _>>()?;
    let mut gap = 0.0f64;
    let mut rows = Vec::new();
    for (i, &t) in seeds.iter().enumerate() {
        let c = i % hams.len();
        let (h, v) = (&hams[c], &verifiers[c]);
        let psi = PureState::random(h.total_qubits(), &mut rng(t))?;
        let rej = v.rejection_probability(&psi)?;
        let e = h.energy(&psi)? / h.num_terms() as f64;
        gap = gap.max((rej - e).abs());
        rows.push(json!({ "instance": s.instances[c], "rejection": rej, "energy_over_m": e }));
    }
    report.metric("energy_identity", &rows);
    report.check(Check::at_most("energy-identity", gap, s.tolerance));

    let mut honest_gap = 0.0f64;
    let mut summaries = Vec::new();
    for (name, h) in s.instances.iter().zip(&hams) {
        let p = h.program();
        let vm = p.instance().val_max()?;
        let ens = otp_witness(p.params(), &vm.maximizer, &Pad::Uniform)?;
        honest_gap = honest_gap.max((run_venc_ensemble(p, &ens)? - vm.value).abs());
        summaries.push(json!({ "instance": name, "program": p.summary(), "hamiltonian": h.summary() }));
    }
    report.metric("programs", &summaries);
    report.check(Check::at_most("honest-acceptance-is-value", honest_gap, s.tolerance));

    // term accounting over the (k, γ) grid
    let mut count_ok = true;
    let mut law_ok = true;
    let mut worst_residual = 0.0f64;
    let mut laws = Vec::new();
    for &kappa in &s.kappas {
        let mut points = Vec::new();
        for &(k, g) in &s.grid {
            let inst = fixtures::mixed(s.grid_n, s.grid_m, k, g)?.pad_to_power_of_two();
            let h = build_encoded_hamiltonian(&build_program(&inst, CodeParams::new(kappa))?);
            let parts = h.hamiltonian().sequence().partition().len();
            count_ok &= parts == PARTS && h.num_terms() == 2 * h.program().len() + parts + 1;
            law_ok &= h.count_law().eval(k, g) == h.num_terms();
            points.push((k, g, h.num_terms()));
        }
        let (coef, residual) = fit_law(&points).ok_or_else(|| CliError::config("the (k, gamma) grid is degenerate"))?;
        let integral = coef.iter().all(|c| (c - c.round()).abs() < 1e-9);
        law_ok &= integral;
        worst_residual = worst_residual.max(residual);
        laws.push(json!({ "kappa": kappa, "points": points, "a": coef[0], "b": coef[1], "c": coef[2], "residual": residual }));
    }
    report.metric("term_law", &laws);
    report.check(Check::holds("term-count", count_ok, PARTS as f64, "M = 2T + B + 1 with B = 5"));
    report.check(Check::holds("term-law-integer", law_ok, 0.0, "integer a, b, c matching every grid point"));
    report.check(Check::at_most("term-law-residual", worst_residual, 1e-9));

    // padding
    let mut pad_gap = 0.0f64;
    let mut pads = Vec::new();
    for &m in &s.padding_m {
        let inst = fixtures::mixed(2, m, 1, 1)?;
        let padded = inst.pad_to_power_of_two();
        let m2 = padded.m();
        let v = inst.val_max()?.value;
        let vp = padded.val_max()?.value;
        let want = (m2 - m) as f64 / m2 as f64 + m as f64 / m2 as f64 * v;
        pad_gap = pad_gap.max((vp - want).abs());
        pads.push(json!({ "m": m, "padded_m": m2, "val": v, "padded_val": vp, "predicted": want }));
    }
    report.metric("padding", &pads);
    report.check(Check::at_most("padding-identity", pad_gap, s.tolerance));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_law_is_recovered() {
        let pts: Vec<_> = (1..=3).flat_map(|k| (1..=3).map(move |g| (k, g, 4 * k + 7 * g + 2))).collect();
        let (x, res) = fit_law(&pts).unwrap();
        assert!((x[0] - 4.0).abs() < 1e-9 && (x[1] - 7.0).abs() < 1e-9 && (x[2] - 2.0).abs() < 1e-9);
        assert!(res < 1e-9);
        assert!(fit_law(&[(1, 1, 3), (2, 2, 5)]).is_none());
    }
}
