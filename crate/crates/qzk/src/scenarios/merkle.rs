//! Commit then open every leaf over random rounds; Haar sampler moments.

use std::collections::BTreeSet;

use qzk_core::haar::{haar_unitary, OracleHandle, MAX_LAMBDA};
use qzk_core::linalg::Matrix;
use qzk_core::merkle::{commit, decommit_exact, TreeLayout};
use qzk_core::qsim::{trace_distance, PureState, MAX_PURE_QUBITS};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;
use serde_json::json;

use super::{positive, power_of_two, rng, tolerance, trial_seeds, Params};
use crate::error::CliError;
use crate::report::{Check, Report};

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub ell: Vec<usize>,
    pub b: Vec<usize>,
    pub trials: usize,
    pub tolerance: f64,
    pub lambda: Vec<usize>,
    pub samples: usize,
}

impl Settings {
    pub fn resolve(p: &Params) -> Result<Self, CliError> {
        let s = Self {
            ell: p.ell.clone().unwrap_or_else(|| vec![2, 4]),
            b: p.b.clone().unwrap_or_else(|| vec![1, 2]),
            trials: positive("trials", p.trials.unwrap_or(50))?,
            tolerance: tolerance(p, 1e-9)?,
            lambda: p.lambda.clone().unwrap_or_else(|| vec![1, 2, 3]),
            samples: positive("samples", p.samples.unwrap_or(10_000))?,
        };
        for &ell in &s.ell {
            power_of_two("ell", ell)?;
            if ell < 2 {
                return Err(CliError::config("ell must be at least 2"));
            }
            for &b in &s.b {
                positive("b", b)?;
                if 3 * b > MAX_LAMBDA {
                    return Err(CliError::config(format!("b = {b} needs a {}-qubit oracle, limit {MAX_LAMBDA}", 3 * b)));
                }
                if (2 * ell - 1) * b > MAX_PURE_QUBITS {
                    return Err(CliError::config(format!(
                        "ell = {ell}, b = {b} needs {} qubits, limit {MAX_PURE_QUBITS}",
                        (2 * ell - 1) * b
                    )));
                }
            }
        }
        for &l in &s.lambda {
            if !(1..=MAX_LAMBDA).contains(&l) {
                return Err(CliError::config(format!("lambda = {l} outside 1..={MAX_LAMBDA}")));
            }
        }
        Ok(s)
    }
}

struct Roundtrip {
    distance: f64,
    syndrome: f64,
    commit_queries: u64,
    open_queries: u64,
    rounds: usize,
}

fn roundtrip(ell: usize, b: usize, seed: u64) -> Result<Roundtrip, CliError> {
    let mut r = rng(seed);
    let layout = TreeLayout::new(ell, b)?;
    let sigma = PureState::random(ell, &mut r)?;
    let mut oracle = OracleHandle::sample(layout.lambda(), r.random())?;
    let mut regs = commit(&sigma, layout, &mut oracle)?;
    let commit_queries = oracle.queries();
    regs.send(&(1..=layout.num_nodes()).collect())?;

    let mut leaves: Vec<usize> = (ell..2 * ell).collect();
    leaves.shuffle(&mut r);
    let mut opened = BTreeSet::new();
    let mut syndrome = 0.0f64;
    let mut rounds = 0;
    let mut rest = leaves.as_slice();
    while !rest.is_empty() {
        let take = r.random_range(1..=rest.len());
        let new: BTreeSet<usize> = rest[..take].iter().copied().collect();
        rest = &rest[take..];
        let e = decommit_exact(&regs, &opened, &new, &mut oracle)?;
        for (_, p) in &e.node_zero_probabilities {
            syndrome = syndrome.max((p - 1.0).abs());
        }
        let Some(next) = e.registers else {
            return Ok(Roundtrip { distance: 1.0, syndrome: 1.0, commit_queries, open_queries: oracle.queries() - commit_queries, rounds });
        };
        regs = next;
        opened.extend(new);
        rounds += 1;
    }
    let order: Vec<usize> = (ell..2 * ell).collect();
    let got = regs.state().reduced(&regs.leaf_qubits(&order))?;
    let distance = trace_distance(&got, &sigma.to_mixed()?)?;
    Ok(Roundtrip { distance, syndrome, commit_queries, open_queries: oracle.queries() - commit_queries, rounds })
}

struct Moment {
    unitarity: f64,
    mean: f64,
    standard_error: f64,
}

fn haar_moment(lambda: usize, samples: usize, seed: u64) -> Moment {
    let mut r = rng(seed);
    let d = 1usize << lambda;
    let id = Matrix::identity(d);
    let mut unitarity = 0.0f64;
    let xs: Vec<f64> = (0..samples)
        .map(|_| {
            let u = haar_unitary(d, &mut r);
            unitarity = unitarity.max(u.adjoint().matmul(&u).max_abs_diff(&id));
            u[(0, 0)].norm_sqr()
        })
        .collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Moment { unitarity, mean, standard_error: (var / n).sqrt() }
}

pub fn run(s: &Settings, seed: u64) -> Result<Report, CliError> {
    let mut report = Report::new("merkle-roundtrip", serde_json::to_value(s).expect("settings serialize"));
    let configs: Vec<(usize, usize)> = s.ell.iter().flat_map(|&l| s.b.iter().map(move |&b| (l, b))).collect();
    let seeds = trial_seeds(seed, configs.len() * s.trials + s.lambda.len());
    report.seeds = seeds.clone();

    let (mut worst_d, mut worst_p) = (0.0f64, 0.0f64);
    let mut queries_ok = true;
    let mut per_config = Vec::new();
    for (ci, &(ell, b)) in configs.iter().enumerate() {
        let (mut d_max, mut p_max, mut rounds) = (0.0f64, 0.0f64, 0usize);
        for t in 0..s.trials {
            let rt = roundtrip(ell, b, seeds[ci * s.trials + t])?;
            d_max = d_max.max(rt.distance);
            p_max = p_max.max(rt.syndrome);
            rounds += rt.rounds;
            queries_ok &= rt.commit_queries as usize == ell - 1 && rt.open_queries as usize == ell - 1;
        }
        per_config.push(json!({
            "ell": ell, "b": b, "trials": s.trials,
            "max_trace_distance": d_max, "max_syndrome_deviation": p_max,
            "mean_rounds": rounds as f64 / s.trials as f64,
        }));
        worst_d = worst_d.max(d_max);
        worst_p = worst_p.max(p_max);
    }
    report.metric("roundtrip", &per_config);
    report.check(Check::at_most("roundtrip-trace-distance", worst_d, s.tolerance));
    report.check(Check::at_most("syndrome-zero-probability", worst_p, s.tolerance));
    report.check(Check::holds("oracle-queries", queries_ok, configs.len() as f64, "ell - 1 to commit and ell - 1 to open"));

    let base = configs.len() * s.trials;
    let mut moments = Vec::new();
    for (i, &lambda) in s.lambda.iter().enumerate() {
        let m = haar_moment(lambda, s.samples, seeds[base + i]);
        let expected = 1.0 / (1usize << lambda) as f64;
        let z = (m.mean - expected).abs() / m.standard_error;
        moments.push(json!({
            "lambda": lambda, "samples": s.samples, "mean_u00_sq": m.mean, "expected": expected,
            "standard_error": m.standard_error, "z": z, "max_unitarity_error": m.unitarity,
        }));
        report.check(Check::at_most(format!("haar-unitarity-{lambda}"), m.unitarity, 1e-12));
        report.check(Check::at_most(format!("haar-moment-{lambda}"), z, 3.0));
    }
    report.metric("haar", &moments);
    Ok(report)
}
