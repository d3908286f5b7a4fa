//! Scenario runner: one experiment per scenario name, each producing a [`Report`].

use std::path::PathBuf;
use std::time::Instant;

use qzk_core::fixtures;
use qzk_core::qsat::QsatInstance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::instance::load_instance;
use crate::report::Report;

pub mod comm;
pub mod cross;
pub mod history;
pub mod merkle;
pub mod protocol;
pub mod simulability;
pub mod soundness;
pub mod venc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    MerkleRoundtrip,
    ProtocolCompleteness,
    HistoryEnergy,
    VencVanilla,
    SimulabilityAudit,
    CrossTerm,
    CommBound,
    SoundnessProbe,
}

impl Scenario {
    pub const ALL: [Scenario; 8] = [
        Scenario::MerkleRoundtrip,
        Scenario::ProtocolCompleteness,
        Scenario::HistoryEnergy,
        Scenario::VencVanilla,
        Scenario::SimulabilityAudit,
        Scenario::CrossTerm,
        Scenario::CommBound,
        Scenario::SoundnessProbe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::MerkleRoundtrip => "merkle-roundtrip",
            Scenario::ProtocolCompleteness => "protocol-completeness",
            Scenario::HistoryEnergy => "history-energy",
            Scenario::VencVanilla => "venc-vanilla",
            Scenario::SimulabilityAudit => "simulability-audit",
            Scenario::CrossTerm => "cross-term",
            Scenario::CommBound => "comm-bound",
            Scenario::SoundnessProbe => "soundness-probe",
        }
    }
}

/// Tunable parameters; each scenario reads the ones it understands and fills in defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Params {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance: Option<PathBuf>,
}

impl Params {
    /// Fields set in `over` replace those in `self`.
    pub fn merged(&self, over: &Params) -> Params {
        macro_rules! pick {
            ($($f:ident),*) => { Params { $($f: over.$f.clone().or_else(|| self.$f.clone())),* } };
        }
        pick!(ell, b, kappa, n, m, k, gamma, lambda, trials, samples, tolerance, instance)
    }
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct ConfigFile {
    pub scenario: Option<Scenario>,
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub params: Params,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub params: Params,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        Self { scenario, seed, params: Params::default() }
    }

    pub fn with(mut self, params: Params) -> Self {
        self.params = params;
        self
    }
}

pub const DEFAULT_SEED: u64 = 2024;

/// `count` seeds drawn from the master seed.
pub fn trial_seeds(seed: u64, count: usize) -> Vec<u64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| r.random()).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn positive(name: &str, v: usize) -> Result<usize, CliError> {
    if v == 0 {
        return Err(CliError::config(format!("{name} must be positive")));
    }
    Ok(v)
}

pub(crate) fn power_of_two(name: &str, v: usize) -> Result<usize, CliError> {
    if !v.is_power_of_two() {
        return Err(CliError::config(format!("{name} = {v} is not a power of two")));
    }
    Ok(v)
}

pub(crate) fn tolerance(p: &Params, default: f64) -> Result<f64, CliError> {
    let t = p.tolerance.unwrap_or(default);
    if !(t.is_finite() && t >= 0.0) {
        return Err(CliError::config("tolerance must be a non-negative number"));
    }
    Ok(t)
}

/// A named instance: from the instance file, from (n, m, k, γ), or the given defaults.
pub(crate) fn instances(p: &Params, defaults: Vec<(String, QsatInstance)>) -> Result<Vec<(String, QsatInstance)>, CliError> {
    if let Some(path) = &p.instance {
        return Ok(vec![(path.display().to_string(), load_instance(path)?)]);
    }
    match (p.n, p.m, p.k, p.gamma) {
        (None, None, None, None) => Ok(defaults),
        (Some(n), Some(m), Some(k), Some(gamma)) => {
            let inst = fixtures::mixed(n, m, k, gamma).map_err(|e| CliError::config(e.to_string()))?;
            Ok(vec![(format!("mixed(n={n},m={m},k={k},gamma={gamma})"), inst)])
        }
        _ => Err(CliError::config("give all of n, m, k, gamma or none of them")),
    }
}

enum Resolved {
    Merkle(merkle::Settings),
    Protocol(protocol::Settings),
    History(history::Settings),
    Venc(venc::Settings),
    Simulability(simulability::Settings),
    Cross(cross::Settings),
    Comm(comm::Settings),
    Soundness(soundness::Settings),
}

/// Validates the whole config, then runs it. Nothing is computed when validation fails.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Report, CliError> {
    let p = &cfg.params;
    let resolved = match cfg.scenario {
        Scenario::MerkleRoundtrip => Resolved::Merkle(merkle::Settings::resolve(p)?),
        Scenario::ProtocolCompleteness => Resolved::Protocol(protocol::Settings::resolve(p)?),
        Scenario::HistoryEnergy => Resolved::History(history::Settings::resolve(p)?),
        Scenario::VencVanilla => Resolved::Venc(venc::Settings::resolve(p)?),
        Scenario::SimulabilityAudit => Resolved::Simulability(simulability::Settings::resolve(p)?),
        Scenario::CrossTerm => Resolved::Cross(cross::Settings::resolve(p)?),
        Scenario::CommBound => Resolved::Comm(comm::Settings::resolve(p)?),
        Scenario::SoundnessProbe => Resolved::Soundness(soundness::Settings::resolve(p)?),
    };
    let start = Instant::now();
    let mut report = match resolved {
        Resolved::Merkle(s) => merkle::run(&s, cfg.seed),
        Resolved::Protocol(s) => protocol::run(&s, cfg.seed),
        Resolved::History(s) => history::run(&s, cfg.seed),
        Resolved::Venc(s) => venc::run(&s, cfg.seed),
        Resolved::Simulability(s) => simulability::run(&s, cfg.seed),
        Resolved::Cross(s) => cross::run(&s, cfg.seed),
        Resolved::Comm(s) => comm::run(&s, cfg.seed),
        Resolved::Soundness(s) => soundness::run(&s, cfg.seed),
    }?;
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.finish();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn later_params_win() {
        let flags = Params { trials: Some(7), tolerance: Some(1e-3), ..Params::default() };
        let file = Params { trials: Some(2), ..Params::default() };
        let m = flags.merged(&file);
        assert_eq!(m.trials, Some(2));
        assert_eq!(m.tolerance, Some(1e-3));
    }

    #[test]
    fn trial_seeds_are_a_stream() {
        let a = trial_seeds(3, 5);
        assert_eq!(&trial_seeds(3, 2)[..], &a[..2]);
        assert_ne!(a, trial_seeds(4, 5));
    }
}
