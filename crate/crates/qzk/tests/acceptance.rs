//! One line per acceptance criterion; exits nonzero if any fails.

use std::collections::BTreeMap;
use std::process::ExitCode;

use qzk::scenarios::{Scenario, ScenarioConfig, DEFAULT_SEED};
use qzk::{run_scenario, Report};

struct Criterion {
    id: usize,
    title: &'static str,
    scenario: Scenario,
    /// Check-name prefixes that must all pass.
    checks: &'static [&'static str],
    /// Wall-time limit in seconds.
    limit: Option<f64>,
}

const CRITERIA: [Criterion; 12] = [
    Criterion {
        id: 1,
        title: "Merkle round-trip",
        scenario: Scenario::MerkleRoundtrip,
        checks: &["roundtrip-trace-distance", "syndrome-zero-probability", "oracle-queries"],
        limit: Some(60.0),
    },
    Criterion {
        id: 2,
        title: "protocol faithfulness",
        scenario: Scenario::ProtocolCompleteness,
        checks: &["exact-matches-direct", "honest-acceptance"],
        limit: None,
    },
    Criterion {
        id: 3,
        title: "communication bound",
        scenario: Scenario::CommBound,
        checks: &["within-bound", "zero-round-qubits", "single-round-qubits", "classical-bits"],
        limit: None,
    },
    Criterion {
        id: 4,
        title: "history-state kernel",
        scenario: Scenario::HistoryEnergy,
        checks: &["history-state-energy", "history-subspace-distance"],
        limit: None,
    },
    Criterion {
        id: 5,
        title: "verifier energy identity",
        scenario: Scenario::VencVanilla,
        checks: &["energy-identity"],
        limit: None,
    },
    Criterion {
        id: 6,
        title: "completeness bound",
        scenario: Scenario::HistoryEnergy,
        checks: &["lambda-min-below-rejection", "all-accept-lambda-min"],
        limit: None,
    },
    Criterion {
        id: 7,
        title: "simulability",
        scenario: Scenario::SimulabilityAudit,
        checks: &["sim-marginal-", "tensor-composition"],
        limit: Some(300.0),
    },
    Criterion {
        id: 8,
        title: "cross-term vanishing",
        scenario: Scenario::CrossTerm,
        checks: &["cross-term-max-entry"],
        limit: None,
    },
    Criterion {
        id: 9,
        title: "term accounting",
        scenario: Scenario::VencVanilla,
        checks: &["term-count", "term-law-"],
        limit: None,
    },
    Criterion {
        id: 10,
        title: "padding identity",
        scenario: Scenario::VencVanilla,
        checks: &["padding-identity"],
        limit: None,
    },
    Criterion {
        id: 11,
        title: "view simulation",
        scenario: Scenario::SimulabilityAudit,
        checks: &["view-"],
        limit: None,
    },
    Criterion {
        id: 12,
        title: "Haar sampler",
        scenario: Scenario::MerkleRoundtrip,
        checks: &["haar-unitarity-", "haar-moment-"],
        limit: None,
    },
];

fn verdict(c: &Criterion, report: &Report) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for prefix in c.checks {
        let found: Vec<_> = report.matching(prefix).collect();
        if found.is_empty() {
            ok = false;
            parts.push(format!("{prefix}: missing"));
        }
        for chk in found {
            ok &= chk.passed;
            parts.push(format!("{}={:.3e}", chk.name, chk.value));
        }
    }
    if let Some(limit) = c.limit {
        ok &= report.wall_time_s < limit;
        parts.push(format!("time={:.1}s<{limit}s", report.wall_time_s));
    }
    (ok, parts.join(" "))
}

fn main() -> ExitCode {
    let mut reports: BTreeMap<&str, Result<Report, String>> = BTreeMap::new();
    let mut all = true;
    for c in &CRITERIA {
        let name = c.scenario.name();
        let entry = reports
            .entry(name)
            .or_insert_with(|| run_scenario(&ScenarioConfig::new(c.scenario, DEFAULT_SEED)).map_err(|e| e.to_string()));
        let (ok, detail) = match entry {
            Ok(r) => verdict(c, r),
            Err(e) => (false, format!("error: {e}")),
        };
        all &= ok;
        println!("criterion {:>2} [{}] {} ({name}): {detail}", c.id, if ok { "PASS" } else { "FAIL" }, c.title);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
