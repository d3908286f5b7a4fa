//! Encoded off-diagonal terms seen through few qubits per block.

use qzk_core::steane::{cross_term_norm, CodeParams};
use serde::Serialize;
use serde_json::json;

use super::simulability::subsets;
use super::{tolerance, Params};
use crate::error::CliError;
use crate::report::{Check, Report};

#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub kappa: u32,
    pub blocks: Vec<usize>,
    pub per_block: usize,
    pub tolerance: f64,
}

impl Settings {
    pub fn resolve(p: &Params) -> Result<Self, CliError> {
        match p.kappa {
            None | Some(1) => {}
            Some(k) => return Err(CliError::config(format!("cross terms are checked at kappa = 1, got {k}"))),
        }
        let blocks = match p.n {
            None => vec![1, 2],
            Some(n @ (1 | 2 | 3)) => vec![n],
            Some(n) => return Err(CliError::config(format!("n = {n} blocks exceeds the 3-block limit"))),
        };
        Ok(Self { kappa: 1, blocks, per_block: CodeParams::new(1).cross_bound(), tolerance: tolerance(p, 1e-10)? })
    }
}

fn bits(v: usize, n: usize) -> Vec<bool> {
    (0..n).map(|j| v >> (n - 1 - j) & 1 == 1).collect()
}

pub fn run(s: &Settings, _seed: u64) -> Result<Report, CliError> {
    let mut report = Report::new("cross-term", serde_json::to_value(s).expect("settings serialize"));
    let params = CodeParams::new(s.kappa);
    let mut worst = 0.0f64;
    let mut contrast = 0.0f64;
    let mut rows = Vec::new();
    for &n in &s.blocks {
        let all = subsets(n, params.n, s.per_block);
        let mut block_worst = 0.0f64;
        let mut pairs = 0;
        for a in 0..1usize << n {
            for b in (0..1usize << n).filter(|&b| b != a) {
                pairs += 1;
                let (x, y) = (bits(a, n), bits(b, n));
                for sub in &all {
                    block_worst = block_worst.max(cross_term_norm(&x, &y, sub, &params)?);
                }
                // the whole first block, where a and b differ there
                if x[0] != y[0] && x[1..] == y[1..] {
                    let full: Vec<usize> = (0..params.n).collect();
                    contrast = contrast.max(cross_term_norm(&x, &y, &full, &params)?);
                }
            }
        }
        worst = worst.max(block_worst);
        rows.push(json!({ "blocks": n, "pairs": pairs, "subsets": all.len(), "max_entry": block_worst }));
    }
    report.metric("cross_terms", &rows);
    report.metric("full_block_max_entry", contrast);
    report.check(Check::at_most("cross-term-max-entry", worst, s.tolerance));
    report.check(Check::at_least("full-block-contrast", contrast, 1e-3).exploratory());
    Ok(report)
}
