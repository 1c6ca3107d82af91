//! `metrics.csv` and `reps.csv` writers. Floats use shortest round-trip
//! formatting so the per-rep dump reproduces the metrics exactly.

use super::{Method, RepEstimate, RepRecord, ScenarioResult};
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str = "scenario_id,treated_fraction,hazard_ratio,n_sites,max_n,n_strata,tau,n_reps,seed,method,coverage,bias,mse,precision,non_estimable";
pub const REPS_HEADER: &str = "scenario_id,rep,method,estimate,ci_lo,ci_hi,se,estimable";

/// One row per scenario × method. Scenario ids are positions in `results`.
pub fn metrics_csv(results: &[ScenarioResult]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for (id, r) in results.iter().enumerate() {
        let p = &r.params;
        for (method, m) in &r.metrics {
            out.push_str(&format!(
                "{id},{},{},{},{},{},{},{},{},{method},{},{},{},{},{}\n",
                p.treated_fraction,
                p.hazard_ratio,
                p.n_sites,
                p.max_n,
                p.n_strata,
                p.tau,
                p.n_reps,
                p.seed,
                m.coverage,
                m.bias,
                m.mse,
                m.precision,
                m.non_estimable
            ));
        }
    }
    out
}

pub fn reps_csv(results: &[ScenarioResult]) -> String {
    let mut out = format!("{REPS_HEADER}\n");
    for (id, r) in results.iter().enumerate() {
        for rec in &r.reps {
            match rec.estimate {
                Some(e) => out.push_str(&format!(
                    "{id},{},{},{},{},{},{},1\n",
                    rec.rep, rec.method, e.estimate, e.ci_lo, e.ci_hi, e.se
                )),
                None => out.push_str(&format!("{id},{},{},,,,,0\n", rec.rep, rec.method)),
            }
        }
    }
    out
}

fn bad(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: "reps.csv".into(),
        line: line as u64,
        message: message.into(),
    }
}

/// Parses a `reps.csv` dump back into (scenario id, record) pairs.
pub fn read_reps_csv(text: &str) -> Result<Vec<(usize, RepRecord)>> {
    let mut lines = text.lines();
    if lines.next() != Some(REPS_HEADER) {
        return Err(bad(1, "unexpected header"));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(bad(n, "expected 8 fields"));
        }
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| bad(n, format!("bad integer '{s}'")))
        };
        let float = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| bad(n, format!("bad number '{s}'")))
        };
        let method: Method = fields[2].parse()?;
        let estimate = match fields[7] {
            "1" => Some(RepEstimate {
                estimate: float(fields[3])?,
                ci_lo: float(fields[4])?,
                ci_hi: float(fields[5])?,
                se: float(fields[6])?,
            }),
            "0" => None,
            other => return Err(bad(n, format!("bad estimable flag '{other}'"))),
        };
        out.push((
            int(fields[0])?,
            RepRecord {
                rep: int(fields[1])?,
                method,
                estimate,
            },
        ));
    }
    Ok(out)
}
