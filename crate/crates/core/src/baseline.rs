//! Traditional normal-theory meta-analysis over per-site estimates.

use crate::approx::Approximation;
use crate::error::{Error, Result};
use crate::fixed::{EstimateFlag, PooledEstimate};
use crate::special::Z_975;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalSummary {
    pub log_hr: f64,
    pub se: f64,
}

impl NormalSummary {
    pub fn new(log_hr: f64, se: f64) -> Result<Self> {
        if !(log_hr.is_finite() && se.is_finite() && se > 0.0) {
            return Err(Error::InvalidData(format!(
                "invalid site summary (log_hr={log_hr}, se={se})"
            )));
        }
        Ok(Self { log_hr, se })
    }
}

/// Splits approximations into normal summaries and a count of sites that
/// had none. Only normal approximations carry a point estimate and SE.
pub fn summaries_from(approxs: &[Approximation]) -> (Vec<NormalSummary>, usize) {
    let summaries: Vec<_> = approxs
        .iter()
        .filter_map(|a| match a {
            Approximation::Normal { mu, sigma } => Some(NormalSummary {
                log_hr: *mu,
                se: *sigma,
            }),
            _ => None,
        })
        .collect();
    let dropped = approxs.len() - summaries.len();
    (summaries, dropped)
}

/// Canonical order so results do not depend on input order.
fn sorted(summaries: &[NormalSummary]) -> Vec<NormalSummary> {
    let mut s = summaries.to_vec();
    s.sort_by(|a, b| a.log_hr.total_cmp(&b.log_hr).then(a.se.total_cmp(&b.se)));
    s
}

fn pool(summaries: &[NormalSummary], tau_squared: f64) -> (f64, f64) {
    let (weighted, total) = summaries.iter().fold((0.0, 0.0), |(wb, ws), s| {
        let w = 1.0 / (s.se * s.se + tau_squared);
        (wb + w * s.log_hr, ws + w)
    });
    (weighted / total, total.sqrt().recip())
}

fn estimate(log_hr: f64, se: f64, used: usize) -> PooledEstimate {
    PooledEstimate {
        log_hr,
        ci_lo: log_hr - Z_975 * se,
        ci_hi: log_hr + Z_975 * se,
        se,
        n_sites_used: used,
        n_sites_dropped: 0,
        tau_squared: None,
        flags: Vec::new(),
    }
}

/// Inverse-variance weighted fixed-effect pooling.
pub fn inverse_variance_fixed(summaries: &[NormalSummary]) -> Result<PooledEstimate> {
    if summaries.is_empty() {
        return Err(Error::NonEstimable("no site summaries to pool".into()));
    }
    let s = sorted(summaries);
    let (log_hr, se) = pool(&s, 0.0);
    Ok(estimate(log_hr, se, s.len()))
}

/// DerSimonian–Laird method-of-moments random-effects pooling.
pub fn dersimonian_laird(summaries: &[NormalSummary]) -> Result<PooledEstimate> {
    if summaries.is_empty() {
        return Err(Error::NonEstimable("no site summaries to pool".into()));
    }
    if summaries.len() == 1 {
        let mut est = inverse_variance_fixed(summaries)?;
        est.tau_squared = Some(0.0);
        est.flags.push(EstimateFlag::SingleSite);
        return Ok(est);
    }
    let s = sorted(summaries);
    let weights: Vec<f64> = s.iter().map(|x| 1.0 / (x.se * x.se)).collect();
    let sum_w: f64 = weights.iter().sum();
    let sum_w2: f64 = weights.iter().map(|w| w * w).sum();
    let (fixed_mean, _) = pool(&s, 0.0);
    let q: f64 = s
        .iter()
        .zip(&weights)
        .map(|(x, w)| w * (x.log_hr - fixed_mean).powi(2))
        .sum();
    let k = s.len() as f64;
    let tau_squared = ((q - (k - 1.0)) / (sum_w - sum_w2 / sum_w)).max(0.0);
    let (log_hr, se) = pool(&s, tau_squared);
    let mut est = estimate(log_hr, se, s.len());
    est.tau_squared = Some(tau_squared);
    Ok(est)
}
