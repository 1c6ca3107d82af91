//! Stratified one-parameter Cox partial likelihood.
//!
//! The only covariate is the binary treatment indicator, so every risk set
//! collapses to four numbers: how many comparator and treated subjects are at
//! risk, and how many of each had the event at that time. Records are sorted
//! once by (stratum, time descending) on ingestion and reduced to these
//! tallies; likelihood, score and information are then linear in the number
//! of distinct event times. Ties use the Breslow approximation and subjects
//! censored at an event time stay in that event's risk set.

use crate::approx::LikelihoodProfile;
use crate::error::{Error, Result};
use crate::special::ln_add_exp;
use std::collections::HashMap;

const MAX_NEWTON_ITERATIONS: usize = 100;
const SCORE_TOLERANCE: f64 = 1e-8;
/// Newton iterates beyond this magnitude indicate a monotone likelihood.
const ESCAPE_LOG_HR: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatientRecord {
    /// Days of follow-up until the event or censoring.
    pub time: f64,
    pub event: bool,
    /// `true` for the target treatment, `false` for the comparator.
    pub treated: bool,
    pub stratum: u64,
}

impl PatientRecord {
    pub fn new(time: f64, event: bool, treated: bool, stratum: u64) -> Self {
        Self {
            time,
            event,
            treated,
            stratum,
        }
    }
}

/// Sufficient statistics of one distinct event time within a stratum.
#[derive(Debug, Clone, Copy, PartialEq)]
struct RiskSetTally {
    at_risk: [f64; 2],
    ln_at_risk: [f64; 2],
    events: [f64; 2],
}

impl RiskSetTally {
    fn new(at_risk: [usize; 2], events: [usize; 2]) -> Self {
        let at_risk = [at_risk[0] as f64, at_risk[1] as f64];
        Self {
            at_risk,
            ln_at_risk: [at_risk[0].ln(), at_risk[1].ln()],
            events: [events[0] as f64, events[1] as f64],
        }
    }

    fn total_events(&self) -> f64 {
        self.events[0] + self.events[1]
    }

    /// ln(n0 + n1·e^β)
    #[inline]
    fn ln_risk_sum(&self, beta: f64) -> f64 {
        ln_add_exp(self.ln_at_risk[0], self.ln_at_risk[1] + beta)
    }

    /// Treated share of the risk-set weight at β.
    #[inline]
    fn treated_weight(&self, beta: f64) -> f64 {
        if self.at_risk[1] == 0.0 {
            0.0
        } else if self.at_risk[0] == 0.0 {
            1.0
        } else {
            (self.ln_at_risk[1] + beta - self.ln_risk_sum(beta)).exp()
        }
    }

    fn mixed(&self) -> bool {
        self.at_risk[0] > 0.0 && self.at_risk[1] > 0.0
    }
}

/// One site's patient-level survival data.
#[derive(Debug, Clone)]
pub struct SiteData {
    site_id: String,
    records: Vec<PatientRecord>,
    tallies: Vec<RiskSetTally>,
}

impl SiteData {
    pub fn new(site_id: impl Into<String>, mut records: Vec<PatientRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidData("site has no records".into()));
        }
        if let Some(r) = records
            .iter()
            .find(|r| !(r.time > 0.0 && r.time.is_finite()))
        {
            return Err(Error::InvalidData(format!(
                "follow-up time must be positive and finite, got {}",
                r.time
            )));
        }
        records.sort_by(|a, b| {
            a.stratum
                .cmp(&b.stratum)
                .then(b.time.total_cmp(&a.time))
                .then(a.event.cmp(&b.event))
                .then(a.treated.cmp(&b.treated))
        });
        let tallies = build_tallies(&records);
        Ok(Self {
            site_id: site_id.into(),
            records,
            tallies,
        })
    }

    /// Concatenates sites into one dataset whose strata are the
    /// (site, stratum) combinations of the inputs.
    pub fn pooled(site_id: impl Into<String>, sites: &[SiteData]) -> Result<Self> {
        let mut labels: HashMap<(usize, u64), u64> = HashMap::new();
        let mut records = Vec::new();
        for (i, site) in sites.iter().enumerate() {
            for r in &site.records {
                let next = labels.len() as u64;
                let stratum = *labels.entry((i, r.stratum)).or_insert(next);
                records.push(PatientRecord { stratum, ..*r });
            }
        }
        Self::new(site_id, records)
    }

    pub fn site_id(&self) -> &str {
        &self.site_id
    }

    /// Records in internal (stratum, time descending) order.
    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    /// Event counts as `[comparator, treated]`.
    pub fn event_counts(&self) -> [usize; 2] {
        let mut counts = [0, 0];
        for r in self.records.iter().filter(|r| r.event) {
            counts[r.treated as usize] += 1;
        }
        counts
    }

    /// Events per arm restricted to risk sets where both arms are present;
    /// only these carry information about the hazard ratio.
    fn informative_event_counts(&self) -> [f64; 2] {
        self.tallies
            .iter()
            .filter(|t| t.mixed())
            .fold([0.0, 0.0], |acc, t| {
                [acc[0] + t.events[0], acc[1] + t.events[1]]
            })
    }
}

fn build_tallies(sorted: &[PatientRecord]) -> Vec<RiskSetTally> {
    let mut tallies = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let stratum = sorted[i].stratum;
        let mut at_risk = [0usize; 2];
        while i < sorted.len() && sorted[i].stratum == stratum {
            let time = sorted[i].time;
            let mut events = [0usize; 2];
            while i < sorted.len() && sorted[i].stratum == stratum && sorted[i].time == time {
                let arm = sorted[i].treated as usize;
                at_risk[arm] += 1;
                if sorted[i].event {
                    events[arm] += 1;
                }
                i += 1;
            }
            if events[0] + events[1] > 0 {
                tallies.push(RiskSetTally::new(at_risk, events));
            }
        }
    }
    tallies
}

/// Stratified log partial likelihood at log hazard ratio `beta`.
pub fn cox_log_likelihood(data: &SiteData, beta: f64) -> f64 {
    data.tallies
        .iter()
        .map(|t| beta * t.events[1] - t.total_events() * t.ln_risk_sum(beta))
        .sum()
}

/// Score and observed information (first and negated second derivative).
pub fn cox_score_and_information(data: &SiteData, beta: f64) -> (f64, f64) {
    data.tallies.iter().fold((0.0, 0.0), |(score, info), t| {
        let p = t.treated_weight(beta);
        let d = t.total_events();
        (score + t.events[1] - d * p, info + d * p * (1.0 - p))
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum MleResult {
    Estimable { mode: f64, fisher_information: f64 },
    NonEstimable { reason: String },
}

impl MleResult {
    pub fn is_estimable(&self) -> bool {
        matches!(self, MleResult::Estimable { .. })
    }

    pub fn mode(&self) -> Option<f64> {
        match self {
            MleResult::Estimable { mode, .. } => Some(*mode),
            MleResult::NonEstimable { .. } => None,
        }
    }

    pub fn fisher_information(&self) -> Option<f64> {
        match self {
            MleResult::Estimable {
                fisher_information, ..
            } => Some(*fisher_information),
            MleResult::NonEstimable { .. } => None,
        }
    }

    fn non_estimable(reason: &str) -> Self {
        MleResult::NonEstimable {
            reason: reason.to_string(),
        }
    }
}

/// Maximum partial likelihood estimate by safeguarded Newton iteration.
pub fn cox_mle(data: &SiteData) -> MleResult {
    let informative = data.informative_event_counts();
    if informative[0] == 0.0 || informative[1] == 0.0 {
        return MleResult::non_estimable("zero events in one arm");
    }

    let mut beta = 0.0;
    let mut ll = cox_log_likelihood(data, beta);
    for _ in 0..MAX_NEWTON_ITERATIONS {
        let (score, info) = cox_score_and_information(data, beta);
        if score.abs() < SCORE_TOLERANCE {
            return MleResult::Estimable {
                mode: beta,
                fisher_information: info,
            };
        }
        if info <= 0.0 {
            return MleResult::non_estimable("zero information");
        }
        let step = score / info;
        let mut scale = 1.0;
        let (next, next_ll) = loop {
            let candidate = beta + scale * step;
            let candidate_ll = cox_log_likelihood(data, candidate);
            if candidate_ll >= ll - 1e-12 * ll.abs() || scale < 1e-10 {
                break (candidate, candidate_ll);
            }
            scale *= 0.5;
        };
        if next.abs() > ESCAPE_LOG_HR {
            return MleResult::non_estimable("monotone likelihood");
        }
        if (next - beta).abs() < 1e-13 * (1.0 + beta.abs()) {
            let (_, info) = cox_score_and_information(data, next);
            return MleResult::Estimable {
                mode: next,
                fisher_information: info,
            };
        }
        beta = next;
        ll = next_ll;
    }
    MleResult::non_estimable("Newton iteration did not converge")
}

/// Log partial likelihood tabulated on `grid`, max-normalized to 0.
pub fn profile_likelihood(data: &SiteData, grid: &[f64]) -> Result<LikelihoodProfile> {
    let values = grid.iter().map(|&b| cox_log_likelihood(data, b)).collect();
    LikelihoodProfile::new(grid.to_vec(), values)
}
