use super::ScenarioParams;
use crate::cox::{PatientRecord, SiteData};
use crate::error::Result;
use rand::Rng;
use rand_distr::{Distribution, Exp};

/// Simulates one site with true log hazard ratio `site_theta`.
///
/// Site size is ⌊U(1000, max_n)⌋. Each subject is treated with probability
/// `treated_fraction` and assigned a uniformly random stratum. Every
/// stratum gets its own constant baseline hazard, log-uniform over the
/// configured range. Event times are exponential with rate
/// λ_stratum·exp(θ·treated) and administratively censored at the end of
/// follow-up.
pub fn generate_site<R: Rng>(
    params: &ScenarioParams,
    site_theta: f64,
    site_id: impl Into<String>,
    rng: &mut R,
) -> Result<SiteData> {
    params.validate()?;
    let n = if params.max_n > 1000 {
        rng.random_range(1000.0..params.max_n as f64).floor() as usize
    } else {
        1000
    };
    let (ln_lo, ln_hi) = (
        params.baseline_hazard_min.ln(),
        params.baseline_hazard_max.ln(),
    );
    let hazards: Vec<f64> = (0..params.n_strata)
        .map(|_| {
            if ln_hi > ln_lo {
                rng.random_range(ln_lo..ln_hi).exp()
            } else {
                params.baseline_hazard_min
            }
        })
        .collect();
    let relative = site_theta.exp();
    let horizon = params.follow_up_days;

    let records = (0..n)
        .map(|_| {
            let treated = rng.random_bool(params.treated_fraction);
            let stratum = rng.random_range(0..params.n_strata);
            let rate = hazards[stratum] * if treated { relative } else { 1.0 };
            let t: f64 = Exp::new(rate).expect("positive rate").sample(rng);
            let event = t <= horizon;
            PatientRecord {
                time: if event {
                    t.max(f64::MIN_POSITIVE)
                } else {
                    horizon
                },
                event,
                treated,
                stratum: stratum as u64,
            }
        })
        .collect();
    SiteData::new(site_id, records)
}
