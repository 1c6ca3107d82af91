//! Independent reference implementations shared by the integration tests.
//! Nothing here calls into the library's numerics.

#![allow(dead_code)]

use evsynth::PatientRecord;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Partial log-likelihood by explicit enumeration: for every event, list
/// the subjects of its stratum still under observation and sum the
/// Breslow term.
pub fn brute_force_log_likelihood(records: &[PatientRecord], beta: f64) -> f64 {
    let mut total = 0.0;
    for event in records.iter().filter(|r| r.event) {
        let mut denominator = 0.0;
        for other in records {
            if other.stratum == event.stratum && other.time >= event.time {
                denominator += (beta * x(other)).exp();
            }
        }
        total += beta * x(event) - denominator.ln();
    }
    total
}

fn x(r: &PatientRecord) -> f64 {
    if r.treated {
        1.0
    } else {
        0.0
    }
}

/// Up to `max_subjects` records with integer times (so ties occur), random
/// event flags, arms and two strata.
pub fn random_small_dataset<R: Rng>(rng: &mut R, max_subjects: usize) -> Vec<PatientRecord> {
    let n = rng.random_range(1..=max_subjects);
    (0..n)
        .map(|_| PatientRecord {
            time: rng.random_range(1..=4) as f64,
            event: rng.random_bool(0.6),
            treated: rng.random_bool(0.5),
            stratum: rng.random_range(0..2),
        })
        .collect()
}

/// Closed-form inverse-variance pooling: (estimate, se, ci_lo, ci_hi).
pub fn inverse_variance(sites: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    let w: Vec<f64> = sites.iter().map(|(_, s)| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let mean = sites.iter().zip(&w).map(|((b, _), w)| b * w).sum::<f64>() / sw;
    let se = sw.sqrt().recip();
    let z = Normal::standard().inverse_cdf(0.975);
    (mean, se, mean - z * se, mean + z * se)
}

pub fn normal_quantile(p: f64, mean: f64, sd: f64) -> f64 {
    Normal::new(mean, sd).unwrap().inverse_cdf(p)
}

pub fn normal_density(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Quantile of HalfNormal(scale): scale·Φ⁻¹((1 + p)/2).
pub fn half_normal_quantile(p: f64, scale: f64) -> f64 {
    scale * Normal::standard().inverse_cdf(0.5 * (1.0 + p))
}

pub fn half_normal_density(x: f64, scale: f64) -> f64 {
    2.0 * normal_density(x, 0.0, scale)
}

/// Empirical quantile with the type-7 (linear) rule.
pub fn empirical_quantile(samples: &[f64], p: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Monte Carlo standard error of a sample quantile:
/// √(p(1−p)/ESS) / f(q).
pub fn quantile_mcse(p: f64, ess: f64, density_at_quantile: f64) -> f64 {
    (p * (1.0 - p) / ess).sqrt() / density_at_quantile
}
