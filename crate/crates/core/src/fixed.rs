//! Fixed-effect synthesis: maximize the product of the site likelihoods and
//! read a profile-likelihood confidence interval off the summed log density.

use crate::approx::{exchange_grid, Approximation, LOG_HR_MAX, LOG_HR_MIN};
use crate::error::{Error, Result};
use crate::special::{CHI2_1_95, Z_975};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

const OPTIMUM_TOLERANCE: f64 = 1e-10;
const ROOT_TOLERANCE: f64 = 1e-11;
const BOUNDARY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateFlag {
    /// The optimum sits on the edge of the search range.
    EstimateAtBoundary,
    /// The lower interval root lies below the search range.
    LowerBoundClamped,
    /// The upper interval root lies above the search range.
    UpperBoundClamped,
    /// Random-effects pooling with one site degenerates to fixed effects.
    SingleSite,
}

/// Pooled log hazard ratio with a 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledEstimate {
    pub log_hr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub se: f64,
    pub n_sites_used: usize,
    pub n_sites_dropped: usize,
    /// Between-site variance, for moment-based random-effects pooling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_squared: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<EstimateFlag>,
}

impl PooledEstimate {
    pub fn has_flag(&self, flag: EstimateFlag) -> bool {
        self.flags.contains(&flag)
    }

    /// True when the point estimate hit the edge of the search range.
    pub fn at_boundary(&self) -> bool {
        self.has_flag(EstimateFlag::EstimateAtBoundary)
    }
}

fn approximation_key(a: &Approximation) -> (u8, Vec<f64>) {
    match a {
        Approximation::Normal { mu, sigma } => (0, vec![*mu, *sigma]),
        Approximation::SkewNormal { mu, sigma, alpha } => (1, vec![*mu, *sigma, *alpha]),
        Approximation::Custom { mu, sigma, gamma } => (2, vec![*mu, *sigma, *gamma]),
        Approximation::Grid(p) => (3, [p.log_hr(), p.log_likelihood()].concat()),
        Approximation::NonEstimable { .. } => (4, Vec::new()),
    }
}

fn compare_keys(a: &(u8, Vec<f64>), b: &(u8, Vec<f64>)) -> Ordering {
    a.0.cmp(&b.0).then_with(|| {
        a.1.iter()
            .zip(&b.1)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or_else(|| a.1.len().cmp(&b.1.len()))
    })
}

/// Usable approximations in a canonical order, so floating-point sums do
/// not depend on how the caller listed the sites.
pub(crate) fn usable_sorted(approxs: &[Approximation]) -> Vec<&Approximation> {
    let mut keyed: Vec<_> = approxs
        .iter()
        .filter(|a| a.is_estimable())
        .map(|a| (approximation_key(a), a))
        .collect();
    keyed.sort_by(|a, b| compare_keys(&a.0, &b.0));
    keyed.into_iter().map(|(_, a)| a).collect()
}

fn sum_log_density(usable: &[&Approximation], beta: f64) -> Result<f64> {
    usable.iter().map(|a| a.log_density(beta)).sum()
}

/// Summed log density of the usable approximations; non-estimable sites are
/// skipped.
pub fn pooled_log_likelihood(approxs: &[Approximation], beta: f64) -> Result<f64> {
    let usable = usable_sorted(approxs);
    if usable.is_empty() {
        return Err(Error::NonEstimable("no usable site approximations".into()));
    }
    sum_log_density(&usable, beta)
}

fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > OPTIMUM_TOLERANCE {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // Keep whichever candidate is best, including the bracket ends.
    [a, mid, b]
        .into_iter()
        .map(|x| (x, f(x)))
        .max_by(|p, q| p.1.total_cmp(&q.1))
        .map(|(x, _)| x)
        .unwrap_or(mid)
}

/// Bisection for the crossing of `f` through `level` between `inside`
/// (where f > level) and `outside` (where f ≤ level).
fn bisect_crossing<F: Fn(f64) -> f64>(f: F, level: f64, mut inside: f64, mut outside: f64) -> f64 {
    while (outside - inside).abs() > ROOT_TOLERANCE {
        let mid = 0.5 * (inside + outside);
        if f(mid) > level {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    0.5 * (inside + outside)
}

/// Maximizes the pooled log likelihood over [ln 0.1, ln 10] and finds the
/// interval where it drops by at most half the 95% χ²₁ quantile.
pub fn fixed_effect_estimate(approxs: &[Approximation]) -> Result<PooledEstimate> {
    let usable = usable_sorted(approxs);
    if usable.is_empty() {
        return Err(Error::NonEstimable("no usable site approximations".into()));
    }
    let n_sites_dropped = approxs.len() - usable.len();
    // Validate once so the closures below can treat failures as -inf.
    sum_log_density(&usable, LOG_HR_MIN)?;
    let ll = |b: f64| sum_log_density(&usable, b).unwrap_or(f64::NEG_INFINITY);

    let grid = exchange_grid();
    let (best, _) = grid.iter().enumerate().map(|(i, &b)| (i, ll(b))).fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
    );
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let log_hr = golden_section_max(ll, lo, hi);
    let peak = ll(log_hr);

    let mut flags = Vec::new();
    if log_hr - LOG_HR_MIN < BOUNDARY_TOLERANCE || LOG_HR_MAX - log_hr < BOUNDARY_TOLERANCE {
        flags.push(EstimateFlag::EstimateAtBoundary);
    }

    let level = peak - CHI2_1_95 / 2.0;
    let ci_lo = if ll(LOG_HR_MIN) > level {
        flags.push(EstimateFlag::LowerBoundClamped);
        LOG_HR_MIN
    } else {
        bisect_crossing(ll, level, log_hr, LOG_HR_MIN)
    };
    let ci_hi = if ll(LOG_HR_MAX) > level {
        flags.push(EstimateFlag::UpperBoundClamped);
        LOG_HR_MAX
    } else {
        bisect_crossing(ll, level, log_hr, LOG_HR_MAX)
    };
    let se = ((ci_hi - ci_lo) / (2.0 * Z_975)).max(f64::MIN_POSITIVE);

    Ok(PooledEstimate {
        log_hr,
        ci_lo: ci_lo.min(log_hr),
        ci_hi: ci_hi.max(log_hr),
        se,
        n_sites_used: usable.len(),
        n_sites_dropped,
        tau_squared: None,
        flags,
    })
}
