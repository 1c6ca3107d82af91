//! Shareable approximations of a site's log partial likelihood.
//!
//! An [`Approximation`] is the only thing a site hands to the coordinator.
//! Log densities are unnormalized: additive constants never matter once
//! sites are combined.

mod fit;
pub mod simplex;

pub use fit::{fit_parametric, ParametricFit};

use crate::cox::{cox_mle, profile_likelihood, MleResult, SiteData};
use crate::error::{Error, Result};
use crate::special::{ln_std_normal_cdf, ln_std_normal_pdf};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_10, LN_2};
use std::fmt;
use std::str::FromStr;

/// Lower end of the shared log hazard ratio range, ln(0.1).
pub const LOG_HR_MIN: f64 = -LN_10;
/// Upper end of the shared log hazard ratio range, ln(10).
pub const LOG_HR_MAX: f64 = LN_10;
/// Number of points on the exchange grid.
pub const EXCHANGE_GRID_POINTS: usize = 1000;

/// `points` equally spaced values from `lo` to `hi`, both inclusive.
pub fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let last = points - 1;
    (0..points)
        .map(|i| {
            if i == last {
                hi
            } else {
                lo + (hi - lo) * i as f64 / last as f64
            }
        })
        .collect()
}

/// The 1000-point grid over [ln 0.1, ln 10] used for grid payloads.
pub fn exchange_grid() -> Vec<f64> {
    linspace(LOG_HR_MIN, LOG_HR_MAX, EXCHANGE_GRID_POINTS)
}

/// Log likelihood tabulated over increasing log hazard ratios, shifted so
/// the largest tabulated value is exactly 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProfile")]
pub struct LikelihoodProfile {
    log_hr: Vec<f64>,
    log_likelihood: Vec<f64>,
}

#[derive(Deserialize)]
struct RawProfile {
    log_hr: Vec<f64>,
    log_likelihood: Vec<f64>,
}

impl TryFrom<RawProfile> for LikelihoodProfile {
    type Error = Error;

    fn try_from(raw: RawProfile) -> Result<Self> {
        LikelihoodProfile::new(raw.log_hr, raw.log_likelihood)
    }
}

impl LikelihoodProfile {
    pub fn new(log_hr: Vec<f64>, mut log_likelihood: Vec<f64>) -> Result<Self> {
        if log_hr.is_empty() || log_hr.len() != log_likelihood.len() {
            return Err(Error::InvalidData(format!(
                "profile needs equal, non-zero lengths (got {} and {})",
                log_hr.len(),
                log_likelihood.len()
            )));
        }
        if log_hr.iter().any(|x| !x.is_finite()) || log_likelihood.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidData("profile values must be finite".into()));
        }
        if log_hr.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidData(
                "profile abscissae must be strictly increasing".into(),
            ));
        }
        let max = log_likelihood
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        for v in log_likelihood.iter_mut() {
            *v -= max;
        }
        Ok(Self {
            log_hr,
            log_likelihood,
        })
    }

    pub fn log_hr(&self) -> &[f64] {
        &self.log_hr
    }

    pub fn log_likelihood(&self) -> &[f64] {
        &self.log_likelihood
    }

    pub fn len(&self) -> usize {
        self.log_hr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_hr.is_empty()
    }

    pub fn range(&self) -> (f64, f64) {
        (self.log_hr[0], self.log_hr[self.log_hr.len() - 1])
    }

    /// Abscissa of the largest tabulated value (first one on ties).
    pub fn argmax(&self) -> f64 {
        let i = self
            .log_likelihood
            .iter()
            .position(|&v| v == 0.0)
            .unwrap_or(0);
        self.log_hr[i]
    }

    /// Linear interpolation of the log likelihood.
    pub fn interpolate(&self, beta: f64) -> Result<f64> {
        let (lo, hi) = self.range();
        if !(beta >= lo && beta <= hi) {
            return Err(Error::OutOfRange { beta, lo, hi });
        }
        let upper = self.log_hr.partition_point(|&x| x < beta);
        if upper == 0 {
            return Ok(self.log_likelihood[0]);
        }
        if self.log_hr[upper] == beta {
            return Ok(self.log_likelihood[upper]);
        }
        let (x0, x1) = (self.log_hr[upper - 1], self.log_hr[upper]);
        let (y0, y1) = (self.log_likelihood[upper - 1], self.log_likelihood[upper]);
        let t = (beta - x0) / (x1 - x0);
        Ok(y0 + t * (y1 - y0))
    }

    /// Re-tabulates onto `grid` by linear interpolation, then re-normalizes.
    pub fn resample(&self, grid: &[f64]) -> Result<Self> {
        if grid == self.log_hr.as_slice() {
            return Ok(self.clone());
        }
        let values = grid
            .iter()
            .map(|&b| self.interpolate(b))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid.to_vec(), values)
    }
}

/// The approximation families a site can share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Normal,
    SkewNormal,
    Custom,
    Grid,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Normal,
        Family::SkewNormal,
        Family::Custom,
        Family::Grid,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::SkewNormal => "skew-normal",
            Family::Custom => "custom",
            Family::Grid => "grid",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Family::Normal),
            "skew-normal" | "skew_normal" => Ok(Family::SkewNormal),
            "custom" => Ok(Family::Custom),
            "grid" => Ok(Family::Grid),
            other => Err(Error::InvalidConfig(format!(
                "unknown approximation family '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Approximation {
    Normal { mu: f64, sigma: f64 },
    SkewNormal { mu: f64, sigma: f64, alpha: f64 },
    Custom { mu: f64, sigma: f64, gamma: f64 },
    Grid(LikelihoodProfile),
    NonEstimable { reason: String },
}

impl Approximation {
    pub fn is_estimable(&self) -> bool {
        !matches!(self, Approximation::NonEstimable { .. })
    }

    pub fn family(&self) -> Option<Family> {
        match self {
            Approximation::Normal { .. } => Some(Family::Normal),
            Approximation::SkewNormal { .. } => Some(Family::SkewNormal),
            Approximation::Custom { .. } => Some(Family::Custom),
            Approximation::Grid(_) => Some(Family::Grid),
            Approximation::NonEstimable { .. } => None,
        }
    }

    /// Checks the parameter invariants of a payload built elsewhere.
    pub fn validate(&self) -> Result<()> {
        let check = |mu: f64, sigma: f64, shape: f64| {
            if mu.is_finite() && shape.is_finite() && sigma.is_finite() && sigma > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidData(format!(
                    "invalid approximation parameters (mu={mu}, sigma={sigma}, shape={shape})"
                )))
            }
        };
        match *self {
            Approximation::Normal { mu, sigma } => check(mu, sigma, 0.0),
            Approximation::SkewNormal { mu, sigma, alpha } => check(mu, sigma, alpha),
            Approximation::Custom { mu, sigma, gamma } => check(mu, sigma, gamma),
            Approximation::Grid(_) | Approximation::NonEstimable { .. } => Ok(()),
        }
    }

    /// Unnormalized log density at `beta`.
    pub fn log_density(&self, beta: f64) -> Result<f64> {
        match self {
            Approximation::Normal { mu, sigma } => Ok(normal_log_density(beta, *mu, *sigma)),
            Approximation::SkewNormal { mu, sigma, alpha } => {
                Ok(skew_normal_log_density(beta, *mu, *sigma, *alpha))
            }
            Approximation::Custom { mu, sigma, gamma } => {
                Ok(custom_log_density(beta, *mu, *sigma, *gamma))
            }
            Approximation::Grid(profile) => profile.interpolate(beta),
            Approximation::NonEstimable { reason } => Err(Error::NonEstimable(reason.clone())),
        }
    }

    /// Location of the approximation's maximum, restricted to the shared
    /// log hazard ratio range for families without a closed form.
    pub fn mode(&self) -> Option<f64> {
        match self {
            Approximation::Normal { mu, .. } | Approximation::Custom { mu, .. } => Some(*mu),
            Approximation::Grid(profile) => Some(profile.argmax()),
            Approximation::SkewNormal { .. } => {
                let grid = exchange_grid();
                grid.iter()
                    .copied()
                    .map(|b| (b, self.log_density(b).unwrap_or(f64::NEG_INFINITY)))
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .map(|(b, _)| b)
            }
            Approximation::NonEstimable { .. } => None,
        }
    }
}

#[inline]
pub fn normal_log_density(beta: f64, mu: f64, sigma: f64) -> f64 {
    let z = (beta - mu) / sigma;
    -0.5 * z * z
}

/// Azzalini location-scale skew-normal: log of 2·φ(z)/σ·Φ(αz), z = (β−μ)/σ.
#[inline]
pub fn skew_normal_log_density(beta: f64, mu: f64, sigma: f64, alpha: f64) -> f64 {
    let z = (beta - mu) / sigma;
    LN_2 + ln_std_normal_pdf(z) - sigma.ln() + ln_std_normal_cdf(alpha * z)
}

#[inline]
pub fn custom_log_density(beta: f64, mu: f64, sigma: f64, gamma: f64) -> f64 {
    let d = beta - mu;
    -(d * d) / (2.0 * sigma * sigma) * (gamma * d).exp()
}

/// Settings for fitting the parametric families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub fit_grid_lo: f64,
    pub fit_grid_hi: f64,
    /// Number of points in the fitting grid.
    pub fit_grid_steps: usize,
    /// Lower bound on the weight of any grid point.
    pub weight_floor: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            fit_grid_lo: LOG_HR_MIN,
            fit_grid_hi: LOG_HR_MAX,
            fit_grid_steps: 100,
            weight_floor: 1e-3,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fit_grid_lo < self.fit_grid_hi)
            || !self.fit_grid_lo.is_finite()
            || !self.fit_grid_hi.is_finite()
        {
            return Err(Error::InvalidConfig("fit grid needs lo < hi".into()));
        }
        if self.fit_grid_steps < 2 {
            return Err(Error::InvalidConfig(
                "fit grid needs at least 2 points".into(),
            ));
        }
        if !(self.weight_floor > 0.0 && self.weight_floor < 1.0) {
            return Err(Error::InvalidConfig(
                "weight floor must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn fit_grid(&self) -> Vec<f64> {
        linspace(self.fit_grid_lo, self.fit_grid_hi, self.fit_grid_steps)
    }
}

/// Normal approximation from the mode and Fisher information.
pub fn normal_from_mle(mle: &MleResult) -> Approximation {
    match mle {
        MleResult::Estimable {
            mode,
            fisher_information,
        } if *fisher_information > 0.0 => Approximation::Normal {
            mu: *mode,
            sigma: fisher_information.sqrt().recip(),
        },
        MleResult::Estimable { .. } => Approximation::NonEstimable {
            reason: "zero information".into(),
        },
        MleResult::NonEstimable { reason } => Approximation::NonEstimable {
            reason: reason.clone(),
        },
    }
}

/// Builds the approximation of `family` from a tabulated profile.
///
/// Parametric families are fitted on the configured fitting grid (the
/// profile is resampled onto it when its abscissae differ); grid payloads
/// are resampled onto the exchange grid.
pub fn approximate(
    profile: &LikelihoodProfile,
    mle: &MleResult,
    family: Family,
    config: &FitConfig,
) -> Result<Approximation> {
    config.validate()?;
    match family {
        Family::Normal => Ok(normal_from_mle(mle)),
        Family::Grid => Ok(Approximation::Grid(profile.resample(&exchange_grid())?)),
        Family::SkewNormal | Family::Custom => {
            let target = profile.resample(&config.fit_grid())?;
            let sigma_hint = mle.fisher_information().map(|i| i.sqrt().recip());
            fit_parametric(&target, family, sigma_hint, config).map(|fit| fit.approximation)
        }
    }
}

/// Runs the whole site-side pipeline for one family.
pub fn approximate_site(
    data: &SiteData,
    family: Family,
    config: &FitConfig,
) -> Result<Approximation> {
    let mle = cox_mle(data);
    let grid = match family {
        Family::Grid => exchange_grid(),
        _ => config.fit_grid(),
    };
    let profile = profile_likelihood(data, &grid)?;
    approximate(&profile, &mle, family, config)
}
