//! Bayesian random-effects synthesis.
//!
//! Model: θ_n ~ N(μ, τ²) for each usable site n, site likelihood given by
//! its approximation, μ ~ N(0, mu_prior_sd²), τ ~ HalfNormal(tau_prior_scale).
//! The posterior is sampled with a random-scan Metropolis-within-Gibbs chain
//! (see [`run_chain`]) and reduced to a median, a 95% highest density
//! interval and a normal-theory standard error proxy (see [`summarize`]).

mod chain;
mod summary;

pub use chain::{run_chain, ChainOutput};
pub use summary::{effective_sample_size, hdi, median, summarize, PosteriorSummary};

use crate::approx::Approximation;
use crate::error::{Error, Result};
use crate::fixed::usable_sorted;
use crate::special::{ln_half_normal_pdf, ln_normal_pdf};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RePriors {
    pub mu_prior_sd: f64,
    pub tau_prior_scale: f64,
}

impl Default for RePriors {
    fn default() -> Self {
        Self {
            mu_prior_sd: 2.0,
            tau_prior_scale: 0.5,
        }
    }
}

impl RePriors {
    pub fn validate(&self) -> Result<()> {
        if self.mu_prior_sd > 0.0 && self.tau_prior_scale > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidConfig("prior scales must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Number of single-block updates, burn-in included.
    pub total_steps: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub seed: u64,
    pub target_acceptance: f64,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            total_steps: 1_100_000,
            burn_in: 100_000,
            thin: 100,
            seed: 1,
            target_acceptance: 0.44,
        }
    }
}

impl McmcConfig {
    /// A tenth of the default budget at the same number of retained samples.
    pub fn desk(seed: u64) -> Self {
        Self {
            total_steps: 110_000,
            burn_in: 10_000,
            thin: 10,
            seed,
            ..Self::default()
        }
    }

    pub fn retained(&self) -> u64 {
        self.total_steps.saturating_sub(self.burn_in) / self.thin.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.burn_in >= self.total_steps {
            return Err(Error::InvalidConfig(
                "burn-in must be shorter than the chain".into(),
            ));
        }
        if self.thin < 1 {
            return Err(Error::InvalidConfig(
                "thinning interval must be at least 1".into(),
            ));
        }
        if self.retained() < 100 {
            return Err(Error::InvalidConfig(format!(
                "chain retains {} samples, at least 100 are needed",
                self.retained()
            )));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::InvalidConfig(
                "target acceptance must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub mu: f64,
    pub tau: f64,
    pub thetas: Vec<f64>,
}

/// Site log likelihood at θ; points outside a grid's range have zero
/// likelihood.
#[inline]
pub(crate) fn site_log_likelihood(a: &Approximation, theta: f64) -> f64 {
    a.log_density(theta).unwrap_or(f64::NEG_INFINITY)
}

/// Unnormalized log posterior of a full state. `approxs` must hold one
/// usable approximation per entry of `state.thetas`.
pub fn log_posterior(state: &ChainState, approxs: &[Approximation], priors: &RePriors) -> f64 {
    if !(state.tau > 0.0) || approxs.len() != state.thetas.len() {
        return f64::NEG_INFINITY;
    }
    let prior = ln_normal_pdf(state.mu, 0.0, priors.mu_prior_sd)
        + ln_half_normal_pdf(state.tau, priors.tau_prior_scale);
    let sites: f64 = state
        .thetas
        .iter()
        .zip(approxs)
        .map(|(&theta, a)| {
            ln_normal_pdf(theta, state.mu, state.tau) + site_log_likelihood(a, theta)
        })
        .sum();
    prior + sites
}

/// Runs the chain on the usable approximations and summarizes μ.
pub fn random_effects_estimate(
    approxs: &[Approximation],
    priors: &RePriors,
    config: &McmcConfig,
) -> Result<PosteriorSummary> {
    random_effects_chain(approxs, priors, config).map(|(summary, _)| summary)
}

/// As [`random_effects_estimate`], also returning the chain. Site effects
/// in the chain follow the canonical site order, not the input order.
pub fn random_effects_chain(
    approxs: &[Approximation],
    priors: &RePriors,
    config: &McmcConfig,
) -> Result<(PosteriorSummary, ChainOutput)> {
    let usable: Vec<Approximation> = usable_sorted(approxs).into_iter().cloned().collect();
    if usable.is_empty() {
        return Err(Error::NonEstimable("no usable site approximations".into()));
    }
    let output = run_chain(&usable, priors, config)?;
    let mut summary = summarize(&output)?;
    summary.n_sites_used = usable.len();
    summary.n_sites_dropped = approxs.len() - usable.len();
    Ok((summary, output))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn prior_only_log_posterior() {
        let state = ChainState {
            mu: 0.0,
            tau: 0.5,
            thetas: vec![],
        };
        let expected = -0.5 * (8.0 * PI).ln() + (2f64.ln() - 0.5 * (PI / 2.0).ln() - 0.5);
        let got = log_posterior(&state, &[], &RePriors::default());
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn flat_grid_sites_leave_only_prior_terms() {
        let grid = crate::approx::exchange_grid();
        let flat =
            crate::approx::LikelihoodProfile::new(grid.clone(), vec![0.0; grid.len()]).unwrap();
        let approxs = vec![Approximation::Grid(flat.clone()), Approximation::Grid(flat)];
        let state = ChainState {
            mu: 0.3,
            tau: 0.4,
            thetas: vec![0.1, -0.5],
        };
        let priors = RePriors::default();
        let expected = ln_normal_pdf(0.3, 0.0, 2.0)
            + ln_half_normal_pdf(0.4, 0.5)
            + ln_normal_pdf(0.1, 0.3, 0.4)
            + ln_normal_pdf(-0.5, 0.3, 0.4);
        assert!((log_posterior(&state, &approxs, &priors) - expected).abs() < 1e-12);

        let outside = ChainState {
            thetas: vec![3.0, 0.0],
            ..state
        };
        assert_eq!(
            log_posterior(&outside, &approxs, &priors),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn joint_shift_changes_only_mu_prior_and_site_terms() {
        let approxs = vec![Approximation::Normal {
            mu: 0.4,
            sigma: 0.2,
        }];
        let priors = RePriors::default();
        let a = ChainState {
            mu: 0.1,
            tau: 0.3,
            thetas: vec![0.25],
        };
        let shift = 0.35;
        let b = ChainState {
            mu: a.mu + shift,
            tau: a.tau,
            thetas: vec![a.thetas[0] + shift],
        };
        let diff = log_posterior(&b, &approxs, &priors) - log_posterior(&a, &approxs, &priors);
        let expected = (ln_normal_pdf(b.mu, 0.0, 2.0) - ln_normal_pdf(a.mu, 0.0, 2.0))
            + (-(b.thetas[0] - 0.4f64).powi(2) / 0.08 + (a.thetas[0] - 0.4f64).powi(2) / 0.08);
        assert!((diff - expected).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(McmcConfig::default().validate().is_ok());
        assert!(McmcConfig::desk(3).validate().is_ok());
        assert_eq!(McmcConfig::desk(3).retained(), 10_000);
        assert_eq!(McmcConfig::default().retained(), 10_000);
        let bad = McmcConfig {
            burn_in: 200,
            total_steps: 100,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let few = McmcConfig {
            total_steps: 1000,
            burn_in: 500,
            thin: 10,
            ..Default::default()
        };
        assert!(few.validate().is_err());
        assert!(RePriors {
            mu_prior_sd: 0.0,
            tau_prior_scale: 1.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn no_usable_sites_is_non_estimable() {
        let a = [Approximation::NonEstimable {
            reason: "zero events in one arm".into(),
        }];
        let r = random_effects_estimate(&a, &RePriors::default(), &McmcConfig::desk(1));
        assert!(matches!(r, Err(Error::NonEstimable(_))));
    }
}
