//! Weighted least-squares fitting of the skew-normal and custom families.
//!
//! Both the target and the candidate log densities are shifted so their
//! maxima over the fitting grid are 0; the comparison is then free of the
//! additive constants neither side cares about. Each grid point is
//! weighted by the target likelihood relative to its peak, floored at
//! `weight_floor`.

use super::simplex::{minimize, SimplexOptions};
use super::LikelihoodProfile;
use super::{custom_log_density, skew_normal_log_density, Approximation, Family, FitConfig};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MAX_RESTARTS: usize = 5;
const IMPROVEMENT_TOLERANCE: f64 = 1e-10;
const JITTER_SEED: u64 = 0x05ee_df17;

#[derive(Debug, Clone, PartialEq)]
pub struct ParametricFit {
    pub approximation: Approximation,
    /// Weighted sum of squares at the optimum.
    pub ss: f64,
    pub evaluations: usize,
}

pub(crate) fn fit_weights(target: &LikelihoodProfile, floor: f64) -> Vec<f64> {
    target
        .log_likelihood()
        .iter()
        .map(|&l| l.exp().max(floor))
        .collect()
}

struct Objective<'a> {
    grid: &'a [f64],
    target: &'a [f64],
    weights: Vec<f64>,
    family: Family,
}

impl Objective<'_> {
    fn model(&self, params: &[f64; 3], out: &mut [f64]) {
        let (mu, sigma, shape) = (params[0], params[1].exp(), params[2]);
        for (o, &b) in out.iter_mut().zip(self.grid) {
            *o = match self.family {
                Family::Custom => custom_log_density(b, mu, sigma, shape),
                _ => skew_normal_log_density(b, mu, sigma, shape),
            };
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for o in out.iter_mut() {
            *o -= max;
        }
    }

    fn ss(&self, params: &[f64; 3]) -> f64 {
        let mut model = vec![0.0; self.grid.len()];
        self.model(params, &mut model);
        let ss: f64 = model
            .iter()
            .zip(self.target)
            .zip(&self.weights)
            .map(|((m, t), w)| w * (t - m) * (t - m))
            .sum();
        if ss.is_finite() {
            ss
        } else {
            f64::INFINITY
        }
    }
}

/// Initial scale from the discrete curvature of the target at its peak.
fn curvature_sigma(target: &LikelihoodProfile) -> Option<f64> {
    let x = target.log_hr();
    let y = target.log_likelihood();
    let i = y.iter().position(|&v| v == 0.0)?;
    if i == 0 || i + 1 >= y.len() {
        return None;
    }
    let (h0, h1) = (x[i] - x[i - 1], x[i + 1] - x[i]);
    let second = 2.0 * (h0 * y[i + 1] - (h0 + h1) * y[i] + h1 * y[i - 1]) / (h0 * h1 * (h0 + h1));
    (second < 0.0).then(|| (-second).sqrt().recip())
}

fn jittered_axes(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    let mut axes = [[0.0; 3]; 3];
    for (i, axis) in axes.iter_mut().enumerate() {
        for (j, a) in axis.iter_mut().enumerate() {
            let base = if i == j { 1.0 } else { 0.0 };
            *a = base + rng.random_range(-0.3..0.3);
        }
    }
    axes
}

/// Fits `family` (skew-normal or custom) to a tabulated target profile.
///
/// `sigma_hint` seeds the scale, typically from the Fisher information;
/// without it the curvature of the target at its peak is used, then 1.
pub fn fit_parametric(
    target: &LikelihoodProfile,
    family: Family,
    sigma_hint: Option<f64>,
    config: &FitConfig,
) -> Result<ParametricFit> {
    if !matches!(family, Family::SkewNormal | Family::Custom) {
        return Err(Error::InvalidConfig(format!(
            "{family} is not a fitted family"
        )));
    }
    config.validate()?;
    let objective = Objective {
        grid: target.log_hr(),
        target: target.log_likelihood(),
        weights: fit_weights(target, config.weight_floor),
        family,
    };

    let sigma0 = sigma_hint
        .filter(|s| s.is_finite() && *s > 0.0)
        .or_else(|| curvature_sigma(target))
        .unwrap_or(1.0)
        .clamp(1e-3, 1e3);
    let start = [target.argmax(), sigma0.ln(), 0.0];
    let f = |p: &[f64; 3]| objective.ss(p);

    let options = SimplexOptions::default();
    let mut best = minimize(f, start, None, &options);
    let mut evaluations = best.evaluations;
    let mut any_converged = best.converged;
    let mut rng = ChaCha8Rng::seed_from_u64(JITTER_SEED);
    let mut restarts = 0;
    while restarts < MAX_RESTARTS {
        restarts += 1;
        let axes = jittered_axes(&mut rng);
        let next = minimize(f, best.x, Some(axes), &options);
        evaluations += next.evaluations;
        any_converged |= next.converged;
        let improvement = best.value - next.value;
        if next.value < best.value {
            best = next;
        }
        if improvement < IMPROVEMENT_TOLERANCE {
            break;
        }
    }

    let (mu, sigma, shape) = (best.x[0], best.x[1].exp(), best.x[2]);
    if !any_converged || !best.value.is_finite() {
        return Err(Error::FitDidNotConverge {
            params: [mu, sigma, shape],
            ss: best.value,
            restarts,
        });
    }
    let approximation = match family {
        Family::Custom => Approximation::Custom {
            mu,
            sigma,
            gamma: shape,
        },
        _ => Approximation::SkewNormal {
            mu,
            sigma,
            alpha: shape,
        },
    };
    Ok(ParametricFit {
        approximation,
        ss: best.value,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile_from<F: Fn(f64) -> f64>(f: F) -> LikelihoodProfile {
        let grid = FitConfig::default().fit_grid();
        let values = grid.iter().map(|&b| f(b)).collect();
        LikelihoodProfile::new(grid, values).unwrap()
    }

    #[test]
    fn weights_are_truncated_into_unit_interval() {
        let p = profile_from(|b| -(b - 0.2).powi(2) / (2.0 * 0.05f64.powi(2)));
        let w = fit_weights(&p, 1e-3);
        assert!(w.iter().all(|&w| (1e-3..=1.0).contains(&w)));
        assert!(w.contains(&1e-3));
        assert!(w.iter().any(|&w| w > 0.5));
    }

    #[test]
    fn custom_fit_recovers_exact_quadratic() {
        let p = profile_from(|b| -(b - 0.5).powi(2) / (2.0 * 0.09));
        let fit = fit_parametric(&p, Family::Custom, None, &FitConfig::default()).unwrap();
        match fit.approximation {
            Approximation::Custom { mu, sigma, gamma } => {
                assert!((mu - 0.5).abs() < 1e-4, "mu {mu}");
                assert!((sigma - 0.3).abs() < 1e-4, "sigma {sigma}");
                assert!(gamma.abs() < 1e-3, "gamma {gamma}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(fit.ss < 1e-8);
    }

    #[test]
    fn custom_fit_recovers_skewed_member() {
        let p = profile_from(|b| custom_log_density(b, 0.2, 0.4, 0.8));
        let fit = fit_parametric(&p, Family::Custom, None, &FitConfig::default()).unwrap();
        let Approximation::Custom { mu, sigma, gamma } = fit.approximation else {
            panic!()
        };
        assert!((mu - 0.2).abs() < 1e-3);
        assert!((sigma - 0.4).abs() < 1e-3);
        assert!((gamma - 0.8).abs() < 1e-3);
        assert!(fit.ss < 1e-8);
    }

    #[test]
    fn reflection_flips_location_and_skew() {
        let p = profile_from(|b| custom_log_density(b, 0.3, 0.5, -0.6));
        let reflected = profile_from(|b| custom_log_density(-b, 0.3, 0.5, -0.6));
        let cfg = FitConfig::default();
        let a = fit_parametric(&p, Family::Custom, None, &cfg).unwrap();
        let b = fit_parametric(&reflected, Family::Custom, None, &cfg).unwrap();
        let (
            Approximation::Custom {
                mu: m1,
                sigma: s1,
                gamma: g1,
            },
            Approximation::Custom {
                mu: m2,
                sigma: s2,
                gamma: g2,
            },
        ) = (a.approximation, b.approximation)
        else {
            panic!()
        };
        assert!((m1 + m2).abs() < 1e-3 && (s1 - s2).abs() < 1e-3 && (g1 + g2).abs() < 1e-3);
    }

    #[test]
    fn rejects_non_fitted_family() {
        let p = profile_from(|b| -b * b);
        assert!(fit_parametric(&p, Family::Grid, None, &FitConfig::default()).is_err());
    }

    #[test]
    fn flat_target_still_fits() {
        let p = profile_from(|_| 0.0);
        let fit = fit_parametric(&p, Family::Custom, None, &FitConfig::default()).unwrap();
        assert!(fit.ss < 1e-6);
    }
}
