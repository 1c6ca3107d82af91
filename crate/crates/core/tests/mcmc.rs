mod oracles;

use evsynth::approx::FitConfig;
use evsynth::random::{
    effective_sample_size, random_effects_estimate, run_chain, McmcConfig, RePriors,
};
use evsynth::simulation::{generate_rep_sites, site_approximations, ScenarioParams};
use evsynth::{Approximation, Family};
use oracles::*;

const PROBS: [f64; 3] = [0.025, 0.5, 0.975];

/// |empirical − analytic| in units of the quantile's Monte Carlo error.
fn quantile_z(samples: &[f64], p: f64, analytic: f64, density: f64) -> f64 {
    let ess = effective_sample_size(samples);
    (empirical_quantile(samples, p) - analytic).abs() / quantile_mcse(p, ess, density)
}

#[test]
fn prior_is_recovered_without_sites() {
    let priors = RePriors::default();
    let out = run_chain(&[], &priors, &McmcConfig::desk(7)).unwrap();
    assert_eq!(out.len(), 10_000);
    for p in PROBS {
        let q = normal_quantile(p, 0.0, 2.0);
        let z = quantile_z(&out.mu, p, q, normal_density(q, 0.0, 2.0));
        assert!(z < 3.0, "mu q{p}: z = {z}");
        let q = half_normal_quantile(p, 0.5);
        let z = quantile_z(&out.tau, p, q, half_normal_density(q, 0.5));
        assert!(z < 3.0, "tau q{p}: z = {z}");
    }
    let mean = out.mu.iter().sum::<f64>() / out.len() as f64;
    let sd = (out.mu.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / out.len() as f64).sqrt();
    assert!(mean.abs() < 0.05, "mean {mean}");
    assert!((sd - 2.0).abs() < 0.05, "sd {sd}");
    let median_tau = empirical_quantile(&out.tau, 0.5);
    assert!((median_tau - 0.337).abs() < 0.02, "{median_tau}");
}

#[test]
fn tight_tau_prior_gives_conjugate_posterior() {
    let priors = RePriors {
        mu_prior_sd: 2.0,
        tau_prior_scale: 1e-4,
    };
    let site = [Approximation::Normal {
        mu: 0.4,
        sigma: 0.1,
    }];
    let out = run_chain(&site, &priors, &McmcConfig::desk(8)).unwrap();
    let v = 1.0 / (1.0 / 4.0 + 1.0 / 0.01);
    let m = v * 0.4 / 0.01;
    for p in PROBS {
        let q = normal_quantile(p, m, v.sqrt());
        let z = quantile_z(&out.mu, p, q, normal_density(q, m, v.sqrt()));
        assert!(z < 3.0, "q{p}: z = {z}");
    }
}

#[test]
fn symmetric_sites_centre_on_zero() {
    let sites = [
        Approximation::Normal {
            mu: 0.0,
            sigma: 0.3,
        },
        Approximation::Normal {
            mu: 0.0,
            sigma: 0.3,
        },
    ];
    let out = run_chain(&sites, &RePriors::default(), &McmcConfig::desk(9)).unwrap();
    let sd = {
        let mean = out.mu.iter().sum::<f64>() / out.len() as f64;
        (out.mu.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / out.len() as f64).sqrt()
    };
    let median = empirical_quantile(&out.mu, 0.5);
    let mcse = quantile_mcse(
        0.5,
        effective_sample_size(&out.mu),
        normal_density(0.0, 0.0, sd),
    );
    assert!(median.abs() < 3.0 * mcse, "{median} vs {mcse}");
}

#[test]
fn chains_are_reproducible_and_freeze_adaptation() {
    let sites = [
        Approximation::Custom {
            mu: 0.3,
            sigma: 0.4,
            gamma: 0.2,
        },
        Approximation::SkewNormal {
            mu: -0.2,
            sigma: 0.5,
            alpha: 1.0,
        },
    ];
    let config = McmcConfig::desk(10);
    let a = run_chain(&sites, &RePriors::default(), &config).unwrap();
    let b = run_chain(&sites, &RePriors::default(), &config).unwrap();
    assert_eq!(a, b);
    assert!(a.scales.iter().all(|s| *s == a.scales_after_burn_in));
    let other = run_chain(&sites, &RePriors::default(), &McmcConfig::desk(11)).unwrap();
    assert_ne!(a.mu, other.mu);
}

#[test]
fn simulated_sites_mix_well_at_desk_scale() {
    let params = ScenarioParams {
        treated_fraction: 0.25,
        hazard_ratio: 2.0,
        n_sites: 10,
        max_n: 5000,
        n_strata: 5,
        tau: 0.25,
        n_reps: 1,
        seed: 5,
        baseline_hazard_min: 1e-5,
        baseline_hazard_max: 1e-4,
        ..Default::default()
    };
    let sites = generate_rep_sites(&params, 0).unwrap();
    let families = [Family::Grid, Family::Custom];
    for (family, approxs) in site_approximations(&sites, &families, &FitConfig::default()).unwrap()
    {
        let s =
            random_effects_estimate(&approxs, &RePriors::default(), &McmcConfig::desk(3)).unwrap();
        assert!(s.ess_mu >= 1000.0, "{family}: ess {}", s.ess_mu);
        assert!(s.hdi_lo <= s.mu_median && s.mu_median <= s.hdi_hi);
    }
}
