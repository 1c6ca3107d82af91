//! Simulation harness: synthetic multi-site studies, every synthesis
//! method, and the coverage / bias / MSE / precision / non-estimable
//! metrics.
//!
//! Replicate `r` of a scenario draws from its own RNG stream derived from
//! (seed, r), so results do not depend on scheduling or worker count.

mod generate;
mod output;

pub use generate::generate_site;
pub use output::{metrics_csv, read_reps_csv, reps_csv, METRICS_HEADER, REPS_HEADER};

use crate::approx::{
    approximate, exchange_grid, normal_from_mle, Approximation, Family, FitConfig,
};
use crate::baseline::{dersimonian_laird, inverse_variance_fixed, summaries_from};
use crate::cox::{cox_mle, profile_likelihood, MleResult, SiteData};
use crate::error::{Error, Result};
use crate::fixed::fixed_effect_estimate;
use crate::random::{random_effects_estimate, McmcConfig, RePriors};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub treated_fraction: f64,
    /// True (mean) hazard ratio.
    pub hazard_ratio: f64,
    pub n_sites: usize,
    pub max_n: usize,
    pub n_strata: usize,
    /// Standard deviation of the site log hazard ratios.
    pub tau: f64,
    pub n_reps: usize,
    pub seed: u64,
    /// Per-day baseline hazards are log-uniform over this range.
    pub baseline_hazard_min: f64,
    pub baseline_hazard_max: f64,
    pub follow_up_days: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            treated_fraction: 0.5,
            hazard_ratio: 1.0,
            n_sites: 5,
            max_n: 20_000,
            n_strata: 5,
            tau: 0.0,
            n_reps: 1000,
            seed: 1,
            baseline_hazard_min: 1e-4,
            baseline_hazard_max: 1e-2,
            follow_up_days: 365.0,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.treated_fraction > 0.0 && self.treated_fraction < 1.0) {
            return fail("treated_fraction must lie in (0, 1)");
        }
        if !(self.hazard_ratio > 0.0 && self.hazard_ratio.is_finite()) {
            return fail("hazard_ratio must be positive");
        }
        if self.n_sites < 1 || self.n_strata < 1 || self.n_reps < 1 {
            return fail("n_sites, n_strata and n_reps must be at least 1");
        }
        if self.max_n < 1000 {
            return fail("max_n must be at least 1000");
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return fail("tau must be non-negative");
        }
        if !(self.baseline_hazard_min > 0.0 && self.baseline_hazard_min <= self.baseline_hazard_max)
        {
            return fail("baseline hazard range must be positive and ordered");
        }
        if !(self.follow_up_days > 0.0 && self.follow_up_days.is_finite()) {
            return fail("follow_up_days must be positive");
        }
        Ok(())
    }

    pub fn true_log_hr(&self) -> f64 {
        self.hazard_ratio.ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Fixed(Family),
    Random(Family),
    TraditionalFixed,
    TraditionalRandom,
}

impl Method {
    pub fn all() -> Vec<Method> {
        let mut m: Vec<Method> = Family::ALL.iter().map(|&f| Method::Fixed(f)).collect();
        m.extend(Family::ALL.iter().map(|&f| Method::Random(f)));
        m.push(Method::TraditionalFixed);
        m.push(Method::TraditionalRandom);
        m
    }

    pub fn fixed_only() -> Vec<Method> {
        let mut m: Vec<Method> = Family::ALL.iter().map(|&f| Method::Fixed(f)).collect();
        m.push(Method::TraditionalFixed);
        m.push(Method::TraditionalRandom);
        m
    }

    fn family(&self) -> Family {
        match self {
            Method::Fixed(f) | Method::Random(f) => *f,
            Method::TraditionalFixed | Method::TraditionalRandom => Family::Normal,
        }
    }

    fn index(&self) -> u64 {
        Method::all().iter().position(|m| m == self).unwrap_or(0) as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Fixed(fam) => write!(f, "fixed-{fam}"),
            Method::Random(fam) => write!(f, "random-{fam}"),
            Method::TraditionalFixed => f.write_str("traditional-fixed"),
            Method::TraditionalRandom => f.write_str("traditional-random"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "traditional-fixed" => return Ok(Method::TraditionalFixed),
            "traditional-random" => return Ok(Method::TraditionalRandom),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("fixed-") {
            return rest.parse().map(Method::Fixed);
        }
        if let Some(rest) = s.strip_prefix("random-") {
            return rest.parse().map(Method::Random);
        }
        Err(Error::InvalidConfig(format!("unknown method '{s}'")))
    }
}

/// One method's answer on one replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepEstimate {
    pub estimate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepRecord {
    pub rep: usize,
    pub method: Method,
    pub estimate: Option<RepEstimate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub coverage: f64,
    pub bias: f64,
    pub mse: f64,
    pub precision: f64,
    pub non_estimable: f64,
}

/// Computes the five metrics for one method from its per-rep estimates.
/// Bias, MSE, coverage and precision use estimable reps only.
pub fn compute_metrics(true_log_hr: f64, estimates: &[Option<RepEstimate>]) -> ScenarioMetrics {
    let total = estimates.len();
    let mut n = 0usize;
    let (mut covered, mut err, mut sq, mut log_precision) = (0usize, 0.0, 0.0, 0.0);
    for e in estimates.iter().flatten() {
        n += 1;
        if e.ci_lo <= true_log_hr && true_log_hr <= e.ci_hi {
            covered += 1;
        }
        let d = e.estimate - true_log_hr;
        err += d;
        sq += d * d;
        log_precision += -2.0 * e.se.ln();
    }
    let nf = n as f64;
    let or_nan = |v: f64| if n == 0 { f64::NAN } else { v };
    ScenarioMetrics {
        coverage: or_nan(covered as f64 / nf),
        bias: or_nan(err / nf),
        mse: or_nan(sq / nf),
        precision: or_nan((log_precision / nf).exp()),
        non_estimable: if total == 0 {
            f64::NAN
        } else {
            (total - n) as f64 / total as f64
        },
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOptions {
    pub mcmc: McmcConfig,
    pub priors: RePriors,
    pub fit: FitConfig,
    /// Worker threads; `None` uses rayon's default.
    pub jobs: Option<usize>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            mcmc: McmcConfig::desk(0),
            priors: RePriors::default(),
            fit: FitConfig::default(),
            jobs: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub params: ScenarioParams,
    pub metrics: Vec<(Method, ScenarioMetrics)>,
    /// Rep-major, methods in request order.
    pub reps: Vec<RepRecord>,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn rep_rng(seed: u64, rep: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep as u64);
    rng
}

/// Draws the site effects and simulates every site of replicate `rep`.
pub fn generate_rep_sites(params: &ScenarioParams, rep: usize) -> Result<Vec<SiteData>> {
    params.validate()?;
    let mut rng = rep_rng(params.seed, rep);
    let thetas: Vec<f64> = (0..params.n_sites)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            params.true_log_hr() + params.tau * z
        })
        .collect();
    thetas
        .iter()
        .enumerate()
        .map(|(i, &theta)| generate_site(params, theta, format!("site-{}", i + 1), &mut rng))
        .collect()
}

/// Gold standard available only in simulation: one stratified Cox model
/// over the concatenated records, strata crossed with sites.
pub fn pooled_cox_estimate(sites: &[SiteData]) -> Result<MleResult> {
    Ok(cox_mle(&SiteData::pooled("pooled", sites)?))
}

/// Builds each site's approximation for `family`. A parametric fit that
/// exhausts its budget still yields its best parameters.
pub fn site_approximations(
    sites: &[SiteData],
    families: &[Family],
    fit: &FitConfig,
) -> Result<Vec<(Family, Vec<Approximation>)>> {
    let exchange = exchange_grid();
    let fit_grid = fit.fit_grid();
    let needs_fit_profile = families
        .iter()
        .any(|f| matches!(f, Family::SkewNormal | Family::Custom));
    let mut per_family: Vec<(Family, Vec<Approximation>)> = families
        .iter()
        .map(|&f| (f, Vec::with_capacity(sites.len())))
        .collect();
    for site in sites {
        let mle = cox_mle(site);
        let fit_profile = if needs_fit_profile {
            Some(profile_likelihood(site, &fit_grid)?)
        } else {
            None
        };
        for (family, approxs) in per_family.iter_mut() {
            let approximation = match family {
                Family::Grid => {
                    let profile = profile_likelihood(site, &exchange)?;
                    approximate(&profile, &mle, Family::Grid, fit)?
                }
                Family::Normal => normal_from_mle(&mle),
                parametric => {
                    let profile = fit_profile.as_ref().expect("fit profile computed");
                    match approximate(profile, &mle, *parametric, fit) {
                        Ok(a) => a,
                        Err(Error::FitDidNotConverge { params, .. }) => {
                            best_effort(*parametric, params)
                        }
                        Err(e) => return Err(e),
                    }
                }
            };
            approxs.push(approximation);
        }
    }
    Ok(per_family)
}

fn best_effort(family: Family, [mu, sigma, shape]: [f64; 3]) -> Approximation {
    match family {
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
    }
}

fn run_method(
    method: Method,
    approxs: &[Approximation],
    options: &SimulationOptions,
    seed: u64,
) -> Option<RepEstimate> {
    match method {
        Method::Fixed(_) => {
            let e = fixed_effect_estimate(approxs).ok()?;
            (!e.at_boundary()).then_some(RepEstimate {
                estimate: e.log_hr,
                ci_lo: e.ci_lo,
                ci_hi: e.ci_hi,
                se: e.se,
            })
        }
        Method::Random(_) => {
            let config = McmcConfig {
                seed,
                ..options.mcmc
            };
            let s = random_effects_estimate(approxs, &options.priors, &config).ok()?;
            Some(RepEstimate {
                estimate: s.mu_median,
                ci_lo: s.hdi_lo,
                ci_hi: s.hdi_hi,
                se: s.se_proxy,
            })
        }
        Method::TraditionalFixed | Method::TraditionalRandom => {
            let (summaries, _) = summaries_from(approxs);
            let e = if method == Method::TraditionalFixed {
                inverse_variance_fixed(&summaries)
            } else {
                dersimonian_laird(&summaries)
            }
            .ok()?;
            Some(RepEstimate {
                estimate: e.log_hr,
                ci_lo: e.ci_lo,
                ci_hi: e.ci_hi,
                se: e.se,
            })
        }
    }
}

/// Runs every requested method on replicate `rep`, sharing the site
/// approximations between methods.
pub fn run_rep(
    params: &ScenarioParams,
    methods: &[Method],
    rep: usize,
    options: &SimulationOptions,
) -> Result<Vec<RepRecord>> {
    let sites = generate_rep_sites(params, rep)?;
    let mut families: Vec<Family> = Vec::new();
    for m in methods {
        if !families.contains(&m.family()) {
            families.push(m.family());
        }
    }
    let approxs = site_approximations(&sites, &families, &options.fit)?;
    Ok(methods
        .iter()
        .map(|&method| {
            let site_approxs = &approxs
                .iter()
                .find(|(f, _)| *f == method.family())
                .expect("family computed")
                .1;
            let seed = mix(params.seed ^ mix(rep as u64) ^ mix(method.index() + 1));
            RepRecord {
                rep,
                method,
                estimate: run_method(method, site_approxs, options, seed),
            }
        })
        .collect())
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidConfig(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Per-method metrics from rep records (rep-major order).
pub fn metrics_from_reps(
    params: &ScenarioParams,
    methods: &[Method],
    reps: &[RepRecord],
) -> Vec<(Method, ScenarioMetrics)> {
    methods
        .iter()
        .map(|&m| {
            let estimates: Vec<Option<RepEstimate>> = reps
                .iter()
                .filter(|r| r.method == m)
                .map(|r| r.estimate)
                .collect();
            (m, compute_metrics(params.true_log_hr(), &estimates))
        })
        .collect()
}

/// Runs all replicates of a scenario, in parallel across reps.
pub fn run_scenario(
    params: &ScenarioParams,
    methods: &[Method],
    options: &SimulationOptions,
) -> Result<ScenarioResult> {
    params.validate()?;
    options.fit.validate()?;
    options.priors.validate()?;
    if methods.iter().any(|m| matches!(m, Method::Random(_))) {
        options.mcmc.validate()?;
    }
    let per_rep: Vec<Result<Vec<RepRecord>>> = with_pool(options.jobs, || {
        (0..params.n_reps)
            .into_par_iter()
            .map(|rep| run_rep(params, methods, rep, options))
            .collect()
    })?;
    let mut reps = Vec::with_capacity(params.n_reps * methods.len());
    for r in per_rep {
        reps.extend(r?);
    }
    Ok(ScenarioResult {
        params: *params,
        metrics: metrics_from_reps(params, methods, &reps),
        reps,
    })
}

/// Full factorial grid of scenario parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioGrid {
    pub treated_fraction: Vec<f64>,
    pub hazard_ratio: Vec<f64>,
    pub n_sites: Vec<usize>,
    pub max_n: Vec<usize>,
    pub n_strata: Vec<usize>,
    pub tau: Vec<f64>,
    pub n_reps: usize,
    pub baseline_hazard_min: f64,
    pub baseline_hazard_max: f64,
    pub follow_up_days: f64,
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        Self::fixed_effects()
    }
}

impl ScenarioGrid {
    pub fn fixed_effects() -> Self {
        Self {
            treated_fraction: vec![0.05, 0.1, 0.25, 0.5],
            hazard_ratio: vec![1.0, 2.0, 4.0],
            n_sites: vec![3, 5, 10, 20],
            max_n: vec![2000, 20_000, 200_000],
            n_strata: vec![1, 5, 10],
            tau: vec![0.0],
            n_reps: 1000,
            baseline_hazard_min: 1e-4,
            baseline_hazard_max: 1e-2,
            follow_up_days: 365.0,
        }
    }

    pub fn random_effects() -> Self {
        Self {
            tau: vec![0.25, 0.5],
            ..Self::fixed_effects()
        }
    }

    /// Expands the grid; scenario `i` gets a seed derived from (seed, i).
    pub fn expand(&self, seed: u64) -> Vec<ScenarioParams> {
        let mut out = Vec::new();
        for &treated_fraction in &self.treated_fraction {
            for &hazard_ratio in &self.hazard_ratio {
                for &n_sites in &self.n_sites {
                    for &max_n in &self.max_n {
                        for &n_strata in &self.n_strata {
                            for &tau in &self.tau {
                                let index = out.len() as u64;
                                out.push(ScenarioParams {
                                    treated_fraction,
                                    hazard_ratio,
                                    n_sites,
                                    max_n,
                                    n_strata,
                                    tau,
                                    n_reps: self.n_reps,
                                    seed: mix(seed ^ mix(index)),
                                    baseline_hazard_min: self.baseline_hazard_min,
                                    baseline_hazard_max: self.baseline_hazard_max,
                                    follow_up_days: self.follow_up_days,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
