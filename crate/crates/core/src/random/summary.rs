use super::ChainOutput;
use crate::error::{Error, Result};
use crate::special::Z_975;
use serde::{Deserialize, Serialize};

const MIN_SAMPLES: usize = 100;
const SE_PROXY_FLOOR: f64 = 1e-6;
const HDI_MASS: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mu_median: f64,
    pub hdi_lo: f64,
    pub hdi_hi: f64,
    pub se_proxy: f64,
    pub tau_median: f64,
    pub ess_mu: f64,
    #[serde(default)]
    pub n_sites_used: usize,
    #[serde(default)]
    pub n_sites_dropped: usize,
}

pub fn median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Shortest interval spanning ⌈mass·S⌉ sorted samples.
pub fn hdi(samples: &[f64], mass: f64) -> (f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let k = ((mass * n as f64).ceil() as usize).clamp(1, n);
    let (start, _) =
        (0..=n - k)
            .map(|i| (i, s[i + k - 1] - s[i]))
            .fold(
                (0, f64::INFINITY),
                |best, (i, w)| if w < best.1 { (i, w) } else { best },
            );
    (s[start], s[start + k - 1])
}

/// Effective sample size with Geyer's initial positive sequence truncation.
pub fn effective_sample_size(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return n as f64;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = samples.iter().map(|x| x - mean).collect();
    let variance = centered.iter().map(|x| x * x).sum::<f64>() / n as f64;
    if variance == 0.0 {
        return n as f64;
    }
    let autocorrelation = |lag: usize| {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * variance)
    };
    let mut sum_pairs = 0.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = autocorrelation(lag) + autocorrelation(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sum_pairs += pair;
        lag += 2;
    }
    let integrated = (-1.0 + 2.0 * sum_pairs).max(1.0 / n as f64);
    n as f64 / integrated
}

/// Posterior summary of μ (and the median of τ) from a chain.
pub fn summarize(chain: &ChainOutput) -> Result<PosteriorSummary> {
    if chain.len() < MIN_SAMPLES {
        return Err(Error::InvalidConfig(format!(
            "{} retained samples, at least {MIN_SAMPLES} are needed",
            chain.len()
        )));
    }
    let mu_median = median(&chain.mu);
    let (hdi_lo, hdi_hi) = hdi(&chain.mu, HDI_MASS);
    Ok(PosteriorSummary {
        mu_median,
        hdi_lo: hdi_lo.min(mu_median),
        hdi_hi: hdi_hi.max(mu_median),
        se_proxy: ((hdi_hi - hdi_lo) / (2.0 * Z_975)).max(SE_PROXY_FLOOR),
        tau_median: median(&chain.tau),
        ess_mu: effective_sample_size(&chain.mu),
        n_sites_used: chain.thetas.first().map_or(0, Vec::len),
        n_sites_dropped: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn chain_of(mu: Vec<f64>) -> ChainOutput {
        let n = mu.len();
        ChainOutput {
            steps: (0..n as u64).collect(),
            tau: vec![0.5; n],
            thetas: vec![vec![]; n],
            scales: vec![vec![]; n],
            mu,
            scales_after_burn_in: vec![],
            acceptance: vec![],
        }
    }

    #[test]
    fn uniform_grid_hdi_width() {
        let n = 1001;
        let s: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let (lo, hi) = hdi(&s, 0.95);
        let spacing = 1.0 / (n - 1) as f64;
        assert!(((hi - lo) - 0.95).abs() <= spacing + 1e-12);
    }

    #[test]
    fn normal_hdi_close_to_analytic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s: Vec<f64> = (0..200_000)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let (lo, hi) = hdi(&s, 0.95);
        // Endpoint standard error at this size is about 0.006.
        assert!(
            (lo + 1.959964).abs() < 0.03 && (hi - 1.959964).abs() < 0.03,
            "{lo} {hi}"
        );
        let ess = effective_sample_size(&s);
        assert!(ess > 160_000.0 && ess < 240_000.0, "{ess}");
    }

    #[test]
    fn constant_chain_gets_floor() {
        let summary = summarize(&chain_of(vec![0.7; 500])).unwrap();
        assert_eq!(
            (summary.hdi_lo, summary.mu_median, summary.hdi_hi),
            (0.7, 0.7, 0.7)
        );
        assert_eq!(summary.se_proxy, SE_PROXY_FLOOR);
        assert!(summary.ess_mu > 0.0);
    }

    #[test]
    fn too_few_samples() {
        assert!(summarize(&chain_of(vec![0.0; 99])).is_err());
    }

    #[test]
    fn ess_drops_for_correlated_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = 0.0;
        let s: Vec<f64> = (0..10_000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = 0.9 * x + z;
                x
            })
            .collect();
        // AR(1) with φ = 0.9: n (1-φ)/(1+φ) ≈ 526.
        let ess = effective_sample_size(&s);
        assert!(ess > 350.0 && ess < 750.0, "{ess}");
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
