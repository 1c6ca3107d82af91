//! Small numeric helpers shared by the likelihood, fitting and sampling code.

use statrs::function::erf::erfc;
use std::f64::consts::{LN_2, SQRT_2};

/// 0.975 quantile of the standard normal.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// 0.95 quantile of the chi-square distribution with one degree of freedom.
pub const CHI2_1_95: f64 = 3.841_458_820_694_124;

/// ln(sqrt(2π))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Log of the standard normal density.
#[inline]
pub fn ln_std_normal_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Log of the standard normal CDF, accurate deep into the lower tail.
pub fn ln_std_normal_cdf(z: f64) -> f64 {
    if z > -30.0 {
        (0.5 * erfc(-z / SQRT_2)).ln()
    } else {
        // Asymptotic expansion of Mills' ratio.
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
        -0.5 * z2 - (-z).ln() - LN_SQRT_2PI + series.ln()
    }
}

/// Log density of N(mean, sd²) at x.
#[inline]
pub fn ln_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    ln_std_normal_pdf((x - mean) / sd) - sd.ln()
}

/// Log density of the half-normal distribution with the given scale, for x ≥ 0.
#[inline]
pub fn ln_half_normal_pdf(x: f64, scale: f64) -> f64 {
    if x < 0.0 {
        return f64::NEG_INFINITY;
    }
    LN_2 + ln_normal_pdf(x, 0.0, scale)
}

/// Numerically stable ln(e^a + e^b).
#[inline]
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}
