//! Scalar special functions used by the densities and samplers.

use statrs::function::beta::inv_beta_reg;
use statrs::function::erf::{erfc, erfc_inv};

pub use statrs::function::gamma::ln_gamma;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// log of the standard normal density.
#[inline]
pub fn log_norm_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    log_norm_pdf(x).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// log Φ(x), accurate deep into the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -20.0 {
        if x > 6.0 {
            // Φ(x) = 1 - Q(x) with Q tiny
            return (-0.5 * erfc(x / std::f64::consts::SQRT_2)).ln_1p();
        }
        return norm_cdf(x).ln();
    }
    // Asymptotic Mills-ratio series: Φ(x) ~ φ(x)/|x| (1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸ - ...)
    let z = 1.0 / (x * x);
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..8 {
        term *= -((2 * k - 1) as f64) * z;
        sum += term;
    }
    log_norm_pdf(x) - (-x).ln() + sum.ln()
}

/// log(Φ(a) - Φ(b)) for a > b.
pub fn log_norm_cdf_diff(a: f64, b: f64) -> f64 {
    if a <= b {
        return f64::NEG_INFINITY;
    }
    let width = a - b;
    if width < 1e-3 {
        // midpoint rule with its leading correction
        let m = 0.5 * (a + b);
        let corr = 1.0 + width * width * (m * m - 1.0) / 24.0;
        return width.ln() + log_norm_pdf(m) + corr.ln();
    }
    if b > 0.0 {
        // use upper tails: Q(b) - Q(a)
        let lb = log_norm_cdf(-b);
        let la = log_norm_cdf(-a);
        lb + (-(la - lb).exp()).ln_1p()
    } else {
        let la = log_norm_cdf(a);
        let lb = log_norm_cdf(b);
        la + (-(lb - la).exp()).ln_1p()
    }
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Quantile of the standard Student's t distribution with `nu` degrees of freedom.
pub fn student_t_quantile(p: f64, nu: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    let (tail, sign) = if p < 0.5 { (p, -1.0) } else { (1.0 - p, 1.0) };
    // P(T < -t) = 0.5 I_{nu/(nu+t²)}(nu/2, 1/2)
    let x = inv_beta_reg(0.5 * nu, 0.5, 2.0 * tail);
    if x <= 0.0 {
        return sign * f64::INFINITY;
    }
    sign * (nu * (1.0 - x) / x).sqrt()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Normalized softmax weights of `values`, written in place.
pub fn softmax_in_place(values: &mut [f64]) -> f64 {
    let lse = log_sum_exp(values);
    for v in values.iter_mut() {
        *v = (*v - lse).exp();
    }
    lse
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_cdf_matches_direct_in_moderate_range() {
        for &x in &[-15.0, -5.0, -1.0, 0.0, 2.0, 7.0] {
            assert_relative_eq!(log_norm_cdf(x), norm_cdf(x).ln(), max_relative = 1e-12);
        }
    }

    #[test]
    fn log_cdf_is_continuous_at_series_switch() {
        let left = log_norm_cdf(-20.0 - 1e-13);
        let right = log_norm_cdf(-20.0 + 1e-13);
        assert_relative_eq!(left, right, max_relative = 1e-10);
        // known value: log Φ(-40) = -804.608442013754...
        assert_relative_eq!(log_norm_cdf(-40.0), -804.608_442_013_754, max_relative = 1e-12);
    }

    #[test]
    fn cdf_diff_agrees_with_subtraction() {
        for &(a, b) in &[(1.0, -1.0), (3.0, 2.0), (-2.0, -3.0), (0.5, 0.4999)] {
            let direct = (norm_cdf(a) - norm_cdf(b)).ln();
            assert_relative_eq!(log_norm_cdf_diff(a, b), direct, max_relative = 1e-9);
        }
        // upper-tail branch stays finite where subtraction underflows
        assert!(log_norm_cdf_diff(45.0, 40.0).is_finite());
    }

    #[test]
    fn quantiles_invert_cdf() {
        for &p in &[1e-6, 0.01, 0.3, 0.5, 0.9, 0.999] {
            assert_relative_eq!(norm_cdf(norm_quantile(p)), p, max_relative = 1e-10);
        }
        // t with 1 dof is Cauchy: quantile tan(pi (p - 1/2))
        for &p in &[0.05, 0.3, 0.7, 0.99] {
            let exact = (std::f64::consts::PI * (p - 0.5)).tan();
            assert_relative_eq!(student_t_quantile(p, 1.0), exact, max_relative = 1e-9);
        }
        // t with 2 dof: (2p - 1) / sqrt(2 p (1 - p))
        for &p in &[0.1f64, 0.6, 0.95] {
            let exact = (2.0 * p - 1.0) / (2.0 * p * (1.0 - p)).sqrt();
            assert_relative_eq!(student_t_quantile(p, 2.0), exact, max_relative = 1e-9);
        }
    }

    #[test]
    fn log_sum_exp_handles_large_offsets() {
        assert_relative_eq!(log_sum_exp(&[1000.0, 1000.0]), 1000.0 + 2f64.ln());
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}
