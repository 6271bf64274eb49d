//! One-dimensional mixture of a Gaussian and a uniform law smoothed by a
//! Gaussian kernel. With `m` as parameter this is the two-mode fixture
//! (1-e^{-m²/4})·N(m, 1) + e^{-m²/4}·u_m, u_m = Uniform[-m, 2m] * N(0, w²).

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::special::{log_norm_cdf_diff, log_norm_pdf};

#[derive(Clone, Debug, PartialEq)]
pub struct SmoothedUniformMixture {
    /// Fixture parameter when built by [`SmoothedUniformMixture::new`].
    pub m: Option<f64>,
    pub gaussian_weight: f64,
    /// Stored separately so that tiny uniform weights keep full precision.
    pub uniform_weight: f64,
    pub gaussian_mean: f64,
    pub gaussian_var: f64,
    /// Support of the uniform part before smoothing.
    pub support: (f64, f64),
    /// Variance of the smoothing kernel.
    pub smoothing_var: f64,
}

/// Value, first and second derivative of the log of one part, relative to the density.
#[derive(Clone, Copy, Debug)]
struct Part {
    log_p: f64,
    /// p'/p
    d1: f64,
    /// p''/p
    d2: f64,
}

impl SmoothedUniformMixture {
    /// Two-mode fixture with parameter `m` and smoothing width `width`.
    pub fn new(m: f64, width: f64) -> Result<Self> {
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::invalid(format!("m must be positive, got {m}")));
        }
        let uniform_weight = (-m * m / 4.0).exp();
        let mut s = Self::from_parts(
            uniform_weight,
            m,
            1.0,
            (-m, 2.0 * m),
            width * width,
        )?;
        s.m = Some(m);
        Ok(s)
    }

    /// Build from the uniform part's weight; the Gaussian part carries the rest.
    pub fn from_parts(
        uniform_weight: f64,
        gaussian_mean: f64,
        gaussian_var: f64,
        support: (f64, f64),
        smoothing_var: f64,
    ) -> Result<Self> {
        if !(uniform_weight > 0.0 && uniform_weight < 1.0) {
            return Err(Error::invalid(format!(
                "uniform weight must lie in (0, 1), got {uniform_weight}"
            )));
        }
        if !(gaussian_var > 0.0) || !(smoothing_var > 0.0) {
            return Err(Error::invalid("variances must be positive"));
        }
        if !(support.1 >= support.0) || !support.0.is_finite() || !support.1.is_finite() {
            return Err(Error::invalid("support must be a finite interval"));
        }
        Ok(Self {
            m: None,
            gaussian_weight: 1.0 - uniform_weight,
            uniform_weight,
            gaussian_mean,
            gaussian_var,
            support,
            smoothing_var,
        })
    }

    fn gaussian_part(&self, x: f64) -> Part {
        let s2 = self.gaussian_var;
        let z = (x - self.gaussian_mean) / s2.sqrt();
        let d1 = -(x - self.gaussian_mean) / s2;
        Part {
            log_p: log_norm_pdf(z) - 0.5 * s2.ln(),
            d1,
            d2: d1 * d1 - 1.0 / s2,
        }
    }

    fn uniform_part(&self, x: f64) -> Part {
        let (a, b) = self.support;
        let w = self.smoothing_var.sqrt();
        let len = b - a;
        if len <= 1e-12 * w {
            // collapsed support: a plain Gaussian at the support point
            let c = 0.5 * (a + b);
            let d1 = -(x - c) / self.smoothing_var;
            return Part {
                log_p: log_norm_pdf((x - c) / w) - w.ln(),
                d1,
                d2: d1 * d1 - 1.0 / self.smoothing_var,
            };
        }
        // density (Φ(A) - Φ(B)) / len with A = (x-a)/w, B = (x-b)/w
        let za = (x - a) / w;
        let zb = (x - b) / w;
        let log_d = log_norm_cdf_diff(za, zb);
        let ra = (log_norm_pdf(za) - log_d).exp();
        let rb = (log_norm_pdf(zb) - log_d).exp();
        Part {
            log_p: log_d - len.ln(),
            d1: (ra - rb) / w,
            d2: (-za * ra + zb * rb) / self.smoothing_var,
        }
    }

    fn combine(&self, x: f64) -> (f64, f64, f64) {
        let g = self.gaussian_part(x);
        let u = self.uniform_part(x);
        let lg = self.gaussian_weight.ln() + g.log_p;
        let lu = self.uniform_weight.ln() + u.log_p;
        let hi = lg.max(lu);
        let lse = hi + ((lg - hi).exp() + (lu - hi).exp()).ln();
        let qg = (lg - lse).exp();
        let qu = (lu - lse).exp();
        let s = qg * g.d1 + qu * u.d1;
        // p''/p - s², arranged as a weighted variance to limit cancellation
        let h = qg * (g.d2 - g.d1 * g.d1)
            + qu * (u.d2 - u.d1 * u.d1)
            + qg * (g.d1 - s).powi(2)
            + qu * (u.d1 - s).powi(2);
        (lse, s, h)
    }

    pub fn log_density(&self, x: f64) -> f64 {
        self.combine(x).0
    }

    pub fn score(&self, x: f64) -> f64 {
        self.combine(x).1
    }

    pub fn hessian(&self, x: f64) -> f64 {
        self.combine(x).2
    }

    pub fn evaluate(&self, x: f64) -> (f64, f64, f64) {
        self.combine(x)
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let z: f64 = rng.sample(StandardNormal);
        if u < self.gaussian_weight {
            self.gaussian_mean + self.gaussian_var.sqrt() * z
        } else {
            let (a, b) = self.support;
            let v: f64 = rng.random();
            a + (b - a) * v + self.smoothing_var.sqrt() * z
        }
    }

    pub fn mean(&self) -> f64 {
        let (a, b) = self.support;
        self.gaussian_weight * self.gaussian_mean + self.uniform_weight * 0.5 * (a + b)
    }

    pub fn second_moment(&self) -> f64 {
        let (a, b) = self.support;
        self.gaussian_weight * (self.gaussian_mean.powi(2) + self.gaussian_var)
            + self.uniform_weight * ((a * a + a * b + b * b) / 3.0 + self.smoothing_var)
    }

    /// Law of √λ·X + N(0, noise_var), again a member of this family.
    pub fn diffuse(&self, lambda: f64, noise_var: f64) -> Result<Self> {
        let r = lambda.sqrt();
        let mut out = Self::from_parts(
            self.uniform_weight,
            r * self.gaussian_mean,
            lambda * self.gaussian_var + noise_var,
            (r * self.support.0, r * self.support.1),
            lambda * self.smoothing_var + noise_var,
        )?;
        out.m = None;
        Ok(out)
    }

    /// Points where the density changes character.
    pub fn breakpoints(&self) -> Vec<f64> {
        vec![self.gaussian_mean, self.support.0, self.support.1]
    }

    /// Smallest curvature scale of the two parts.
    pub fn length_scale(&self) -> f64 {
        self.gaussian_var.min(self.smoothing_var).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_scalar, Options};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fixture_weights() {
        let s = SmoothedUniformMixture::new(10.0, 1.0).unwrap();
        assert_relative_eq!(s.uniform_weight, (-25.0f64).exp(), max_relative = 1e-9);
        assert_eq!(s.support, (-10.0, 20.0));
    }

    #[test]
    fn integrates_to_one() {
        for m in [1.0, 3.0, 10.0] {
            let s = SmoothedUniformMixture::new(m, 1.0).unwrap();
            let opts = Options::default().with_breakpoints(s.breakpoints());
            let total = integrate_scalar(|x| s.log_density(x).exp(), f64::NEG_INFINITY, f64::INFINITY, &opts).unwrap();
            assert!((total - 1.0).abs() < 1e-8, "m = {m}: {total}");
        }
    }

    #[test]
    fn uniform_part_alone_matches_direct_formula() {
        // weight nearly all on the uniform part to probe it directly
        let s = SmoothedUniformMixture::from_parts(1.0 - 1e-9, 0.0, 1.0, (-1.0, 2.0), 0.25).unwrap();
        let phi = |z: f64| 0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2);
        for &x in &[-2.0, 0.0, 0.7, 3.1] {
            let direct = (phi((x + 1.0) / 0.5) - phi((x - 2.0) / 0.5)) / 3.0;
            let got = s.uniform_part(x).log_p.exp();
            assert_relative_eq!(got, direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences_far_out() {
        let s = SmoothedUniformMixture::new(10.0, 1.0).unwrap();
        for &x in &[-150.0, -40.0, -10.5, 0.0, 9.0, 20.5, 60.0] {
            let h = 1e-5 * (1.0 + f64::abs(x));
            let fd = (s.log_density(x + h) - s.log_density(x - h)) / (2.0 * h);
            assert_relative_eq!(s.score(x), fd, max_relative = 1e-5, epsilon = 1e-6);
            let fd2 = (s.score(x + h) - s.score(x - h)) / (2.0 * h);
            assert_relative_eq!(s.hessian(x), fd2, max_relative = 1e-4, epsilon = 1e-5);
        }
    }

    #[test]
    fn sample_moments() {
        let s = SmoothedUniformMixture::from_parts(0.7, 4.0, 1.0, (-3.0, 6.0), 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.sample_one(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let m2 = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((mean - s.mean()).abs() < 0.05);
        assert!((m2 - s.second_moment()).abs() / s.second_moment() < 0.02);
    }
}
