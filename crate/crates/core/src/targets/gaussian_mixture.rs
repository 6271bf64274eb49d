use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Spd;
use crate::special::{softmax_in_place, LN_2PI};

/// Weights below this are treated as numerically absent.
pub const DEGENERATE_WEIGHT: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Component {
    pub weight: f64,
    pub mean: DVector<f64>,
    pub cov: Spd,
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: DVector<f64>, cov: Spd) -> Self {
        let d = mean.len() as f64;
        let log_norm = -0.5 * d * LN_2PI - 0.5 * cov.log_det;
        Self {
            weight,
            mean,
            cov,
            log_norm,
        }
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.cov.inverse
    }

    /// log N(x; mean, cov) and the component score.
    fn log_pdf_and_score(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let diff = x - &self.mean;
        let pd = &self.cov.inverse * &diff;
        let quad = diff.dot(&pd);
        (self.log_norm - 0.5 * quad, -pd)
    }
}

/// Finite mixture of multivariate Gaussians.
#[derive(Clone, Debug)]
pub struct GaussianMixture {
    dim: usize,
    components: Vec<Component>,
}

impl GaussianMixture {
    /// Build from `(weight, mean, covariance)` triples.
    pub fn new(parts: Vec<(f64, DVector<f64>, DMatrix<f64>)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        let dim = parts[0].1.len();
        if dim == 0 {
            return Err(Error::invalid("mixture dimension must be at least 1"));
        }
        let total: f64 = parts.iter().map(|p| p.0).sum();
        if parts.iter().any(|p| !(p.0 >= 0.0 && p.0 <= 1.0)) {
            return Err(Error::invalid("mixture weights must lie in [0, 1]"));
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "mixture weights sum to {total}, expected 1"
            )));
        }
        let mut components = Vec::with_capacity(parts.len());
        for (i, (w, mean, cov)) in parts.into_iter().enumerate() {
            if mean.len() != dim || cov.nrows() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: if mean.len() != dim {
                        mean.len()
                    } else {
                        cov.nrows()
                    },
                });
            }
            if w < DEGENERATE_WEIGHT {
                log::warn!("dropping mixture component {i} with weight {w:e}");
                continue;
            }
            let cov = Spd::new(cov).map_err(|e| match e {
                Error::NotSpd(msg) => Error::NotSpd(format!("component {i}: {msg}")),
                other => other,
            })?;
            components.push(Component::new(w, mean, cov));
        }
        if components.is_empty() {
            return Err(Error::invalid("all mixture components are degenerate"));
        }
        let kept: f64 = components.iter().map(|c| c.weight).sum();
        for c in components.iter_mut() {
            c.weight /= kept;
        }
        Ok(Self { dim, components })
    }

    pub fn gaussian(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![(1.0, mean, cov)])
    }

    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::gaussian(mean, DMatrix::identity(d, d) * variance)
    }

    pub fn standard(d: usize) -> Self {
        Self::isotropic(DVector::zeros(d), 1.0).expect("identity covariance is valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn has_equal_covariances(&self) -> bool {
        let first = &self.components[0].cov.matrix;
        let scale = first.amax();
        self.components
            .iter()
            .all(|c| (&c.cov.matrix - first).amax() <= 1e-12 * scale)
    }

    fn weighted_parts(&self, x: &DVector<f64>) -> (f64, Vec<f64>, Vec<DVector<f64>>) {
        let mut logs = Vec::with_capacity(self.components.len());
        let mut scores = Vec::with_capacity(self.components.len());
        for c in &self.components {
            let (lp, s) = c.log_pdf_and_score(x);
            logs.push(c.weight.ln() + lp);
            scores.push(s);
        }
        let lse = softmax_in_place(&mut logs);
        (lse, logs, scores)
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        if self.components.len() == 1 {
            return self.components[0].log_pdf_and_score(x).0;
        }
        self.weighted_parts(x).0
    }

    pub fn score(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.components.len() == 1 {
            return self.components[0].log_pdf_and_score(x).1;
        }
        let (_, q, scores) = self.weighted_parts(x);
        let mut out = DVector::zeros(self.dim);
        for (qi, si) in q.iter().zip(&scores) {
            out.axpy(*qi, si, 1.0);
        }
        out
    }

    /// log density, score and Hessian of the log density in one pass.
    ///
    /// The Hessian is Σ q_i(-P_i) + Σ q_i (s_i - s̄)(s_i - s̄)ᵀ, which avoids the
    /// cancellation of the textbook form far from the components.
    pub fn evaluate(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let (lse, q, scores) = self.weighted_parts(x);
        let mut mean_score = DVector::zeros(self.dim);
        for (qi, si) in q.iter().zip(&scores) {
            mean_score.axpy(*qi, si, 1.0);
        }
        let mut hess = DMatrix::zeros(self.dim, self.dim);
        for ((qi, si), c) in q.iter().zip(&scores).zip(&self.components) {
            if *qi == 0.0 {
                continue;
            }
            hess -= c.precision() * *qi;
            let dev = si - &mean_score;
            hess.ger(*qi, &dev, &dev, 1.0);
        }
        (lse, mean_score, hess)
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.evaluate(x).2
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let c = self.pick(rng);
        let z = DVector::from_fn(self.dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        &c.mean + &c.cov.chol * z
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> &Component {
        if self.components.len() == 1 {
            return &self.components[0];
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.weight;
            if u < acc {
                return c;
            }
        }
        self.components.last().unwrap()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for c in &self.components {
            m.axpy(c.weight, &c.mean, 1.0);
        }
        m
    }

    /// E‖X‖².
    pub fn second_moment(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * (c.mean.norm_squared() + c.cov.matrix.trace()))
            .sum()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let mut s = DMatrix::zeros(self.dim, self.dim);
        for c in &self.components {
            let dev = &c.mean - &m;
            s += &c.cov.matrix * c.weight;
            s.ger(c.weight, &dev, &dev, 1.0);
        }
        s
    }

    /// Law of √λ·X + N(0, noise_var·I) for X drawn from this mixture.
    pub fn diffuse(&self, lambda: f64, noise_var: f64) -> Result<Self> {
        let root = lambda.sqrt();
        let eye = DMatrix::<f64>::identity(self.dim, self.dim);
        let parts = self
            .components
            .iter()
            .map(|c| {
                (
                    c.weight,
                    &c.mean * root,
                    &c.cov.matrix * lambda + &eye * noise_var,
                )
            })
            .collect();
        Self::new(parts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn single_gaussian_closed_forms() {
        let g = GaussianMixture::isotropic(v(&[0.0]), 1.0).unwrap();
        assert_relative_eq!(g.log_density(&v(&[0.0])).exp(), 0.398_942_280_401_432_7, max_relative = 1e-14);
        assert_relative_eq!(g.score(&v(&[2.0]))[0], -2.0);
        let h = GaussianMixture::isotropic(v(&[1.0]), 4.0).unwrap();
        assert_relative_eq!(h.hessian(&v(&[7.3]))[(0, 0)], -0.25, max_relative = 1e-14);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let r = GaussianMixture::new(vec![
            (0.5, v(&[0.0]), DMatrix::identity(1, 1)),
            (0.4, v(&[1.0]), DMatrix::identity(1, 1)),
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn degenerate_components_are_dropped() {
        let g = GaussianMixture::new(vec![
            (1.0 - 1e-13, v(&[0.0]), DMatrix::identity(1, 1)),
            (1e-13, v(&[5.0]), DMatrix::identity(1, 1)),
        ])
        .unwrap();
        assert_eq!(g.components().len(), 1);
        assert_eq!(g.components()[0].weight, 1.0);
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        let r = GaussianMixture::new(vec![
            (0.5, v(&[0.0]), DMatrix::identity(1, 1)),
            (0.5, v(&[1.0, 2.0]), DMatrix::identity(2, 2)),
        ]);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn symmetric_mixture_splits_mass_evenly() {
        let g = GaussianMixture::new(vec![
            (0.5, v(&[-4.0]), DMatrix::identity(1, 1)),
            (0.5, v(&[4.0]), DMatrix::identity(1, 1)),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let right = (0..n).filter(|_| g.sample_one(&mut rng)[0] > 0.0).count();
        assert!((right as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn diffusion_of_gaussian_is_gaussian() {
        let g = GaussianMixture::isotropic(v(&[3.0]), 4.0).unwrap();
        let m = g.diffuse(0.5, 0.5).unwrap();
        let c = &m.components()[0];
        assert_relative_eq!(c.mean[0], 3.0 / 2f64.sqrt(), max_relative = 1e-15);
        assert_relative_eq!(c.cov.matrix[(0, 0)], 2.5, max_relative = 1e-15);
    }

    #[test]
    fn moments_of_mixture() {
        let g = GaussianMixture::new(vec![
            (0.25, v(&[-2.0, 0.0]), DMatrix::identity(2, 2)),
            (0.75, v(&[2.0, 1.0]), DMatrix::identity(2, 2) * 2.0),
        ])
        .unwrap();
        assert_relative_eq!(g.mean(), v(&[1.0, 0.75]), epsilon = 1e-15);
        let m2 = 0.25 * (4.0 + 2.0) + 0.75 * (5.0 + 4.0);
        assert_relative_eq!(g.second_moment(), m2, epsilon = 1e-14);
        assert_relative_eq!(g.covariance().trace(), m2 - g.mean().norm_squared(), epsilon = 1e-13);
    }
}
