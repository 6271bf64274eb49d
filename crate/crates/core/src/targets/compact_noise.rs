use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::gaussian_mixture::GaussianMixture;
use super::student_t::StudentT;
use crate::error::{Error, Result};
use crate::special::softmax_in_place;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    Gaussian { tau: f64 },
    StudentT { tau: f64, dof: f64 },
}

impl Noise {
    pub fn tau(&self) -> f64 {
        match *self {
            Noise::Gaussian { tau } | Noise::StudentT { tau, .. } => tau,
        }
    }
}

#[derive(Clone, Debug)]
enum Inner {
    Gaussian(GaussianMixture),
    StudentT(Vec<(f64, StudentT)>),
}

/// X = U + G with U supported on finitely many atoms inside the ball
/// ‖u - m‖² ≤ dR², and G Gaussian or Student's t noise.
#[derive(Clone, Debug)]
pub struct CompactPlusNoise {
    atoms: Vec<(f64, DVector<f64>)>,
    center: DVector<f64>,
    radius: f64,
    noise: Noise,
    inner: Inner,
}

impl CompactPlusNoise {
    pub fn new(
        atoms: Vec<(f64, DVector<f64>)>,
        center: DVector<f64>,
        radius: f64,
        noise: Noise,
    ) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::invalid("at least one atom is required"));
        }
        let d = center.len();
        let tau = noise.tau();
        if !(tau > 0.0) {
            return Err(Error::invalid(format!("noise scale must be positive, got {tau}")));
        }
        if !(radius >= 0.0) {
            return Err(Error::invalid("support radius must be nonnegative"));
        }
        let limit = d as f64 * radius * radius;
        for (i, (_, u)) in atoms.iter().enumerate() {
            if u.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: u.len(),
                });
            }
            let dist2 = (u - &center).norm_squared();
            if dist2 > limit * (1.0 + 1e-12) + 1e-300 {
                return Err(Error::invalid(format!(
                    "atom {i} lies outside the support ball: ‖u - m‖² = {dist2} > dR² = {limit}"
                )));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.0).sum();
        if (total - 1.0).abs() > 1e-12 || atoms.iter().any(|a| !(a.0 >= 0.0)) {
            return Err(Error::invalid(format!("atom weights sum to {total}, expected 1")));
        }
        let inner = match noise {
            Noise::Gaussian { tau } => Inner::Gaussian(GaussianMixture::new(
                atoms
                    .iter()
                    .map(|(w, u)| (*w, u.clone(), DMatrix::identity(d, d) * (tau * tau)))
                    .collect(),
            )?),
            Noise::StudentT { tau, dof } => {
                let mut comps = Vec::new();
                for (w, u) in &atoms {
                    if *w < super::gaussian_mixture::DEGENERATE_WEIGHT {
                        log::warn!("dropping atom with weight {w:e}");
                        continue;
                    }
                    comps.push((*w, StudentT::isotropic(u.clone(), tau, dof)?));
                }
                let kept: f64 = comps.iter().map(|c| c.0).sum();
                for c in comps.iter_mut() {
                    c.0 /= kept;
                }
                Inner::StudentT(comps)
            }
        };
        Ok(Self {
            atoms,
            center,
            radius,
            noise,
            inner,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn noise(&self) -> &Noise {
        &self.noise
    }

    pub fn atoms(&self) -> &[(f64, DVector<f64>)] {
        &self.atoms
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// The Gaussian mixture this target equals when the noise is Gaussian.
    pub fn as_gaussian_mixture(&self) -> Option<&GaussianMixture> {
        match &self.inner {
            Inner::Gaussian(g) => Some(g),
            Inner::StudentT(_) => None,
        }
    }

    /// Constants (L_π, C_π) for Student's t noise:
    /// L_π = L_τ + (α̃+d)²/(2α̃τ²), C_π = (α̃+d)²/(2α̃τ²).
    pub fn heavy_constants(&self) -> Option<(f64, f64)> {
        match self.noise {
            Noise::StudentT { tau, dof } => {
                let ad = dof + self.dim() as f64;
                let l_tau = ad / (dof * tau * tau);
                let c = ad * ad / (2.0 * dof * tau * tau);
                Some((l_tau + c, c))
            }
            Noise::Gaussian { .. } => None,
        }
    }

    fn t_parts(comps: &[(f64, StudentT)], x: &DVector<f64>) -> (f64, Vec<f64>, Vec<DVector<f64>>) {
        let mut logs: Vec<f64> = comps.iter().map(|(w, t)| w.ln() + t.log_density(x)).collect();
        let scores = comps.iter().map(|(_, t)| t.score(x)).collect();
        let lse = softmax_in_place(&mut logs);
        (lse, logs, scores)
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        match &self.inner {
            Inner::Gaussian(g) => g.log_density(x),
            Inner::StudentT(c) => Self::t_parts(c, x).0,
        }
    }

    pub fn score(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.inner {
            Inner::Gaussian(g) => g.score(x),
            Inner::StudentT(c) => {
                let (_, q, s) = Self::t_parts(c, x);
                let mut out = DVector::zeros(x.len());
                for (qi, si) in q.iter().zip(&s) {
                    out.axpy(*qi, si, 1.0);
                }
                out
            }
        }
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.inner {
            Inner::Gaussian(g) => g.hessian(x),
            Inner::StudentT(c) => {
                let (_, q, s) = Self::t_parts(c, x);
                let d = x.len();
                let mut mean = DVector::zeros(d);
                for (qi, si) in q.iter().zip(&s) {
                    mean.axpy(*qi, si, 1.0);
                }
                let mut h = DMatrix::zeros(d, d);
                for ((qi, si), (_, t)) in q.iter().zip(&s).zip(c) {
                    h += t.hessian(x) * *qi;
                    let dev = si - &mean;
                    h.ger(*qi, &dev, &dev, 1.0);
                }
                h
            }
        }
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match &self.inner {
            Inner::Gaussian(g) => g.sample_one(rng),
            Inner::StudentT(c) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (w, t) in c {
                    acc += w;
                    if u < acc {
                        return t.sample_one(rng);
                    }
                }
                c.last().unwrap().1.sample_one(rng)
            }
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim());
        for (w, u) in &self.atoms {
            m.axpy(*w, u, 1.0);
        }
        m
    }

    pub fn second_moment(&self) -> f64 {
        let d = self.dim() as f64;
        let noise_m2 = match self.noise {
            Noise::Gaussian { tau } => d * tau * tau,
            Noise::StudentT { tau, dof } => d * tau * tau * dof / (dof - 2.0),
        };
        self.atoms.iter().map(|(w, u)| w * u.norm_squared()).sum::<f64>() + noise_m2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn rejects_atoms_outside_ball() {
        let r = CompactPlusNoise::new(
            vec![(1.0, v(&[3.0]))],
            v(&[0.0]),
            1.0,
            Noise::Gaussian { tau: 1.0 },
        );
        assert!(r.is_err());
    }

    #[test]
    fn gaussian_noise_is_equal_covariance_mixture() {
        let t = CompactPlusNoise::new(
            vec![(0.5, v(&[-1.0])), (0.5, v(&[1.0]))],
            v(&[0.0]),
            1.0,
            Noise::Gaussian { tau: 0.5 },
        )
        .unwrap();
        assert!(t.as_gaussian_mixture().unwrap().has_equal_covariances());
        assert_relative_eq!(t.second_moment(), 1.25);
    }

    #[test]
    fn t_noise_derivatives_consistent() {
        let t = CompactPlusNoise::new(
            vec![(0.3, v(&[-1.0, 0.5])), (0.7, v(&[1.0, 0.0]))],
            v(&[0.0, 0.0]),
            1.0,
            Noise::StudentT { tau: 0.8, dof: 5.0 },
        )
        .unwrap();
        let x = v(&[0.2, -0.4]);
        let h = 1e-6;
        for i in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (t.log_density(&xp) - t.log_density(&xm)) / (2.0 * h);
            assert_relative_eq!(t.score(&x)[i], fd, max_relative = 1e-7);
            let fd2 = (t.score(&xp) - t.score(&xm)) / (2.0 * h);
            for j in 0..2 {
                assert_relative_eq!(t.hessian(&x)[(j, i)], fd2[j], max_relative = 1e-6);
            }
        }
        let (l, c) = t.heavy_constants().unwrap();
        assert_relative_eq!(c, 49.0 / (10.0 * 0.64));
        assert_relative_eq!(l, 7.0 / (5.0 * 0.64) + c);
    }
}
