use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Spd;
use crate::special::ln_gamma;

/// Multivariate Student's t with location μ, scale matrix Σ and `dof` degrees of freedom.
#[derive(Clone, Debug)]
pub struct StudentT {
    location: DVector<f64>,
    scale: Spd,
    dof: f64,
    log_norm: f64,
    chi2: ChiSquared<f64>,
}

/// Constants of the two-sided Hessian decay envelope
/// `-I/(α₁+α₂‖x‖²) ≼ ∇²V ≼ I/(β₁+β₂‖x‖²)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct HessianDecay {
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

impl StudentT {
    pub fn new(location: DVector<f64>, scale: DMatrix<f64>, dof: f64) -> Result<Self> {
        if !(dof > 2.0) || !dof.is_finite() {
            return Err(Error::invalid(format!(
                "Student's t degrees of freedom must exceed 2, got {dof}"
            )));
        }
        let d = location.len();
        if d == 0 {
            return Err(Error::invalid("Student's t dimension must be at least 1"));
        }
        if scale.nrows() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: scale.nrows(),
            });
        }
        let scale = Spd::new(scale)?;
        let df = d as f64;
        let log_norm = ln_gamma(0.5 * (dof + df))
            - ln_gamma(0.5 * dof)
            - 0.5 * df * (dof * std::f64::consts::PI).ln()
            - 0.5 * scale.log_det;
        let chi2 = ChiSquared::new(dof).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(Self {
            location,
            scale,
            dof,
            log_norm,
            chi2,
        })
    }

    /// t(μ, σ²I, α).
    pub fn isotropic(location: DVector<f64>, sigma: f64, dof: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::invalid(format!("scale must be positive, got {sigma}")));
        }
        let d = location.len();
        Self::new(location, DMatrix::identity(d, d) * (sigma * sigma), dof)
    }

    pub fn dim(&self) -> usize {
        self.location.len()
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn location(&self) -> &DVector<f64> {
        &self.location
    }

    pub fn scale(&self) -> &Spd {
        &self.scale
    }

    fn quad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let diff = x - &self.location;
        let pd = &self.scale.inverse * &diff;
        (diff.dot(&pd), pd)
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        let (q, _) = self.quad(x);
        let df = self.dim() as f64;
        self.log_norm - 0.5 * (self.dof + df) * (q / self.dof).ln_1p()
    }

    pub fn score(&self, x: &DVector<f64>) -> DVector<f64> {
        let (q, pd) = self.quad(x);
        let df = self.dim() as f64;
        pd * (-(self.dof + df) / (self.dof + q))
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let (q, pd) = self.quad(x);
        let c = (self.dof + self.dim() as f64) / (self.dof + q);
        let mut h = &self.scale.inverse * (-c);
        h.ger(2.0 * c / (self.dof + q), &pd, &pd, 1.0);
        h
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = self.chi2.sample(rng);
        &self.location + &self.scale.chol * z / (w / self.dof).sqrt()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.location.clone()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.scale.matrix * (self.dof / (self.dof - 2.0))
    }

    /// E‖X‖² = ‖μ‖² + tr(Σ)·α/(α-2).
    pub fn second_moment(&self) -> f64 {
        self.location.norm_squared() + self.scale.matrix.trace() * self.dof / (self.dof - 2.0)
    }

    /// sup‖∇²log π‖, attained at the location: (α+d)·λmax(Σ⁻¹)/α.
    pub fn lipschitz_constant(&self) -> f64 {
        (self.dof + self.dim() as f64) / (self.dof * self.scale.eig_min)
    }

    /// sup‖∇log π‖² ≤ (α+d)²·λmax(Σ⁻¹)/(4α); equality for isotropic scale.
    pub fn score_sup_squared(&self) -> f64 {
        let a = self.dof + self.dim() as f64;
        a * a / (4.0 * self.dof * self.scale.eig_min)
    }

    /// Envelope constants for the potential Hessian, σ_min/σ_max being the
    /// extreme eigenvalues of Σ.
    pub fn hessian_decay(&self) -> HessianDecay {
        let a = self.dof;
        let ad = a + self.dim() as f64;
        let inv_min = 1.0 / self.scale.eig_min;
        let inv_max = 1.0 / self.scale.eig_max;
        // lower: 2(α+d)σ_min⁻²/σ_max⁻¹ / (α + σ_max⁻¹‖x-μ‖²)
        let lower_num = 2.0 * ad * inv_min * inv_min / inv_max;
        // upper: (α+d)σ_min⁻¹ / (α + σ_max⁻¹‖x-μ‖²)
        let upper_num = ad * inv_min;
        HessianDecay {
            alpha1: a / lower_num,
            alpha2: inv_max / lower_num,
            beta1: a / upper_num,
            beta2: inv_max / upper_num,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate_scalar, Options};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t4() -> StudentT {
        StudentT::isotropic(DVector::from_element(1, 0.0), 1.0, 4.0).unwrap()
    }

    #[test]
    fn density_at_center_matches_normalizer() {
        // Γ(2.5)/(Γ(2)√(4π)) = 0.375
        let x = DVector::from_element(1, 0.0);
        assert_relative_eq!(t4().log_density(&x).exp(), 0.375, max_relative = 1e-14);
    }

    #[test]
    fn density_integrates_to_one() {
        let t = t4();
        let total = integrate_scalar(
            |x| t.log_density(&DVector::from_element(1, x)).exp(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            &Options::default(),
        )
        .unwrap();
        assert_relative_eq!(total, 1.0, max_relative = 1e-9);
    }

    #[test]
    fn score_and_hessian_closed_forms() {
        let t = t4();
        assert_relative_eq!(t.score(&DVector::from_element(1, 1.0))[0], -1.0, max_relative = 1e-14);
        assert_relative_eq!(t.hessian(&DVector::from_element(1, 0.0))[(0, 0)], -1.25, max_relative = 1e-14);
    }

    #[test]
    fn rejects_low_dof() {
        assert!(StudentT::isotropic(DVector::zeros(1), 1.0, 2.0).is_err());
    }

    #[test]
    fn second_moment_by_sampling() {
        let t = t4();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let m2: f64 = (0..n).map(|_| t.sample_one(&mut rng)[0].powi(2)).sum::<f64>() / n as f64;
        assert!((m2 - 2.0).abs() < 0.2, "m2 = {m2}");
        assert_relative_eq!(t.second_moment(), 2.0);
    }

    #[test]
    fn constants_match_suprema() {
        let t = t4();
        assert_relative_eq!(t.lipschitz_constant(), 1.25);
        // sup of 25 x²/(4+x²)² at x = 2 is 25/16
        assert_relative_eq!(t.score_sup_squared(), 25.0 / 16.0);
        let s = t.score(&DVector::from_element(1, 2.0))[0];
        assert_relative_eq!(s * s, 25.0 / 16.0, max_relative = 1e-14);
    }

    #[test]
    fn decay_envelope_holds_on_a_ray() {
        let scale = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let t = StudentT::new(DVector::from_vec(vec![0.5, -1.0]), scale, 5.0).unwrap();
        let env = t.hessian_decay();
        for k in 0..200 {
            let r = 0.5 * k as f64;
            let x = t.location() + DVector::from_vec(vec![r * 0.6, -r * 0.8]);
            let dist2 = (&x - t.location()).norm_squared();
            let eig = crate::linalg::eigenvalues_sym(&(-t.hessian(&x)));
            let hi = 1.0 / (env.beta1 + env.beta2 * dist2);
            let lo = -1.0 / (env.alpha1 + env.alpha2 * dist2);
            for e in eig.iter() {
                assert!(*e <= hi * (1.0 + 1e-12) && *e >= lo * (1.0 + 1e-12));
            }
        }
    }
}
