use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{ln_gamma, LN_2PI};

/// Base (noising) distribution: N(0, σ²I) or t(0, σ²I, α).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Base {
    Gaussian { sigma: f64 },
    StudentT { sigma: f64, dof: f64 },
}

impl Base {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        let b = Base::Gaussian { sigma };
        b.validate()?;
        Ok(b)
    }

    pub fn student_t(sigma: f64, dof: f64) -> Result<Self> {
        let b = Base::StudentT { sigma, dof };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let sigma = self.sigma();
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("base scale must be positive, got {sigma}")));
        }
        if let Base::StudentT { dof, .. } = *self {
            if !(dof > 2.0) || !dof.is_finite() {
                return Err(Error::invalid(format!(
                    "base degrees of freedom must exceed 2, got {dof}"
                )));
            }
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            Base::Gaussian { sigma } | Base::StudentT { sigma, .. } => sigma,
        }
    }

    pub fn dof(&self) -> Option<f64> {
        match *self {
            Base::Gaussian { .. } => None,
            Base::StudentT { dof, .. } => Some(dof),
        }
    }

    pub fn is_heavy(&self) -> bool {
        matches!(self, Base::StudentT { .. })
    }

    /// E‖Z‖² / (σ²d): 1 for the Gaussian, α/(α-2) for Student's t.
    pub fn variance_factor(&self) -> f64 {
        match *self {
            Base::Gaussian { .. } => 1.0,
            Base::StudentT { dof, .. } => dof / (dof - 2.0),
        }
    }

    pub fn second_moment(&self, d: usize) -> f64 {
        self.sigma().powi(2) * d as f64 * self.variance_factor()
    }

    /// Lipschitz constant of the base score: 1/σ² or (α+d)/(ασ²).
    pub fn lipschitz(&self, d: usize) -> f64 {
        match *self {
            Base::Gaussian { sigma } => 1.0 / (sigma * sigma),
            Base::StudentT { sigma, dof } => (dof + d as f64) / (dof * sigma * sigma),
        }
    }

    /// Law of √(1-λ)·Z, Z drawn from the base, as a kernel in dimension `d`.
    pub fn kernel(&self, d: usize, one_minus_lambda: f64) -> Kernel {
        Kernel::new(*self, d, self.sigma().powi(2) * one_minus_lambda)
    }

    pub fn log_density(&self, x: &DVector<f64>) -> f64 {
        self.kernel(x.len(), 1.0).log_pdf(x.norm_squared())
    }

    pub fn score(&self, x: &DVector<f64>) -> DVector<f64> {
        self.kernel(x.len(), 1.0).grad(x)
    }

    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.kernel(x.len(), 1.0).hess(x)
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> DVector<f64> {
        self.kernel(d, 1.0).sample(rng)
    }
}

/// Centered isotropic Gaussian or Student's t density with squared scale `s2`.
#[derive(Clone, Copy, Debug)]
pub struct Kernel {
    d: usize,
    s2: f64,
    dof: Option<f64>,
    log_norm: f64,
}

impl Kernel {
    fn new(base: Base, d: usize, s2: f64) -> Self {
        let df = d as f64;
        let dof = base.dof();
        let log_norm = match dof {
            None => -0.5 * df * (LN_2PI + s2.ln()),
            Some(a) => {
                ln_gamma(0.5 * (a + df))
                    - ln_gamma(0.5 * a)
                    - 0.5 * df * (a * std::f64::consts::PI * s2).ln()
            }
        };
        Self { d, s2, dof, log_norm }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Squared scale.
    pub fn scale2(&self) -> f64 {
        self.s2
    }

    pub fn dof(&self) -> Option<f64> {
        self.dof
    }

    /// log k(v) as a function of r2 = ‖v‖².
    #[inline]
    pub fn log_pdf(&self, r2: f64) -> f64 {
        match self.dof {
            None => self.log_norm - 0.5 * r2 / self.s2,
            Some(a) => self.log_norm - 0.5 * (a + self.d as f64) * (r2 / (a * self.s2)).ln_1p(),
        }
    }

    /// c(r2) with ∇log k(v) = -c·v.
    #[inline]
    pub fn grad_coef(&self, r2: f64) -> f64 {
        match self.dof {
            None => 1.0 / self.s2,
            Some(a) => (a + self.d as f64) / (a * self.s2 + r2),
        }
    }

    /// e(r2) with ∇²log k(v) = -c·I + e·vvᵀ.
    #[inline]
    pub fn hess_coef(&self, r2: f64) -> f64 {
        match self.dof {
            None => 0.0,
            Some(a) => {
                let den = a * self.s2 + r2;
                2.0 * (a + self.d as f64) / (den * den)
            }
        }
    }

    pub fn grad(&self, v: &DVector<f64>) -> DVector<f64> {
        v * (-self.grad_coef(v.norm_squared()))
    }

    pub fn hess(&self, v: &DVector<f64>) -> DMatrix<f64> {
        let r2 = v.norm_squared();
        let mut h = DMatrix::identity(self.d, self.d) * (-self.grad_coef(r2));
        let e = self.hess_coef(r2);
        if e != 0.0 {
            h.ger(e, v, v, 1.0);
        }
        h
    }

    /// Quantile of one coordinate of a standardized (unit-scale) draw, d = 1 only.
    pub(crate) fn standard_quantile(&self, p: f64) -> f64 {
        match self.dof {
            None => crate::special::norm_quantile(p),
            Some(a) => crate::special::student_t_quantile(p, a),
        }
    }

    /// One draw with unit scale.
    pub(crate) fn sample_standard<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let g = DVector::from_fn(self.d, |_, _| rng.sample::<f64, _>(StandardNormal));
        match self.dof {
            None => g,
            Some(a) => {
                let chi = ChiSquared::new(a).expect("dof validated").sample(rng);
                g / (chi / a).sqrt()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        self.sample_standard(rng) * self.s2.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn base_constants() {
        let g = Base::gaussian(2.0).unwrap();
        assert_relative_eq!(g.lipschitz(3), 0.25);
        assert_relative_eq!(g.second_moment(3), 12.0);
        let t = Base::student_t(1.0, 4.0).unwrap();
        assert_relative_eq!(t.lipschitz(1), 1.25);
        assert_relative_eq!(t.second_moment(1), 2.0);
        assert!(Base::student_t(1.0, 2.0).is_err());
        assert!(Base::gaussian(0.0).is_err());
    }

    #[test]
    fn kernel_matches_targets() {
        use crate::targets::StudentT;
        let t = StudentT::isotropic(DVector::zeros(2), 1.5, 5.0).unwrap();
        let b = Base::student_t(1.5, 5.0).unwrap();
        let x = DVector::from_row_slice(&[0.3, -1.2]);
        assert_relative_eq!(b.log_density(&x), t.log_density(&x), max_relative = 1e-13);
        assert_relative_eq!(b.score(&x), t.score(&x), max_relative = 1e-13);
        assert_relative_eq!(b.hessian(&x), t.hessian(&x), max_relative = 1e-12);
        let g = Base::gaussian(1.0).unwrap();
        let x1 = DVector::from_element(1, 0.0);
        assert_relative_eq!(g.log_density(&x1).exp(), 0.398_942_280_401_432_7, max_relative = 1e-14);
    }
}
