use nalgebra::DVector;

use super::Base;
use crate::error::{check_dim, Error, Result};
use crate::quadrature::{integrate_scalar, Options};
use crate::schedules::Schedule;
use crate::targets::Target;

/// Geometric path ∝ ν^{1-λ}·π^λ.
#[derive(Clone, Debug)]
pub struct GeometricPath {
    base: Base,
    target: Target,
    schedule: Schedule,
}

impl GeometricPath {
    pub fn new(base: Base, target: Target, schedule: Schedule) -> Result<Self> {
        base.validate()?;
        schedule.validate()?;
        Ok(Self {
            base,
            target,
            schedule,
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    fn check_lambda(lambda: f64) -> Result<()> {
        if (0.0..=1.0).contains(&lambda) {
            Ok(())
        } else {
            Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")))
        }
    }

    /// (1-λ)·log ν(x) + λ·log π(x).
    pub fn log_unnormalized(&self, lambda: f64, x: &[f64]) -> Result<f64> {
        Self::check_lambda(lambda)?;
        check_dim(self.target.dim(), x.len())?;
        let v = DVector::from_column_slice(x);
        let mut out = 0.0;
        if lambda < 1.0 {
            out += (1.0 - lambda) * self.base.log_density(&v);
        }
        if lambda > 0.0 {
            out += lambda * self.target.log_density_v(&v);
        }
        Ok(out)
    }

    /// (1-λ)·∇log ν(x) + λ·∇log π(x).
    pub fn score(&self, lambda: f64, x: &[f64]) -> Result<DVector<f64>> {
        Self::check_lambda(lambda)?;
        check_dim(self.target.dim(), x.len())?;
        let v = DVector::from_column_slice(x);
        let mut out = DVector::zeros(x.len());
        if lambda < 1.0 {
            out.axpy(1.0 - lambda, &self.base.score(&v), 1.0);
        }
        if lambda > 0.0 {
            out.axpy(lambda, &self.target.score(x)?, 1.0);
        }
        Ok(out)
    }

    /// log of the normalizing constant, by quadrature (d = 1).
    pub fn log_normalizer(&self, lambda: f64) -> Result<f64> {
        if self.target.dim() != 1 {
            return Err(Error::Unsupported(
                "geometric path normalization needs d = 1".into(),
            ));
        }
        let mut marks: Vec<f64> = self.target.landmarks().iter().map(|m| m[0]).collect();
        marks.push(0.0);
        let mut c = f64::NEG_INFINITY;
        for &m in &marks {
            c = c.max(self.log_unnormalized(lambda, &[m])?);
        }
        let scale = self.target.length_scale().min(self.base.sigma());
        let opts = Options::default()
            .with_breakpoints(marks)
            .with_scale(scale)
            .with_rel_tol(1e-10);
        let z = integrate_scalar(
            |x| {
                self.log_unnormalized(lambda, &[x])
                    .map(|l| (l - c).exp())
                    .unwrap_or(0.0)
            },
            f64::NEG_INFINITY,
            f64::INFINITY,
            &opts,
        )?;
        Ok(c + z.ln())
    }

    /// Normalized density at each point of a one-dimensional grid.
    pub fn density_on_grid(&self, lambda: f64, xs: &[f64]) -> Result<Vec<f64>> {
        let lz = self.log_normalizer(lambda)?;
        xs.iter()
            .map(|&x| self.log_unnormalized(lambda, &[x]).map(|l| (l - lz).exp()))
            .collect()
    }
}
