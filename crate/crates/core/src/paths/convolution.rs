//! Marginals without a closed form: μ(x) = E_U[k(x - √λ·U)] with U drawn
//! from the target and k the scaled base kernel. The score and Hessian are
//! posterior expectations over ρ(u) ∝ π(u)·k(x - √λ·u):
//!
//! ∇log μ = E_ρ[∇log k],  ∇²log μ = E_ρ[∇²log k + ∇log k ∇log kᵀ] - ∇log μ ∇log μᵀ.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::base::Kernel;
use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_plane, Options};
use crate::special::log_sum_exp;
use crate::targets::Target;

/// Log density, score and Hessian of a marginal at one point.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub log_density: f64,
    pub score: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Outcome of a self-normalized importance sampling evaluation.
#[derive(Clone, Debug)]
pub struct SnisEvaluation {
    pub evaluation: Evaluation,
    pub ess: f64,
    pub particles: usize,
}

#[derive(Clone, Copy)]
pub(crate) struct Convolution<'a> {
    pub target: &'a Target,
    pub kernel: Kernel,
    pub lambda: f64,
}

impl Convolution<'_> {
    fn root(&self) -> f64 {
        self.lambda.sqrt()
    }

    /// Rough location of the posterior's peak, used to keep the integrand in range.
    fn log_offset(&self, x: &DVector<f64>) -> f64 {
        let root = self.root();
        let center = x / root;
        let mut best = f64::NEG_INFINITY;
        let mut probe = |u: &DVector<f64>| {
            let v = x - u * root;
            let l = self.target.log_density_v(u) + self.kernel.log_pdf(v.norm_squared());
            if l > best {
                best = l;
            }
        };
        probe(&center);
        for mark in self.target.landmarks() {
            for k in 0..=8 {
                let a = k as f64 / 8.0;
                probe(&(&center * (1.0 - a) + &mark * a));
            }
        }
        best
    }

    fn length_scale(&self) -> f64 {
        let kernel_width = self.kernel.scale2().sqrt() / self.root();
        self.target.length_scale().min(kernel_width)
    }

    pub fn quadrature(&self, x: &DVector<f64>, rel_tol: f64) -> Result<Evaluation> {
        match x.len() {
            1 => self.quadrature_1d(x[0], rel_tol),
            2 => self.quadrature_2d(x, rel_tol),
            d => Err(Error::Unsupported(format!(
                "quadrature marginals need d <= 2, got d = {d}"
            ))),
        }
    }

    fn quadrature_1d(&self, x: f64, rel_tol: f64) -> Result<Evaluation> {
        let root = self.root();
        let xv = DVector::from_element(1, x);
        let c = self.log_offset(&xv);
        if !c.is_finite() {
            return Err(Error::ZeroDensity);
        }
        let mut breaks: Vec<f64> = self.target.landmarks().iter().map(|m| m[0]).collect();
        breaks.push(x / root);
        let opts = Options::default()
            .with_rel_tol(rel_tol)
            .with_breakpoints(breaks)
            .with_scale(self.length_scale());
        let mut u_buf = DVector::zeros(1);
        let est = integrate(
            |u| {
                u_buf[0] = u;
                let v = x - root * u;
                let r2 = v * v;
                let w = (self.target.log_density_v(&u_buf) + self.kernel.log_pdf(r2) - c).exp();
                if w == 0.0 {
                    return [0.0; 3];
                }
                let cf = self.kernel.grad_coef(r2);
                let g = -cf * v;
                let h = -cf + self.kernel.hess_coef(r2) * r2;
                [w, w * g, w * (h + g * g)]
            },
            f64::NEG_INFINITY,
            f64::INFINITY,
            &opts,
        )?;
        let [i0, i1, i2] = est.value;
        if !(i0 > 0.0) {
            return Err(Error::ZeroDensity);
        }
        let s = i1 / i0;
        Ok(Evaluation {
            log_density: c + i0.ln(),
            score: DVector::from_element(1, s),
            hessian: DMatrix::from_element(1, 1, i2 / i0 - s * s),
        })
    }

    fn quadrature_2d(&self, x: &DVector<f64>, rel_tol: f64) -> Result<Evaluation> {
        let root = self.root();
        let c = self.log_offset(x);
        if !c.is_finite() {
            return Err(Error::ZeroDensity);
        }
        let marks = self.target.landmarks();
        let scale = self.length_scale();
        let axis_opts = |k: usize| {
            let mut b: Vec<f64> = marks.iter().map(|m| m[k]).collect();
            b.push(x[k] / root);
            Options::default()
                .with_rel_tol(rel_tol)
                .with_breakpoints(b)
                .with_scale(scale)
        };
        let (x0, x1) = (x[0], x[1]);
        let est = integrate_plane(
            |u0, u1| {
                let u = DVector::from_row_slice(&[u0, u1]);
                let v0 = x0 - root * u0;
                let v1 = x1 - root * u1;
                let r2 = v0 * v0 + v1 * v1;
                let w = (self.target.log_density_v(&u) + self.kernel.log_pdf(r2) - c).exp();
                if w == 0.0 {
                    return [0.0; 6];
                }
                let cf = self.kernel.grad_coef(r2);
                let e = self.kernel.hess_coef(r2);
                let (g0, g1) = (-cf * v0, -cf * v1);
                [
                    w,
                    w * g0,
                    w * g1,
                    w * (-cf + e * v0 * v0 + g0 * g0),
                    w * (e * v0 * v1 + g0 * g1),
                    w * (-cf + e * v1 * v1 + g1 * g1),
                ]
            },
            &axis_opts(0),
            &axis_opts(1),
        )?;
        let i = est.value;
        if !(i[0] > 0.0) {
            return Err(Error::ZeroDensity);
        }
        let s = DVector::from_row_slice(&[i[1] / i[0], i[2] / i[0]]);
        let mut h = DMatrix::from_row_slice(2, 2, &[i[3], i[4], i[4], i[5]]) / i[0];
        h.ger(-1.0, &s, &s, 1.0);
        Ok(Evaluation {
            log_density: c + i[0].ln(),
            score: s,
            hessian: h,
        })
    }

    /// Importance sampling with the kernel itself as proposal for the noise.
    /// In one dimension the noise is drawn by stratified inverse-CDF sampling.
    pub fn snis<R: Rng + ?Sized>(
        &self,
        x: &DVector<f64>,
        particles: usize,
        rng: &mut R,
    ) -> Result<SnisEvaluation> {
        let d = x.len();
        let root = self.root();
        let scale = self.kernel.scale2().sqrt();
        let mut noise: Vec<DVector<f64>> = Vec::with_capacity(particles);
        if d == 1 {
            for i in 0..particles {
                let p = (i as f64 + rng.random::<f64>()) / particles as f64;
                let p = p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                noise.push(DVector::from_element(1, scale * self.kernel.standard_quantile(p)));
            }
        } else {
            for _ in 0..particles {
                noise.push(self.kernel.sample_standard(rng) * scale);
            }
        }
        let mut logw: Vec<f64> = noise
            .iter()
            .map(|v| self.target.log_density_v(&((x - v) / root)))
            .collect();
        let lse = log_sum_exp(&logw);
        if !lse.is_finite() {
            return Err(Error::ZeroDensity);
        }
        let mut sum_sq = 0.0;
        for w in logw.iter_mut() {
            *w = (*w - lse).exp();
            sum_sq += *w * *w;
        }
        let ess = 1.0 / sum_sq;
        let mut s = DVector::zeros(d);
        let mut m2 = DMatrix::zeros(d, d);
        for (w, v) in logw.iter().zip(&noise) {
            let g = self.kernel.grad(v);
            s.axpy(*w, &g, 1.0);
            m2 += self.kernel.hess(v) * *w;
            m2.ger(*w, &g, &g, 1.0);
        }
        m2.ger(-1.0, &s, &s, 1.0);
        let log_density = lse - (particles as f64).ln() - 0.5 * d as f64 * self.lambda.ln();
        Ok(SnisEvaluation {
            evaluation: Evaluation {
                log_density,
                score: s,
                hessian: m2,
            },
            ess,
            particles,
        })
    }
}
