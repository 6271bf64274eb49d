//! Interpolation paths between a base distribution ν and a target π.
//!
//! The diffusion path has marginals μ_t = Law(√λ_t·X + √(1-λ_t)·Z) with
//! X ~ π and Z ~ ν independent. For a Gaussian base and a Gaussian-family
//! target the marginals are available in closed form; otherwise they are
//! evaluated by quadrature (d ≤ 2) or self-normalized importance sampling.

mod action;
mod base;
mod convolution;
mod geometric;
mod lipschitz;

pub use action::{action_bound, action_estimate, ActionBound, ActionEstimate, ActionMethod};
pub use base::{Base, Kernel};
pub use convolution::{Evaluation, SnisEvaluation};
pub use geometric::GeometricPath;
pub use lipschitz::{
    lipschitz_bound, lipschitz_bound_at_lambda, lipschitz_profile, LipschitzBound, LipschitzProfile,
    PoincareSource, Regime,
};

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::schedules::Schedule;
use crate::targets::{SmoothnessReport, Target};
use convolution::Convolution;

/// How marginal scores without a closed form are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMethod {
    /// Closed form, then quadrature when d ≤ 2, then importance sampling.
    #[default]
    Auto,
    ClosedForm,
    Quadrature,
    Snis,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnisOptions {
    pub particles: usize,
    pub max_particles: usize,
    pub ess_floor: f64,
    /// Fall back to quadrature (d ≤ 2) when the particle cap is reached.
    pub quadrature_fallback: bool,
}

impl Default for SnisOptions {
    fn default() -> Self {
        Self {
            particles: 10_000,
            max_particles: 1_000_000,
            ess_floor: 50.0,
            quadrature_fallback: true,
        }
    }
}

/// Diffusion path with base ν, target π and schedule λ.
#[derive(Debug)]
pub struct DiffusionPath {
    base: Base,
    target: Target,
    schedule: Schedule,
    snis: SnisOptions,
    quad_rel_tol: f64,
    smoothness: OnceLock<std::result::Result<SmoothnessReport, String>>,
}

impl Clone for DiffusionPath {
    fn clone(&self) -> Self {
        let smoothness = OnceLock::new();
        if let Some(r) = self.smoothness.get() {
            let _ = smoothness.set(r.clone());
        }
        Self {
            base: self.base,
            target: self.target.clone(),
            schedule: self.schedule,
            snis: self.snis,
            quad_rel_tol: self.quad_rel_tol,
            smoothness,
        }
    }
}

impl DiffusionPath {
    pub fn new(base: Base, target: Target, schedule: Schedule) -> Result<Self> {
        base.validate()?;
        schedule.validate()?;
        Ok(Self {
            base,
            target,
            schedule,
            snis: SnisOptions::default(),
            quad_rel_tol: 1e-10,
            smoothness: OnceLock::new(),
        })
    }

    pub fn with_snis(mut self, snis: SnisOptions) -> Self {
        self.snis = snis;
        self
    }

    pub fn with_quadrature_tolerance(mut self, rel_tol: f64) -> Self {
        self.quad_rel_tol = rel_tol;
        self
    }

    /// Use an externally computed smoothness report instead of analysing the target.
    pub fn with_smoothness(self, report: SmoothnessReport) -> Self {
        let _ = self.smoothness.set(Ok(report));
        self
    }

    pub fn base(&self) -> &Base {
        &self.base
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn snis_options(&self) -> &SnisOptions {
        &self.snis
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    /// Smoothness constants of the target, computed once.
    pub fn smoothness(&self) -> Result<&SmoothnessReport> {
        self.smoothness
            .get_or_init(|| self.target.smoothness().map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| Error::MissingConstant(e.clone()))
    }

    pub fn lambda(&self, t: f64) -> Result<f64> {
        self.schedule.lambda(t)
    }

    /// The marginal at time t.
    pub fn at(&self, t: f64) -> Result<Marginal<'_>> {
        self.at_lambda(self.lambda(t)?)
    }

    /// The marginal at schedule value λ.
    pub fn at_lambda(&self, lambda: f64) -> Result<Marginal<'_>> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        let form = if lambda == 0.0 {
            Form::Base
        } else if lambda == 1.0 {
            Form::Target
        } else {
            let closed = match self.base {
                Base::Gaussian { sigma } => self
                    .target
                    .diffuse_gaussian(lambda, (1.0 - lambda) * sigma * sigma)
                    .transpose()?,
                Base::StudentT { .. } => None,
            };
            match closed {
                Some(t) => Form::Closed(t),
                None => Form::Convolution(self.base.kernel(self.dim(), 1.0 - lambda)),
            }
        };
        Ok(Marginal {
            path: self,
            lambda,
            form,
        })
    }

    pub fn marginal_density(&self, t: f64, x: &[f64]) -> Result<f64> {
        self.marginal_log_density(t, x).map(f64::exp)
    }

    pub fn marginal_log_density(&self, t: f64, x: &[f64]) -> Result<f64> {
        let x = self.point(x)?;
        self.at(t)?.log_density(&x)
    }

    /// ∇log μ_t(x) with [`ScoreMethod::Auto`]; importance sampling, when
    /// needed, uses a fixed internal seed.
    pub fn marginal_score(&self, t: f64, x: &[f64]) -> Result<DVector<f64>> {
        let x = self.point(x)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.at(t)?.score(&x, ScoreMethod::Auto, &mut rng)
    }

    pub fn marginal_hessian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        let x = self.point(x)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.at(t)?.evaluate(&x, ScoreMethod::Auto, &mut rng).map(|e| e.hessian)
    }

    fn point(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("evaluation point".into()));
        }
        Ok(DVector::from_column_slice(x))
    }

    /// One exact draw of √λ·X + √(1-λ)·Z.
    pub fn sample_marginal<R: Rng + ?Sized>(&self, lambda: f64, rng: &mut R) -> DVector<f64> {
        let x = self.target.sample_one(rng);
        let z = self.base.sample_one(self.dim(), rng);
        x * lambda.sqrt() + z * (1.0 - lambda).sqrt()
    }
}

#[derive(Clone, Debug)]
enum Form {
    Base,
    Target,
    Closed(Target),
    Convolution(Kernel),
}

/// A diffusion-path marginal frozen at one value of λ.
#[derive(Clone, Debug)]
pub struct Marginal<'a> {
    path: &'a DiffusionPath,
    lambda: f64,
    form: Form,
}

impl Marginal<'_> {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn has_closed_form(&self) -> bool {
        !matches!(self.form, Form::Convolution(_))
    }

    /// The marginal as a target when it is available in closed form.
    pub fn as_target(&self) -> Option<&Target> {
        match &self.form {
            Form::Target => Some(&self.path.target),
            Form::Closed(t) => Some(t),
            _ => None,
        }
    }

    fn convolution(&self, kernel: Kernel) -> Convolution<'_> {
        Convolution {
            target: &self.path.target,
            kernel,
            lambda: self.lambda,
        }
    }

    fn closed(&self, x: &DVector<f64>) -> Option<Evaluation> {
        let (l, s, h) = match &self.form {
            Form::Base => {
                let b = &self.path.base;
                (b.log_density(x), b.score(x), b.hessian(x))
            }
            Form::Target => {
                let t = &self.path.target;
                (t.log_density_v(x), t.score_v(x), t.hessian_v(x))
            }
            Form::Closed(t) => (t.log_density_v(x), t.score_v(x), t.hessian_v(x)),
            Form::Convolution(_) => return None,
        };
        Some(Evaluation {
            log_density: l,
            score: s,
            hessian: h,
        })
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        match &self.form {
            Form::Base => Ok(self.path.base.log_density(x)),
            Form::Target => Ok(self.path.target.log_density_v(x)),
            Form::Closed(t) => Ok(t.log_density_v(x)),
            Form::Convolution(k) => {
                if x.len() <= 2 {
                    Ok(self.convolution(*k).quadrature(x, self.path.quad_rel_tol)?.log_density)
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(0);
                    Ok(self.snis(*k, x, &mut rng)?.evaluation.log_density)
                }
            }
        }
    }

    /// Score only; the cheapest route for the closed forms.
    pub fn score<R: Rng + ?Sized>(
        &self,
        x: &DVector<f64>,
        method: ScoreMethod,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        match &self.form {
            Form::Base => Ok(self.path.base.score(x)),
            Form::Target => self.finite(self.path.target.score_v(x)),
            Form::Closed(t) => self.finite(t.score_v(x)),
            Form::Convolution(_) => self.evaluate(x, method, rng).map(|e| e.score),
        }
    }

    fn finite(&self, s: DVector<f64>) -> Result<DVector<f64>> {
        if s.iter().all(|v| v.is_finite()) {
            Ok(s)
        } else {
            Err(Error::ZeroDensity)
        }
    }

    /// Log density, score and Hessian at x.
    pub fn evaluate<R: Rng + ?Sized>(
        &self,
        x: &DVector<f64>,
        method: ScoreMethod,
        rng: &mut R,
    ) -> Result<Evaluation> {
        check_dim(self.path.dim(), x.len())?;
        let k = match &self.form {
            Form::Convolution(k) => *k,
            _ => {
                if method != ScoreMethod::Auto && method != ScoreMethod::ClosedForm {
                    log::debug!("closed form used in place of {method:?}");
                }
                return Ok(self.closed(x).expect("closed form"));
            }
        };
        match method {
            ScoreMethod::ClosedForm => Err(Error::Unsupported(
                "this marginal has no closed form".into(),
            )),
            ScoreMethod::Quadrature => self.convolution(k).quadrature(x, self.path.quad_rel_tol),
            ScoreMethod::Auto if x.len() <= 2 => {
                self.convolution(k).quadrature(x, self.path.quad_rel_tol)
            }
            ScoreMethod::Auto | ScoreMethod::Snis => Ok(self.snis(k, x, rng)?.evaluation),
        }
    }

    /// Importance sampling with particle doubling until the effective sample
    /// size clears the floor, then the quadrature fallback or an error.
    pub fn snis_evaluate<R: Rng + ?Sized>(
        &self,
        x: &DVector<f64>,
        rng: &mut R,
    ) -> Result<SnisEvaluation> {
        match &self.form {
            Form::Convolution(k) => self.snis(*k, x, rng),
            _ => Ok(SnisEvaluation {
                evaluation: self.closed(x).expect("closed form"),
                ess: f64::INFINITY,
                particles: 0,
            }),
        }
    }

    fn snis<R: Rng + ?Sized>(
        &self,
        k: Kernel,
        x: &DVector<f64>,
        rng: &mut R,
    ) -> Result<SnisEvaluation> {
        let opts = &self.path.snis;
        let conv = self.convolution(k);
        let mut n = opts.particles.max(1);
        loop {
            let est = conv.snis(x, n, rng)?;
            if est.ess >= opts.ess_floor {
                return Ok(est);
            }
            if n >= opts.max_particles {
                if opts.quadrature_fallback && x.len() <= 2 {
                    log::debug!(
                        "ESS {:.1} with {n} particles at lambda = {}; using quadrature",
                        est.ess,
                        self.lambda
                    );
                    let evaluation = conv.quadrature(x, self.path.quad_rel_tol)?;
                    return Ok(SnisEvaluation {
                        evaluation,
                        ess: est.ess,
                        particles: n,
                    });
                }
                return Err(Error::LowEss {
                    ess: est.ess,
                    floor: opts.ess_floor,
                    particles: n,
                });
            }
            n = (2 * n).min(opts.max_particles);
        }
    }
}

#[cfg(test)]
mod tests;
