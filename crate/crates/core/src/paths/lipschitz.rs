//! Upper bounds L_t on the Lipschitz constant of ∇log μ_t.
//!
//! Gaussian base N(0, σ²I): with n = 1/(σ²(1-λ)) the Hessian of -log μ_t is
//! sandwiched by
//!
//! a_t = min{n, L_π/λ},
//! b_t = max{n(1 - C·n), -(L_π/λ)(1 + C·L_π/λ)},
//!
//! where C bounds the Poincaré constant of the posterior ρ_{t,x}; then
//! L_t = max{a_t, |b_t|}.
//!
//! Student's t base t(0, σ²I, α):
//! L_t = min{L_σ/(1-λ) + (α+d)²/(2ασ²(1-λ)), (L_π + C_π)/λ}, L_σ = (α+d)/(ασ²).
//!
//! An equal-covariance Gaussian mixture stays one under a Gaussian base, with
//! covariance S = λΣ + (1-λ)σ²I and means √λ m_i. Its negative log-Hessian is
//! S⁻¹ - Cov_q(S⁻¹√λ m_i), and the covariance is at most D²/4 for the diameter
//! D of {S⁻¹√λ m_i}. This gives a second candidate; the smaller one is reported.

use nalgebra::DMatrix;
use serde::Serialize;

use super::{Base, DiffusionPath};
use crate::error::{Error, Result};
use crate::targets::{SmoothnessReport, Target};

/// Which expression determined the bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// λ = 0: the base's own constant.
    Base,
    /// λ = 1: the target's constant.
    Target,
    /// Upper curvature bound from the noise kernel.
    UpperNoise,
    /// Upper curvature bound from the target.
    UpperTarget,
    /// Lower curvature bound, noise branch.
    LowerNoise,
    /// Lower curvature bound, target branch.
    LowerTarget,
    /// Spread of the component means of an equal-covariance mixture.
    MixtureSpread,
}

/// Source of the posterior Poincaré constant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PoincareSource {
    /// The posterior is strongly log-concave.
    StronglyLogConcave,
    /// Perturbation of a potential that is convex outside a ball.
    ConvexOutsideBall,
    /// Perturbation using the target's Hessian decay envelope.
    HessianDecay,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LipschitzBound {
    pub lambda: f64,
    #[serde(with = "crate::serde_util")]
    pub value: f64,
    /// Upper bound on the largest eigenvalue of -∇²log μ_t.
    #[serde(with = "crate::serde_util")]
    pub upper: f64,
    /// Lower bound on the smallest eigenvalue of -∇²log μ_t.
    #[serde(with = "crate::serde_util")]
    pub lower: f64,
    pub regime: Regime,
    #[serde(with = "crate::serde_util::option")]
    pub poincare: Option<f64>,
    pub poincare_source: Option<PoincareSource>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzProfile {
    pub times: Vec<f64>,
    pub bounds: Vec<LipschitzBound>,
    #[serde(with = "crate::serde_util")]
    pub l_max: f64,
}

fn require_lipschitz(rep: &SmoothnessReport) -> Result<f64> {
    if rep.lipschitz_ok && rep.l_pi.is_finite() {
        Ok(rep.l_pi)
    } else {
        Err(Error::MissingConstant(
            "the target score has no finite Lipschitz constant".into(),
        ))
    }
}

/// Poincaré constant bound of the posterior for a Gaussian base.
fn poincare_gaussian(
    sigma2: f64,
    lambda: f64,
    rep: &SmoothnessReport,
    l_pi: f64,
) -> Result<(f64, PoincareSource)> {
    let noise = 1.0 / (sigma2 * (1.0 - lambda));
    let mut best: Option<(f64, PoincareSource)> = None;
    let mut offer = |c: f64, src: PoincareSource| {
        if best.is_none_or(|b| c < b.0) {
            best = Some((c, src));
        }
    };
    let gap = noise - l_pi / lambda;
    if gap > 0.0 {
        offer(1.0 / gap, PoincareSource::StronglyLogConcave);
    }
    if rep.strongly_convex_outside_ball && rep.m_pi > 0.0 && rep.r.is_finite() {
        let log_c = std::f64::consts::LN_2 - (rep.m_pi / lambda + noise).ln()
            + 16.0 * (l_pi + lambda * noise) * rep.r * rep.r;
        offer(log_c.exp(), PoincareSource::ConvexOutsideBall);
    } else if let Some(dec) = rep.hessian_decay {
        let r = if rep.r.is_finite() { rep.r } else { 0.0 };
        let r2 = (lambda * r * r).max((2.0 * sigma2 * (1.0 - lambda) - lambda * dec.alpha1) / dec.alpha2);
        let log_c = (4.0 * sigma2 * (1.0 - lambda)).ln() + 16.0 * (l_pi / lambda + noise) * r2;
        offer(log_c.exp(), PoincareSource::HessianDecay);
    }
    best.ok_or_else(|| {
        Error::MissingConstant(format!(
            "no Poincaré bound for the posterior at lambda = {lambda}: the target is neither \
             strongly convex outside a ball nor equipped with a Hessian decay envelope"
        ))
    })
}

/// Bound from the means' spread for an equal-covariance mixture target.
fn mixture_spread(target: &Target, sigma2: f64, lambda: f64) -> Option<LipschitzBound> {
    let Target::GaussianMixture(g) = target else {
        return None;
    };
    if !g.has_equal_covariances() {
        return None;
    }
    let comps = g.components();
    let d = g.dim();
    let cov = &comps[0].cov.matrix * lambda + DMatrix::identity(d, d) * ((1.0 - lambda) * sigma2);
    let eig = cov.clone().symmetric_eigenvalues();
    let (s_min, s_max) = (eig.min(), eig.max());
    let prec = cov.try_inverse()?;
    let mut diam2: f64 = 0.0;
    for (i, a) in comps.iter().enumerate() {
        for b in &comps[i + 1..] {
            diam2 = diam2.max(lambda * (&prec * (&a.mean - &b.mean)).norm_squared());
        }
    }
    let upper = 1.0 / s_min;
    let lower = 1.0 / s_max - diam2 / 4.0;
    Some(LipschitzBound {
        lambda,
        value: upper.max(lower.abs()),
        upper,
        lower,
        regime: Regime::MixtureSpread,
        poincare: None,
        poincare_source: None,
    })
}

/// L_t at schedule value λ.
pub fn lipschitz_bound_at_lambda(path: &DiffusionPath, lambda: f64) -> Result<LipschitzBound> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let d = path.dim();
    let base = path.base();
    let endpoint = |value: f64, regime| LipschitzBound {
        lambda,
        value,
        upper: value,
        lower: -value,
        regime,
        poincare: None,
        poincare_source: None,
    };
    if lambda == 0.0 {
        return Ok(endpoint(base.lipschitz(d), Regime::Base));
    }
    if lambda == 1.0 {
        let l = require_lipschitz(path.smoothness()?)?;
        return Ok(endpoint(l, Regime::Target));
    }
    match *base {
        Base::Gaussian { sigma } => {
            let generic = gaussian_base_bound(path, sigma, lambda);
            match (generic, mixture_spread(path.target(), sigma * sigma, lambda)) {
                (Ok(a), Some(b)) => Ok(if b.value < a.value { b } else { a }),
                (Err(_), Some(b)) => Ok(b),
                (res, None) => res,
            }
        }
        Base::StudentT { sigma, dof } => {
            let df = d as f64;
            let s2 = sigma * sigma;
            let l_sigma = (dof + df) / (dof * s2);
            let noise_upper =
                l_sigma / (1.0 - lambda) + (dof + df).powi(2) / (2.0 * dof * s2 * (1.0 - lambda));
            // the target branch needs L_π and C_π; without them only the noise branch applies
            let (l_pi, c_pi) = match path.smoothness() {
                Ok(rep) if rep.lipschitz_ok && rep.l_pi.is_finite() => {
                    (rep.l_pi, rep.c_pi.unwrap_or(f64::INFINITY))
                }
                _ => (f64::INFINITY, f64::INFINITY),
            };
            let target_upper = (l_pi + c_pi) / lambda;
            let (value, regime) = if noise_upper <= target_upper {
                (noise_upper, Regime::UpperNoise)
            } else {
                (target_upper, Regime::UpperTarget)
            };
            let lower = (-l_sigma / (1.0 - lambda)).max(-l_pi / lambda);
            Ok(LipschitzBound {
                lambda,
                value,
                upper: value,
                lower,
                regime,
                poincare: None,
                poincare_source: None,
            })
        }
    }
}

fn gaussian_base_bound(path: &DiffusionPath, sigma: f64, lambda: f64) -> Result<LipschitzBound> {
    let rep = path.smoothness()?;
    let l_pi = require_lipschitz(rep)?;
    let s2 = sigma * sigma;
    let noise = 1.0 / (s2 * (1.0 - lambda));
    let tgt = l_pi / lambda;
    let (a, a_branch) = if noise <= tgt {
        (noise, Regime::UpperNoise)
    } else {
        (tgt, Regime::UpperTarget)
    };
    let (c, src) = poincare_gaussian(s2, lambda, rep, l_pi)?;
    let b_noise = noise * (1.0 - c * noise);
    let b_tgt = -tgt * (1.0 + c * tgt);
    let (b, b_branch) = if b_noise >= b_tgt || b_tgt.is_nan() {
        (b_noise, Regime::LowerNoise)
    } else {
        (b_tgt, Regime::LowerTarget)
    };
    let b = if b.is_nan() { f64::NEG_INFINITY } else { b };
    let (value, regime) = if a >= b.abs() {
        (a, a_branch)
    } else {
        (b.abs(), b_branch)
    };
    Ok(LipschitzBound {
        lambda,
        value,
        upper: a,
        lower: b,
        regime,
        poincare: Some(c),
        poincare_source: Some(src),
    })
}

/// L_t at time t.
pub fn lipschitz_bound(path: &DiffusionPath, t: f64) -> Result<LipschitzBound> {
    lipschitz_bound_at_lambda(path, path.lambda(t)?)
}

/// L_t on a grid of times and its maximum.
pub fn lipschitz_profile(path: &DiffusionPath, times: &[f64]) -> Result<LipschitzProfile> {
    if times.is_empty() {
        return Err(Error::invalid("time grid is empty"));
    }
    let bounds = times
        .iter()
        .map(|&t| lipschitz_bound(path, t))
        .collect::<Result<Vec<_>>>()?;
    let l_max = bounds.iter().map(|b| b.value).fold(0.0, f64::max);
    Ok(LipschitzProfile {
        times: times.to_vec(),
        bounds,
        l_max,
    })
}

impl LipschitzProfile {
    /// Uniform grid of `n` ≥ 2 times on [0, T].
    pub fn uniform(path: &DiffusionPath, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("a profile needs at least two grid points"));
        }
        let big_t = path.schedule().horizon;
        let times: Vec<f64> = (0..n).map(|k| big_t * k as f64 / (n - 1) as f64).collect();
        lipschitz_profile(path, &times)
    }

    /// Piecewise-constant lookup of the bound at time t (nearest grid point at or below t).
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t).saturating_sub(1);
        self.bounds[k].value
    }
}
