//! Action of the marginal curve: closed-form upper bounds and numerical
//! estimates from discrete Wasserstein metric derivatives.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{lipschitz::LipschitzProfile, Base, DiffusionPath};
use crate::error::{Error, Result};
use crate::linalg::gaussian_w2_squared;
use crate::schedules::Condition;

/// Grid used to compute the schedule constants.
pub const SCHEDULE_GRID: usize = 10_000;

#[derive(Clone, Debug, Serialize)]
pub struct ActionBound {
    #[serde(with = "crate::serde_util")]
    pub value: f64,
    /// Schedule condition whose constant produced `value`.
    pub condition: Condition,
    #[serde(with = "crate::serde_util")]
    pub schedule_constant: f64,
    /// E_π‖X‖².
    pub second_moment: f64,
    /// Every finite bound, one per applicable condition.
    pub candidates: Vec<(Condition, f64)>,
}

/// Closed-form action bound. With a Gaussian base both schedule conditions
/// apply and the smaller finite bound is reported:
///
/// LogDerivative: C_λ·(M₂ + σ²d), SqrtRatio: (C_λ·π/8)·(M₂ + σ²d).
///
/// With a Student's t base only SqrtRatio applies, with σ²d·α/(α-2) in place of σ²d.
pub fn action_bound(path: &DiffusionPath) -> Result<ActionBound> {
    let m2 = path.target().second_moment();
    let noise = path.base().second_moment(path.dim());
    let consts = path.schedule().constants(SCHEDULE_GRID)?;
    let applicable: &[Condition] = match path.base() {
        Base::Gaussian { .. } => &[Condition::LogDerivative, Condition::SqrtRatio],
        Base::StudentT { .. } => &[Condition::SqrtRatio],
    };
    let mut candidates = Vec::new();
    for &c in applicable {
        let k = consts.get(c);
        if !k.is_finite() {
            continue;
        }
        let value = match c {
            Condition::LogDerivative => k * (m2 + noise),
            Condition::SqrtRatio => k * std::f64::consts::PI / 8.0 * (m2 + noise),
        };
        candidates.push((c, value));
    }
    let (condition, value) = candidates
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| {
            let names: Vec<&str> = applicable.iter().map(|c| c.name()).collect();
            Error::InfiniteScheduleConstant(names.join(" and "))
        })?;
    Ok(ActionBound {
        value,
        condition,
        schedule_constant: consts.get(condition),
        second_moment: m2,
        candidates,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionMethod {
    /// Exact W2 between Gaussian marginals.
    GaussianExact,
    /// Sorted samples under a common-random-number coupling (d = 1).
    QuantileCoupling,
}

#[derive(Clone, Debug, Serialize)]
pub struct ActionEstimate {
    pub value: f64,
    pub method: ActionMethod,
    pub grid_points: usize,
    pub samples: usize,
    /// Squared metric derivative at each grid time.
    pub speed2: Vec<f64>,
    /// δ·L_max when the Lipschitz profile is available.
    #[serde(with = "crate::serde_util::option")]
    pub resolution: Option<f64>,
    pub coarse_grid: bool,
}

enum Curve {
    Gaussian(Vec<(DVector<f64>, DMatrix<f64>)>),
    Sorted { x: Vec<f64>, z: Vec<f64> },
}

/// Numerical action: trapezoid sum of squared metric derivatives over a
/// uniform grid of `grid_points` ≥ 100 times on [0, T], with central
/// differences inside and one-sided differences at the ends.
pub fn action_estimate(
    path: &DiffusionPath,
    grid_points: usize,
    n_samples: usize,
    seed: u64,
) -> Result<ActionEstimate> {
    if grid_points < 100 {
        return Err(Error::invalid(format!(
            "action grid needs at least 100 points, got {grid_points}"
        )));
    }
    let big_t = path.schedule().horizon;
    let n = grid_points - 1;
    let delta = big_t / n as f64;
    let times: Vec<f64> = (0..=n).map(|k| big_t * k as f64 / n as f64).collect();
    let lambdas = times
        .iter()
        .map(|&t| path.lambda(t))
        .collect::<Result<Vec<_>>>()?;

    let d = path.dim();
    let gaussian = match (path.base(), path.target().as_gaussian()) {
        (Base::Gaussian { sigma }, Some((m, s))) => Some(
            lambdas
                .iter()
                .map(|&l| {
                    let cov = &s * l + DMatrix::identity(d, d) * ((1.0 - l) * sigma * sigma);
                    (&m * l.sqrt(), cov)
                })
                .collect::<Vec<_>>(),
        ),
        _ => None,
    };
    let (curve, method, samples) = match gaussian {
        Some(g) => (Curve::Gaussian(g), ActionMethod::GaussianExact, 0),
        None if d == 1 => {
            if n_samples < 2 {
                return Err(Error::invalid("quantile coupling needs at least two samples"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x = Vec::with_capacity(n_samples);
            let mut z = Vec::with_capacity(n_samples);
            for _ in 0..n_samples {
                x.push(path.target().sample_one(&mut rng)[0]);
                z.push(path.base().sample_one(1, &mut rng)[0]);
            }
            (Curve::Sorted { x, z }, ActionMethod::QuantileCoupling, n_samples)
        }
        None => {
            return Err(Error::Unsupported(
                "action estimates need d = 1 or Gaussian marginals".into(),
            ))
        }
    };

    let w2 = |a: usize, b: usize, cache: &mut Vec<Option<Vec<f64>>>| -> f64 {
        match &curve {
            Curve::Gaussian(g) => gaussian_w2_squared(&g[a].0, &g[a].1, &g[b].0, &g[b].1).sqrt(),
            Curve::Sorted { x, z } => {
                for &k in &[a, b] {
                    if cache[k].is_none() {
                        let (r, q) = (lambdas[k].sqrt(), (1.0 - lambdas[k]).sqrt());
                        let mut v: Vec<f64> = x.iter().zip(z).map(|(x, z)| r * x + q * z).collect();
                        v.sort_unstable_by(f64::total_cmp);
                        cache[k] = Some(v);
                    }
                }
                let (u, v) = (cache[a].as_ref().unwrap(), cache[b].as_ref().unwrap());
                let s: f64 = u.iter().zip(v).map(|(p, q)| (p - q) * (p - q)).sum();
                (s / u.len() as f64).sqrt()
            }
        }
    };

    let mut cache: Vec<Option<Vec<f64>>> = vec![None; n + 1];
    let mut speed2 = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let (a, b) = if k == 0 {
            (0, 1)
        } else if k == n {
            (n - 1, n)
        } else {
            (k - 1, k + 1)
        };
        let v = w2(a, b, &mut cache) / (delta * (b - a) as f64);
        speed2.push(v * v);
        // sorted marginals older than the stencil are no longer needed
        if k >= 2 {
            cache[k - 2] = None;
        }
    }
    let value = delta
        * (speed2.iter().sum::<f64>() - 0.5 * (speed2[0] + speed2[n]));

    let resolution = LipschitzProfile::uniform(path, grid_points)
        .ok()
        .filter(|p| p.l_max.is_finite())
        .map(|p| delta * p.l_max);
    let coarse_grid = resolution.is_some_and(|r| r > 1.0);
    if coarse_grid {
        log::warn!(
            "action grid is coarse: spacing times L_max = {:.3} exceeds 1",
            resolution.unwrap()
        );
    }
    Ok(ActionEstimate {
        value,
        method,
        grid_points,
        samples,
        speed2,
        resolution,
        coarse_grid,
    })
}
