//! Interpolation schedules t ↦ λ_t on [0, T] and the two regularity constants
//! used by the action bounds:
//!
//! * `LogDerivative`: sup |∂_t log λ_t|
//! * `SqrtRatio`: sup |∂_t λ_t| / √(λ_t(1-λ_t))

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid values above this are reported as unbounded.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// λ = sin²(π (t/T)^φ / 2).
    Cosine { phi: f64 },
    /// λ = g(t)/g(T), g(t) = ½(1 + tanh(φ(t/T - ½))).
    Tanh { phi: f64 },
    /// λ = min{1, e^{-2(T-t)}}.
    Ou,
    /// λ ≡ 1.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    LogDerivative,
    SqrtRatio,
}

impl Condition {
    pub fn name(self) -> &'static str {
        match self {
            Condition::LogDerivative => "log_derivative",
            Condition::SqrtRatio => "sqrt_ratio",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(flatten)]
    pub family: Family,
    /// Horizon T.
    pub horizon: f64,
}

impl Schedule {
    pub fn new(family: Family, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        match family {
            Family::Cosine { phi } | Family::Tanh { phi } if !(phi > 0.0) || !phi.is_finite() => {
                return Err(Error::invalid(format!("phi must be positive, got {phi}")));
            }
            _ => {}
        }
        Ok(Self { family, horizon })
    }

    pub fn cosine(phi: f64, horizon: f64) -> Result<Self> {
        Self::new(Family::Cosine { phi }, horizon)
    }

    pub fn tanh(phi: f64, horizon: f64) -> Result<Self> {
        Self::new(Family::Tanh { phi }, horizon)
    }

    pub fn ou(horizon: f64) -> Result<Self> {
        Self::new(Family::Ou, horizon)
    }

    pub fn constant(horizon: f64) -> Result<Self> {
        Self::new(Family::Constant, horizon)
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.family, self.horizon).map(|_| ())
    }

    /// Accepts t in [0, T] up to rounding and clamps it into range.
    fn check_time(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.horizon;
        if t >= -slack && t <= self.horizon + slack {
            Ok(t.clamp(0.0, self.horizon))
        } else {
            Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            })
        }
    }

    fn tanh_g(phi: f64, s: f64) -> f64 {
        0.5 * (1.0 + (phi * (s - 0.5)).tanh())
    }

    /// λ_t without range checks.
    pub(crate) fn value(&self, t: f64) -> f64 {
        let big_t = self.horizon;
        let s = t / big_t;
        match self.family {
            Family::Cosine { phi } => {
                if s >= 1.0 {
                    1.0
                } else {
                    (0.5 * PI * s.powf(phi)).sin().powi(2)
                }
            }
            Family::Tanh { phi } => {
                if s >= 1.0 {
                    1.0
                } else {
                    Self::tanh_g(phi, s) / Self::tanh_g(phi, 1.0)
                }
            }
            Family::Ou => (-2.0 * (big_t - t)).exp().min(1.0),
            Family::Constant => 1.0,
        }
    }

    /// ∂_t λ_t without range checks; left derivative at kinks.
    pub(crate) fn derivative(&self, t: f64) -> f64 {
        let big_t = self.horizon;
        let s = t / big_t;
        match self.family {
            Family::Cosine { phi } => {
                if s <= 0.0 {
                    if phi < 1.0 {
                        return f64::INFINITY;
                    }
                    return 0.0;
                }
                let u = PI * s.powf(phi);
                0.5 * u.sin() * PI * phi * s.powf(phi - 1.0) / big_t
            }
            Family::Tanh { phi } => {
                let th = (phi * (s - 0.5)).tanh();
                0.5 * phi * (1.0 - th * th) / big_t / Self::tanh_g(phi, 1.0)
            }
            Family::Ou => 2.0 * (-2.0 * (big_t - t)).exp().min(1.0),
            Family::Constant => 0.0,
        }
    }

    pub fn lambda(&self, t: f64) -> Result<f64> {
        let t = self.check_time(t)?;
        Ok(self.value(t))
    }

    pub fn lambda_dot(&self, t: f64) -> Result<f64> {
        let t = self.check_time(t)?;
        Ok(self.derivative(t))
    }

    /// λ at the dilated time κt, t ∈ [0, T/κ].
    pub fn lambda_hat(&self, kappa: f64, t: f64) -> Result<f64> {
        self.lambda(kappa * t)
    }

    /// Smallest t with λ_t ≥ `lambda`, by bisection.
    pub fn time_of(&self, lambda: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::invalid(format!("lambda must lie in [0, 1], got {lambda}")));
        }
        if self.value(0.0) >= lambda {
            return Ok(0.0);
        }
        let (mut lo, mut hi) = (0.0, self.horizon);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.value(mid) >= lambda {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    fn functional(&self, condition: Condition, t: f64) -> f64 {
        let l = self.value(t);
        let dl = self.derivative(t);
        if dl == 0.0 {
            return 0.0;
        }
        match condition {
            Condition::LogDerivative => dl.abs() / l,
            Condition::SqrtRatio => dl.abs() / (l * (1.0 - l)).max(0.0).sqrt(),
        }
    }

    /// Limits of the functional at t = 0 and t = T.
    fn endpoint_limits(&self, condition: Condition) -> (f64, f64) {
        let big_t = self.horizon;
        match (self.family, condition) {
            (Family::Cosine { .. }, Condition::LogDerivative) => (f64::INFINITY, 0.0),
            (Family::Cosine { phi }, Condition::SqrtRatio) => {
                // the ratio equals πφ s^{φ-1}/T on (0, 1)
                let at0 = if phi < 1.0 {
                    f64::INFINITY
                } else if phi == 1.0 {
                    PI / big_t
                } else {
                    0.0
                };
                (at0, PI * phi / big_t)
            }
            (Family::Tanh { .. }, Condition::LogDerivative) => (
                self.functional(condition, 0.0),
                self.functional(condition, big_t),
            ),
            (Family::Tanh { .. }, Condition::SqrtRatio) => {
                (self.functional(condition, 0.0), f64::INFINITY)
            }
            (Family::Ou, Condition::LogDerivative) => (2.0, 2.0),
            (Family::Ou, Condition::SqrtRatio) => {
                (self.functional(condition, 0.0), f64::INFINITY)
            }
            (Family::Constant, _) => (0.0, 0.0),
        }
    }

    /// Supremum of the chosen functional over a uniform grid of `grid_size`
    /// points, with the endpoints replaced by their analytic limits. Values
    /// above [`DIVERGENCE_THRESHOLD`] are returned as infinity.
    pub fn condition_constant(&self, condition: Condition, grid_size: usize) -> Result<f64> {
        if grid_size < 1000 {
            return Err(Error::invalid(format!(
                "grid_size must be at least 1000, got {grid_size}"
            )));
        }
        let (lo, hi) = self.endpoint_limits(condition);
        let mut sup = lo.max(hi);
        let n = grid_size - 1;
        for k in 1..n {
            let t = self.horizon * k as f64 / n as f64;
            sup = sup.max(self.functional(condition, t));
        }
        if sup > DIVERGENCE_THRESHOLD || sup.is_nan() {
            Ok(f64::INFINITY)
        } else {
            Ok(sup)
        }
    }

    pub fn constants(&self, grid_size: usize) -> Result<ScheduleConstants> {
        Ok(ScheduleConstants {
            log_derivative: self.condition_constant(Condition::LogDerivative, grid_size)?,
            sqrt_ratio: self.condition_constant(Condition::SqrtRatio, grid_size)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScheduleConstants {
    #[serde(with = "crate::serde_util")]
    pub log_derivative: f64,
    #[serde(with = "crate::serde_util")]
    pub sqrt_ratio: f64,
}

impl ScheduleConstants {
    pub fn get(&self, c: Condition) -> f64 {
        match c {
            Condition::LogDerivative => self.log_derivative,
            Condition::SqrtRatio => self.sqrt_ratio,
        }
    }
}
