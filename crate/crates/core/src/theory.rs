//! Step-count planners and the KL bound, with every hidden constant set to 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest κ returned by the planners.
pub const KAPPA_MAX: f64 = 0.999;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerInput {
    /// Target accuracy ε (for ε_score as well).
    pub eps: f64,
    pub d: usize,
    /// E_π‖X‖².
    pub m2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_pi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_pi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl PlannerInput {
    pub fn new(eps: f64, d: usize, m2: f64) -> Self {
        Self {
            eps,
            d,
            m2,
            l_max: None,
            l_pi: None,
            k_pi: None,
            alpha: None,
        }
    }

    pub fn with_l_max(mut self, l_max: f64) -> Self {
        self.l_max = Some(l_max);
        self
    }

    pub fn with_relaxed(mut self, l_pi: f64, k_pi: f64) -> Self {
        self.l_pi = Some(l_pi);
        self.k_pi = Some(k_pi);
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::invalid(format!("eps must be positive, got {}", self.eps)));
        }
        if self.d == 0 {
            return Err(Error::invalid("d must be at least 1"));
        }
        if !(self.m2 >= 0.0) || !self.m2.is_finite() {
            return Err(Error::invalid(format!("M2 must be non-negative, got {}", self.m2)));
        }
        Ok(())
    }

    /// M₂ ∨ d.
    fn scale(&self) -> f64 {
        self.m2.max(self.d as f64)
    }

    fn require(value: Option<f64>, name: &str) -> Result<f64> {
        match value {
            Some(v) if v.is_finite() && v >= 0.0 => Ok(v),
            Some(v) => Err(Error::MissingConstant(format!("{name} = {v} is not finite"))),
            None => Err(Error::MissingConstant(format!("{name} is required"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Plan {
    pub kappa: f64,
    /// Number of steps M.
    pub steps: u64,
    /// M before rounding up; useful when it exceeds the u64 range.
    pub steps_real: f64,
    pub kappa_clamped: bool,
    /// α/(α-2) for the heavy-tailed plan.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail_factor: Option<f64>,
}

fn make_plan(input: &PlannerInput, steps_real: f64) -> Plan {
    let raw = input.eps * input.eps / input.scale();
    let kappa_clamped = raw >= KAPPA_MAX;
    // relative slack keeps ceil from rounding exact products up by one ulp
    let m = (steps_real * (1.0 - 1e-12)).ceil().max(1.0);
    Plan {
        kappa: raw.min(KAPPA_MAX),
        steps: if m >= u64::MAX as f64 { u64::MAX } else { m as u64 },
        steps_real,
        kappa_clamped,
        tail_factor: None,
    }
}

/// κ = ε²/(M₂∨d), M = ⌈d·(M₂∨d)²·L_max²/ε⁶⌉.
pub fn plan_gaussian(input: &PlannerInput) -> Result<Plan> {
    input.validate()?;
    let l = PlannerInput::require(input.l_max, "L_max")?;
    let s = input.scale();
    Ok(make_plan(input, input.d as f64 * s * s * l * l / input.eps.powi(6)))
}

/// M = ⌈(M₂∨d)²·max(d², L_π²d, K_π)·L_π/ε⁶⌉, κ as in [`plan_gaussian`].
pub fn plan_relaxed(input: &PlannerInput) -> Result<Plan> {
    input.validate()?;
    let l = PlannerInput::require(input.l_pi, "L_pi")?;
    let k = PlannerInput::require(input.k_pi, "K_pi")?;
    let d = input.d as f64;
    let s = input.scale();
    let inner = (d * d).max(l * l * d).max(k);
    Ok(make_plan(input, s * s * inner * l / input.eps.powi(6)))
}

/// Same order as [`plan_gaussian`]; α only enters through the reported factor α/(α-2).
pub fn plan_heavy(input: &PlannerInput) -> Result<Plan> {
    let alpha = input
        .alpha
        .ok_or_else(|| Error::invalid("the heavy-tailed plan needs alpha"))?;
    if !(alpha > 2.0) {
        return Err(Error::invalid(format!("alpha must exceed 2, got {alpha}")));
    }
    let mut plan = plan_gaussian(input)?;
    plan.tail_factor = Some(tail_factor(alpha));
    Ok(plan)
}

/// α/(α-2), which tends to 1 as α → ∞.
pub fn tail_factor(alpha: f64) -> f64 {
    if alpha.is_infinite() {
        1.0
    } else {
        alpha / (alpha - 2.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlInput {
    pub kappa: f64,
    pub steps: f64,
    pub l_max: f64,
    pub m2: f64,
    pub d: usize,
    /// ∫ L_t² dt over the path.
    pub int_l2: f64,
    pub eps_score: f64,
}

/// (1 + L²/(M²κ⁴))·κ·(M₂ + d) + (d/(Mκ²))·(1 + L/(Mκ))·∫L² + ε_score².
pub fn kl_rhs_gaussian(input: &KlInput) -> Result<f64> {
    let KlInput {
        kappa,
        steps,
        l_max,
        m2,
        d,
        int_l2,
        eps_score,
    } = *input;
    let all = [kappa, steps, l_max, m2, int_l2, eps_score];
    if all.iter().any(|v| !v.is_finite() || *v < 0.0) || !(kappa > 0.0) || !(steps > 0.0) || d == 0 {
        return Err(Error::invalid(
            "KL bound inputs must be finite, kappa and M positive, the rest non-negative",
        ));
    }
    let d = d as f64;
    let mk = steps * kappa;
    let first = (1.0 + (l_max / (mk * kappa)).powi(2)) * kappa * (m2 + d);
    let second = d / (mk * kappa) * (1.0 + l_max / mk) * int_l2;
    Ok(first + second + eps_score * eps_score)
}
