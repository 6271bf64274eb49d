//! Diffusion annealed Langevin Monte Carlo:
//!
//! X_{l+1} = X_l + h_l·s(X_l, κt_l) + √(2h_l)·ξ_l,  X_0 ~ ν,  Σ h_l = T/κ,
//!
//! where s is a (possibly perturbed) oracle for the marginal score ∇log μ.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{DiffusionPath, LipschitzProfile, Marginal, ScoreMethod};

/// States with a norm beyond this flag the chain as diverged.
pub const BLOW_UP_NORM: f64 = 1e6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPlan {
    #[default]
    Uniform,
    /// h_l ∝ 1/L_t, placing equal mass of ∫L_t dt in every step.
    LipschitzAdaptive,
}

/// Controlled error added to the exact marginal score.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Perturbation {
    #[default]
    None,
    /// Constant additive bias b.
    Bias { bias: Vec<f64> },
    /// Independent N(0, τ²I) noise at every evaluation.
    Noise { tau: f64 },
}

impl Perturbation {
    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            Perturbation::None => Ok(()),
            Perturbation::Bias { bias } => {
                if bias.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: bias.len(),
                    });
                }
                if bias.iter().any(|b| !b.is_finite()) {
                    return Err(Error::NonFinite("score bias".into()));
                }
                Ok(())
            }
            Perturbation::Noise { tau } => {
                if *tau >= 0.0 && tau.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid(format!("noise scale must be non-negative, got {tau}")))
                }
            }
        }
    }

    /// Expected value of Σ h_l‖s - ∇log μ‖² when Σ h_l = `total_time`.
    pub fn implied_eps2(&self, total_time: f64, d: usize) -> f64 {
        match self {
            Perturbation::None => 0.0,
            Perturbation::Bias { bias } => total_time * bias.iter().map(|b| b * b).sum::<f64>(),
            Perturbation::Noise { tau } => total_time * d as f64 * tau * tau,
        }
    }
}

/// Score oracle: the path's marginal score plus an optional perturbation.
#[derive(Clone, Debug)]
pub struct ScoreOracle<'a> {
    path: &'a DiffusionPath,
    perturbation: Perturbation,
    method: ScoreMethod,
}

impl<'a> ScoreOracle<'a> {
    pub fn new(path: &'a DiffusionPath) -> Self {
        Self {
            path,
            perturbation: Perturbation::None,
            method: ScoreMethod::Auto,
        }
    }

    pub fn with_method(mut self, method: ScoreMethod) -> Self {
        self.method = method;
        self
    }

    pub fn path(&self) -> &'a DiffusionPath {
        self.path
    }

    pub fn perturbation(&self) -> &Perturbation {
        &self.perturbation
    }

    pub fn method(&self) -> ScoreMethod {
        self.method
    }

    pub fn implied_eps2(&self, total_time: f64) -> f64 {
        self.perturbation.implied_eps2(total_time, self.path.dim())
    }

    /// s(x) at path time `s`, i.e. at the dilated time s/κ of the sampler.
    pub fn score<R: Rng + ?Sized>(&self, s: f64, x: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
        let m = self.path.at(s)?;
        self.score_on(&m, x, rng).map(|(v, _)| v)
    }

    /// Score on a precomputed marginal, with the ESS when importance sampling ran.
    pub(crate) fn score_on<R: Rng + ?Sized>(
        &self,
        m: &Marginal<'_>,
        x: &DVector<f64>,
        rng: &mut R,
    ) -> Result<(DVector<f64>, Option<f64>)> {
        let uses_snis = !m.has_closed_form()
            && (self.method == ScoreMethod::Snis
                || (self.method == ScoreMethod::Auto && x.len() > 2));
        let (mut s, ess) = if uses_snis {
            let e = m.snis_evaluate(x, rng)?;
            (e.evaluation.score, Some(e.ess))
        } else {
            (m.score(x, self.method, rng)?, None)
        };
        match &self.perturbation {
            Perturbation::None => {}
            Perturbation::Bias { bias } => {
                for (v, b) in s.iter_mut().zip(bias) {
                    *v += b;
                }
            }
            Perturbation::Noise { tau } => {
                for v in s.iter_mut() {
                    *v += tau * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        Ok((s, ess))
    }
}

/// Wrap an oracle with a perturbation.
pub fn perturb_score<'a>(oracle: ScoreOracle<'a>, perturbation: Perturbation) -> Result<ScoreOracle<'a>> {
    perturbation.validate(oracle.path.dim())?;
    Ok(ScoreOracle {
        perturbation,
        ..oracle
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub kappa: f64,
    /// Number of steps M.
    pub steps: usize,
    #[serde(default)]
    pub step_plan: StepPlan,
    pub chains: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub perturbation: Perturbation,
    /// Record all states every this many steps; 0 keeps only the final states.
    #[serde(default)]
    pub record_every: usize,
    #[serde(default)]
    pub score_method: ScoreMethod,
    /// Grid size of the Lipschitz profile used by the adaptive plan.
    #[serde(default = "default_profile_grid")]
    pub profile_grid: usize,
}

fn default_profile_grid() -> usize {
    1000
}

impl SamplerConfig {
    pub fn new(kappa: f64, steps: usize, chains: usize, seed: u64) -> Self {
        Self {
            kappa,
            steps,
            step_plan: StepPlan::Uniform,
            chains,
            seed,
            perturbation: Perturbation::None,
            record_every: 0,
            score_method: ScoreMethod::Auto,
            profile_grid: default_profile_grid(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::invalid(format!("kappa must lie in (0, 1), got {}", self.kappa)));
        }
        if self.steps == 0 {
            return Err(Error::invalid("at least one step is required"));
        }
        if self.chains == 0 {
            return Err(Error::invalid("at least one chain is required"));
        }
        if self.step_plan == StepPlan::LipschitzAdaptive && self.profile_grid < 2 {
            return Err(Error::invalid("profile_grid must be at least 2"));
        }
        Ok(())
    }
}

/// Step sizes h_0..h_{M-1} summing to T/κ.
pub fn step_size_plan(
    horizon: f64,
    kappa: f64,
    steps: usize,
    plan: StepPlan,
    profile: Option<&LipschitzProfile>,
) -> Result<Vec<f64>> {
    if !(horizon > 0.0) || !(kappa > 0.0) || steps == 0 {
        return Err(Error::invalid("step plan needs T > 0, kappa > 0 and M >= 1"));
    }
    let total = horizon / kappa;
    let mut h = match plan {
        StepPlan::Uniform => vec![total / steps as f64; steps],
        StepPlan::LipschitzAdaptive => {
            let p = profile.ok_or_else(|| {
                Error::invalid("the adaptive step plan requires a Lipschitz profile")
            })?;
            adaptive_grid(p, horizon, steps)?
                .windows(2)
                .map(|w| (w[1] - w[0]) / kappa)
                .collect()
        }
    };
    let sum: f64 = h.iter().sum();
    let scale = total / sum;
    for v in h.iter_mut() {
        *v *= scale;
    }
    if h.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::invalid("step plan produced a non-positive step"));
    }
    Ok(h)
}

/// Times 0 = s_0 < … < s_M = T splitting ∫L dt (L piecewise constant on the
/// profile grid) into equal parts.
fn adaptive_grid(p: &LipschitzProfile, horizon: f64, steps: usize) -> Result<Vec<f64>> {
    if p.bounds.iter().any(|b| !b.value.is_finite() || !(b.value > 0.0)) {
        return Err(Error::MissingConstant(
            "the Lipschitz profile has infinite or non-positive entries".into(),
        ));
    }
    let mut knots: Vec<f64> = p.times.iter().copied().filter(|&t| t < horizon).collect();
    if knots.first() != Some(&0.0) {
        knots.insert(0, 0.0);
    }
    knots.push(horizon);
    let mut cum = vec![0.0];
    for w in knots.windows(2) {
        let last = *cum.last().unwrap();
        cum.push(last + p.at(w[0]) * (w[1] - w[0]));
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(0.0);
    let mut j = 0;
    for l in 1..steps {
        let target = total * l as f64 / steps as f64;
        while cum[j + 1] < target {
            j += 1;
        }
        let frac = (target - cum[j]) / (cum[j + 1] - cum[j]);
        out.push(knots[j] + frac * (knots[j + 1] - knots[j]));
    }
    out.push(horizon);
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct Snapshot {
    pub step: usize,
    /// Sampler time t_l (path time κt_l).
    pub time: f64,
    /// State of every chain, flagged chains included.
    pub states: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub dim: usize,
    pub kappa: f64,
    pub step_sizes: Vec<f64>,
    /// t_0..t_M with t_M = T/κ.
    pub times: Vec<f64>,
    pub snapshots: Vec<Snapshot>,
    /// Final states of the chains that were not flagged.
    pub final_samples: Vec<Vec<f64>>,
    /// Chain index of each final sample.
    pub chain_ids: Vec<usize>,
    pub flagged: Vec<usize>,
    /// Smallest effective sample size per step when importance sampling was used.
    pub min_ess: Option<Vec<f64>>,
    pub implied_eps2: f64,
}

impl Trajectory {
    pub fn chains(&self) -> usize {
        self.final_samples.len() + self.flagged.len()
    }
}

struct ChainOutput {
    states: Vec<Vec<f64>>,
    last: Vec<f64>,
    flagged: bool,
    ess: Option<Vec<f64>>,
}

fn chain_rng(seed: u64, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain as u64);
    rng
}

/// Run DALMC with the exact marginal score and the configured perturbation.
pub fn dalmc_run(path: &DiffusionPath, config: &SamplerConfig) -> Result<Trajectory> {
    let oracle = perturb_score(
        ScoreOracle::new(path).with_method(config.score_method),
        config.perturbation.clone(),
    )?;
    dalmc_run_with(&oracle, config)
}

/// Run DALMC with an explicit oracle; `config.perturbation` and
/// `config.score_method` are ignored in favour of the oracle's.
pub fn dalmc_run_with(oracle: &ScoreOracle<'_>, config: &SamplerConfig) -> Result<Trajectory> {
    config.validate()?;
    let path = oracle.path();
    let d = path.dim();
    let horizon = path.schedule().horizon;
    let profile = match config.step_plan {
        StepPlan::Uniform => None,
        StepPlan::LipschitzAdaptive => Some(LipschitzProfile::uniform(path, config.profile_grid)?),
    };
    let h = step_size_plan(horizon, config.kappa, config.steps, config.step_plan, profile.as_ref())?;
    let mut times = Vec::with_capacity(h.len() + 1);
    times.push(0.0);
    for v in &h {
        times.push(times.last().unwrap() + v);
    }
    // the last time is exactly T/κ by construction up to rounding
    *times.last_mut().unwrap() = horizon / config.kappa;
    let marginals = h
        .iter()
        .zip(&times)
        .map(|(_, &t)| path.at((config.kappa * t).min(horizon)))
        .collect::<Result<Vec<_>>>()?;
    let record = |l: usize| config.record_every > 0 && l.is_multiple_of(config.record_every);
    let recorded: Vec<usize> = (0..=config.steps)
        .filter(|&l| record(l) || (config.record_every > 0 && l == config.steps))
        .collect();

    let run_chain = |chain: usize| -> Result<ChainOutput> {
        let mut rng = chain_rng(config.seed, chain);
        let mut x = path.base().sample_one(d, &mut rng);
        let mut states = Vec::with_capacity(recorded.len());
        let mut ess: Option<Vec<f64>> = None;
        let mut flagged = false;
        let mut next = 0;
        if recorded.first() == Some(&0) {
            states.push(x.as_slice().to_vec());
            next = 1;
        }
        for (l, m) in marginals.iter().enumerate() {
            let (s, e) = match oracle.score_on(m, &x, &mut rng) {
                Ok(v) => v,
                Err(Error::ZeroDensity) | Err(Error::NonFinite(_)) => {
                    flagged = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            if let Some(e) = e {
                ess.get_or_insert_with(|| vec![f64::INFINITY; marginals.len()])[l] = e;
            }
            let root = (2.0 * h[l]).sqrt();
            for i in 0..d {
                let xi: f64 = rng.sample(StandardNormal);
                x[i] += h[l] * s[i] + root * xi;
            }
            let norm = x.norm();
            if !norm.is_finite() || norm > BLOW_UP_NORM {
                flagged = true;
                break;
            }
            if recorded.get(next) == Some(&(l + 1)) {
                states.push(x.as_slice().to_vec());
                next += 1;
            }
        }
        // keep snapshot lengths aligned for diverged chains
        while states.len() < recorded.len() {
            states.push(vec![f64::NAN; d]);
        }
        Ok(ChainOutput {
            states,
            last: x.as_slice().to_vec(),
            flagged,
            ess,
        })
    };
    let outputs = (0..config.chains)
        .into_par_iter()
        .map(run_chain)
        .collect::<Result<Vec<_>>>()?;

    let flagged: Vec<usize> = outputs
        .iter()
        .enumerate()
        .filter(|(_, o)| o.flagged)
        .map(|(i, _)| i)
        .collect();
    let limit = config.chains / 100;
    if flagged.len() > limit {
        return Err(Error::ChainFailure {
            flagged: flagged.len(),
            chains: config.chains,
            limit,
        });
    }
    if !flagged.is_empty() {
        log::warn!("{} of {} chains diverged and were excluded", flagged.len(), config.chains);
    }
    let mut min_ess: Option<Vec<f64>> = None;
    for o in &outputs {
        if let Some(e) = &o.ess {
            let acc = min_ess.get_or_insert_with(|| vec![f64::INFINITY; e.len()]);
            for (a, b) in acc.iter_mut().zip(e) {
                *a = a.min(*b);
            }
        }
    }
    let snapshots = recorded
        .iter()
        .enumerate()
        .map(|(k, &step)| Snapshot {
            step,
            time: times[step],
            states: outputs.iter().map(|o| o.states[k].clone()).collect(),
        })
        .collect();
    let mut final_samples = Vec::with_capacity(outputs.len() - flagged.len());
    let mut chain_ids = Vec::with_capacity(final_samples.capacity());
    for (i, o) in outputs.into_iter().enumerate() {
        if !o.flagged {
            final_samples.push(o.last);
            chain_ids.push(i);
        }
    }
    Ok(Trajectory {
        dim: d,
        kappa: config.kappa,
        implied_eps2: oracle.implied_eps2(horizon / config.kappa),
        step_sizes: h,
        times,
        snapshots,
        final_samples,
        chain_ids,
        flagged,
        min_ess,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::Base;
    use crate::schedules::Schedule;
    use crate::targets::{GaussianMixture, Target};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn gauss_path(mean: f64, var: f64) -> DiffusionPath {
        let t: Target = GaussianMixture::isotropic(DVector::from_element(1, mean), var)
            .unwrap()
            .into();
        DiffusionPath::new(Base::gaussian(1.0).unwrap(), t, Schedule::cosine(1.0, 1.0).unwrap()).unwrap()
    }

    fn mean_var(xs: &[Vec<f64>]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().map(|x| x[0]).sum::<f64>() / n;
        let v = xs.iter().map(|x| (x[0] - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    fn flat_profile(values: &[f64], horizon: f64) -> LipschitzProfile {
        let n = values.len();
        let times: Vec<f64> = (0..n).map(|k| horizon * k as f64 / n as f64).collect();
        let bounds = values
            .iter()
            .map(|&v| crate::paths::LipschitzBound {
                lambda: 0.5,
                value: v,
                upper: v,
                lower: -v,
                regime: crate::paths::Regime::UpperNoise,
                poincare: None,
                poincare_source: None,
            })
            .collect();
        LipschitzProfile {
            times,
            bounds,
            l_max: values.iter().copied().fold(0.0, f64::max),
        }
    }

    #[test]
    fn uniform_plan() {
        let h = step_size_plan(1.0, 0.1, 10, StepPlan::Uniform, None).unwrap();
        assert_eq!(h.len(), 10);
        for v in &h {
            assert_relative_eq!(*v, 1.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn adaptive_plan_with_constant_profile_is_uniform() {
        let p = flat_profile(&[3.0; 50], 2.0);
        let h = step_size_plan(2.0, 0.25, 40, StepPlan::LipschitzAdaptive, Some(&p)).unwrap();
        for v in &h {
            assert_relative_eq!(*v, 0.2, max_relative = 1e-12);
        }
    }

    #[test]
    fn adaptive_plan_halves_steps_where_lipschitz_doubles() {
        let mut vals = vec![1.0; 50];
        vals.extend(vec![2.0; 50]);
        let p = flat_profile(&vals, 1.0);
        let h = step_size_plan(1.0, 0.5, 30, StepPlan::LipschitzAdaptive, Some(&p)).unwrap();
        assert_relative_eq!(h.iter().sum::<f64>(), 2.0, max_relative = 1e-12);
        // ∫L = 1.5, split in 30 parts: 10 steps cover the first half, 20 the second
        for v in &h[..10] {
            assert_relative_eq!(*v, 2.0 * h[29], max_relative = 1e-9);
        }
        assert!(step_size_plan(1.0, 0.5, 30, StepPlan::LipschitzAdaptive, None).is_err());
        let bad = flat_profile(&[1.0, f64::INFINITY], 1.0);
        assert!(step_size_plan(1.0, 0.5, 3, StepPlan::LipschitzAdaptive, Some(&bad)).is_err());
    }

    #[test]
    fn implied_score_error() {
        let b = Perturbation::Bias { bias: vec![0.1] };
        assert_relative_eq!(b.implied_eps2(10.0, 1), 0.1, max_relative = 1e-12);
        let n = Perturbation::Noise { tau: 0.0 };
        assert_eq!(n.implied_eps2(123.0, 3), 0.0);
        let n = Perturbation::Noise { tau: 0.2 };
        assert_relative_eq!(n.implied_eps2(10.0, 3), 1.2, max_relative = 1e-12);
    }

    #[test]
    fn unperturbed_oracle_is_the_marginal_score() {
        let path = gauss_path(2.0, 0.5);
        let oracle = ScoreOracle::new(&path);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = DVector::from_element(1, 0.3);
        let s = oracle.score(0.4, &x, &mut rng).unwrap();
        assert_eq!(s, path.marginal_score(0.4, &[0.3]).unwrap());
        let biased = perturb_score(oracle, Perturbation::Bias { bias: vec![0.5] }).unwrap();
        assert_eq!(biased.score(0.4, &x, &mut rng).unwrap()[0], s[0] + 0.5);
        let bad = perturb_score(ScoreOracle::new(&path), Perturbation::Bias { bias: vec![0.1, 0.2] });
        assert!(bad.is_err());
    }

    #[test]
    fn stationary_gaussian_keeps_its_variance() {
        let path = gauss_path(0.0, 1.0);
        let cfg = SamplerConfig::new(0.5, 200, 4000, 1);
        let tr = dalmc_run(&path, &cfg).unwrap();
        let (m, v) = mean_var(&tr.final_samples);
        assert!(m.abs() < 0.06, "{m}");
        assert!((v - 1.0).abs() < 0.08, "{v}");
        assert_relative_eq!(*tr.times.last().unwrap(), 2.0);
        assert_relative_eq!(tr.step_sizes.iter().sum::<f64>(), 2.0, max_relative = 1e-9);
    }

    #[test]
    fn runs_are_deterministic_and_chain_seeded() {
        let path = gauss_path(1.0, 0.5);
        let mut cfg = SamplerConfig::new(0.2, 50, 16, 9);
        cfg.record_every = 10;
        let a = dalmc_run(&path, &cfg).unwrap();
        let b = dalmc_run(&path, &cfg).unwrap();
        assert_eq!(a.final_samples, b.final_samples);
        assert_eq!(a.snapshots.len(), 6);
        assert_eq!(a.snapshots[5].states, a.final_samples);
        // a chain's output depends only on (seed, chain index)
        cfg.chains = 8;
        let c = dalmc_run(&path, &cfg).unwrap();
        assert_eq!(&a.final_samples[..8], &c.final_samples[..]);
    }

    #[test]
    fn divergent_chains_fail_the_run() {
        let t: Target = GaussianMixture::gaussian(DVector::zeros(1), DMatrix::identity(1, 1) * 1e-4)
            .unwrap()
            .into();
        let path = DiffusionPath::new(Base::gaussian(1.0).unwrap(), t, Schedule::cosine(1.0, 1.0).unwrap())
            .unwrap();
        // steps of 10 against curvature 1e4 explode
        let cfg = SamplerConfig::new(0.01, 10, 20, 0);
        assert!(matches!(dalmc_run(&path, &cfg), Err(Error::ChainFailure { .. })));
    }
}
