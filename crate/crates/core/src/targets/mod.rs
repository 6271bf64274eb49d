//! Analytic target distributions with exact density, score, Hessian and sampling.

mod compact_noise;
mod gaussian_mixture;
mod smoothed_uniform;
pub mod smoothness;
mod student_t;

pub use compact_noise::{CompactPlusNoise, Noise};
pub use gaussian_mixture::{Component, GaussianMixture, DEGENERATE_WEIGHT};
pub use smoothed_uniform::SmoothedUniformMixture;
pub use smoothness::{
    check_mixture_smoothness, estimate_k_pi, lsi_constant_bound, BoundMethod, KPiEstimate,
    PairDiagnostic, SmoothnessReport,
};
pub use student_t::{HessianDecay, StudentT};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug)]
pub enum Target {
    GaussianMixture(GaussianMixture),
    StudentT(StudentT),
    SmoothedUniform(SmoothedUniformMixture),
    CompactPlusNoise(CompactPlusNoise),
}

impl From<GaussianMixture> for Target {
    fn from(g: GaussianMixture) -> Self {
        Target::GaussianMixture(g)
    }
}
impl From<StudentT> for Target {
    fn from(t: StudentT) -> Self {
        Target::StudentT(t)
    }
}
impl From<SmoothedUniformMixture> for Target {
    fn from(s: SmoothedUniformMixture) -> Self {
        Target::SmoothedUniform(s)
    }
}
impl From<CompactPlusNoise> for Target {
    fn from(c: CompactPlusNoise) -> Self {
        Target::CompactPlusNoise(c)
    }
}

fn scalar(x: &DVector<f64>) -> f64 {
    x[0]
}

impl Target {
    pub fn name(&self) -> &'static str {
        match self {
            Target::GaussianMixture(_) => "gaussian_mixture",
            Target::StudentT(_) => "student_t",
            Target::SmoothedUniform(_) => "smoothed_uniform",
            Target::CompactPlusNoise(_) => "compact_plus_noise",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Target::GaussianMixture(g) => g.dim(),
            Target::StudentT(t) => t.dim(),
            Target::SmoothedUniform(_) => 1,
            Target::CompactPlusNoise(c) => c.dim(),
        }
    }

    pub(crate) fn log_density_v(&self, x: &DVector<f64>) -> f64 {
        match self {
            Target::GaussianMixture(g) => g.log_density(x),
            Target::StudentT(t) => t.log_density(x),
            Target::SmoothedUniform(s) => s.log_density(scalar(x)),
            Target::CompactPlusNoise(c) => c.log_density(x),
        }
    }

    pub(crate) fn score_v(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Target::GaussianMixture(g) => g.score(x),
            Target::StudentT(t) => t.score(x),
            Target::SmoothedUniform(s) => DVector::from_element(1, s.score(scalar(x))),
            Target::CompactPlusNoise(c) => c.score(x),
        }
    }

    pub(crate) fn hessian_v(&self, x: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Target::GaussianMixture(g) => g.hessian(x),
            Target::StudentT(t) => t.hessian(x),
            Target::SmoothedUniform(s) => DMatrix::from_element(1, 1, s.hessian(scalar(x))),
            Target::CompactPlusNoise(c) => c.hessian(x),
        }
    }

    fn checked(&self, x: &[f64]) -> Result<DVector<f64>> {
        check_dim(self.dim(), x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("evaluation point".into()));
        }
        Ok(DVector::from_column_slice(x))
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let v = self.checked(x)?;
        Ok(self.log_density_v(&v))
    }

    pub fn density(&self, x: &[f64]) -> Result<f64> {
        self.log_density(x).map(f64::exp)
    }

    pub fn score(&self, x: &[f64]) -> Result<DVector<f64>> {
        let v = self.checked(x)?;
        if !self.log_density_v(&v).is_finite() {
            return Err(Error::ZeroDensity);
        }
        Ok(self.score_v(&v))
    }

    pub fn hessian_log_density(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let v = self.checked(x)?;
        if !self.log_density_v(&v).is_finite() {
            return Err(Error::ZeroDensity);
        }
        Ok(self.hessian_v(&v))
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self {
            Target::GaussianMixture(g) => g.sample_one(rng),
            Target::StudentT(t) => t.sample_one(rng),
            Target::SmoothedUniform(s) => DVector::from_element(1, s.sample_one(rng)),
            Target::CompactPlusNoise(c) => c.sample_one(rng),
        }
    }

    /// `n` i.i.d. exact draws, deterministic in `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_one(&mut rng)).collect()
    }

    pub fn mean(&self) -> DVector<f64> {
        match self {
            Target::GaussianMixture(g) => g.mean(),
            Target::StudentT(t) => t.mean(),
            Target::SmoothedUniform(s) => DVector::from_element(1, s.mean()),
            Target::CompactPlusNoise(c) => c.mean(),
        }
    }

    /// E‖X‖².
    pub fn second_moment(&self) -> f64 {
        match self {
            Target::GaussianMixture(g) => g.second_moment(),
            Target::StudentT(t) => t.second_moment(),
            Target::SmoothedUniform(s) => s.second_moment(),
            Target::CompactPlusNoise(c) => c.second_moment(),
        }
    }

    /// Mean and covariance when the target is a single Gaussian.
    pub fn as_gaussian(&self) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let g = match self {
            Target::GaussianMixture(g) => g,
            Target::CompactPlusNoise(c) => c.as_gaussian_mixture()?,
            _ => return None,
        };
        match g.components() {
            [c] => Some((c.mean.clone(), c.cov.matrix.clone())),
            _ => None,
        }
    }

    /// Law of √λ·X + N(0, noise_var·I) when it stays in closed form.
    pub fn diffuse_gaussian(&self, lambda: f64, noise_var: f64) -> Option<Result<Target>> {
        match self {
            Target::GaussianMixture(g) => Some(g.diffuse(lambda, noise_var).map(Target::from)),
            Target::CompactPlusNoise(c) => c
                .as_gaussian_mixture()
                .map(|g| g.diffuse(lambda, noise_var).map(Target::from)),
            Target::SmoothedUniform(s) => Some(s.diffuse(lambda, noise_var).map(Target::from)),
            Target::StudentT(_) => None,
        }
    }

    /// Locations where the density changes character (component centers, plateau edges).
    pub fn landmarks(&self) -> Vec<DVector<f64>> {
        match self {
            Target::GaussianMixture(g) => g.components().iter().map(|c| c.mean.clone()).collect(),
            Target::StudentT(t) => vec![t.location().clone()],
            Target::SmoothedUniform(s) => s
                .breakpoints()
                .into_iter()
                .map(|b| DVector::from_element(1, b))
                .collect(),
            Target::CompactPlusNoise(c) => c.atoms().iter().map(|a| a.1.clone()).collect(),
        }
    }

    /// Smallest length scale on which the density varies.
    pub fn length_scale(&self) -> f64 {
        match self {
            Target::GaussianMixture(g) => g
                .components()
                .iter()
                .map(|c| c.cov.eig_min.sqrt())
                .fold(f64::INFINITY, f64::min),
            Target::StudentT(t) => t.scale().eig_min.sqrt(),
            Target::SmoothedUniform(s) => s.length_scale(),
            Target::CompactPlusNoise(c) => c.noise().tau(),
        }
    }

    /// Radius of a ball that holds nearly all of the mass.
    pub fn spread(&self) -> f64 {
        match self {
            Target::GaussianMixture(g) => g
                .components()
                .iter()
                .map(|c| c.mean.norm() + 4.0 * c.cov.eig_max.sqrt())
                .fold(0.0, f64::max),
            Target::StudentT(t) => t.location().norm() + 10.0 * t.scale().eig_max.sqrt(),
            Target::SmoothedUniform(s) => {
                let w = s.smoothing_var.sqrt().max(s.gaussian_var.sqrt());
                s.support.0.abs().max(s.support.1.abs()).max(s.gaussian_mean.abs()) + 4.0 * w
            }
            Target::CompactPlusNoise(c) => {
                let extra = match c.noise() {
                    Noise::Gaussian { tau } => 4.0 * tau,
                    Noise::StudentT { tau, .. } => 10.0 * tau,
                };
                c.atoms().iter().map(|a| a.1.norm()).fold(0.0, f64::max) + extra
            }
        }
    }

    pub fn smoothness(&self) -> Result<SmoothnessReport> {
        smoothness::report(self)
    }
}

/// Serializable description of a target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    Gaussian {
        mean: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        variance: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        covariance: Option<Vec<Vec<f64>>>,
    },
    GaussianMixture {
        components: Vec<ComponentSpec>,
    },
    StudentT {
        location: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scale_matrix: Option<Vec<Vec<f64>>>,
        dof: f64,
    },
    SmoothedUniform {
        m: f64,
        #[serde(default = "default_width")]
        width: f64,
    },
    CompactPlusNoise {
        atoms: Vec<AtomSpec>,
        center: Vec<f64>,
        radius: f64,
        noise: Noise,
    },
}

fn default_width() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub weight: f64,
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
    /// Alternative to `covariance`: the precision matrix Σ⁻¹.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub weight: f64,
    pub location: Vec<f64>,
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], key: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(Error::config(key, "expected a non-empty square matrix"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn covariance_of(
    d: usize,
    variance: Option<f64>,
    covariance: &Option<Vec<Vec<f64>>>,
    precision: &Option<Vec<Vec<f64>>>,
    key: &str,
) -> Result<DMatrix<f64>> {
    let given = [variance.is_some(), covariance.is_some(), precision.is_some()]
        .iter()
        .filter(|b| **b)
        .count();
    if given != 1 {
        return Err(Error::config(
            key,
            "give exactly one of `variance`, `covariance`, `precision`",
        ));
    }
    if let Some(v) = variance {
        if !(v > 0.0) {
            return Err(Error::config(format!("{key}.variance"), "must be positive"));
        }
        return Ok(DMatrix::identity(d, d) * v);
    }
    if let Some(c) = covariance {
        let m = matrix_from_rows(c, &format!("{key}.covariance"))?;
        if m.nrows() != d {
            return Err(Error::config(format!("{key}.covariance"), "dimension differs from mean"));
        }
        return Ok(m);
    }
    let p = matrix_from_rows(precision.as_ref().unwrap(), &format!("{key}.precision"))?;
    if p.nrows() != d {
        return Err(Error::config(format!("{key}.precision"), "dimension differs from mean"));
    }
    let spd = crate::linalg::Spd::new(p)
        .map_err(|e| Error::config(format!("{key}.precision"), e.to_string()))?;
    Ok(spd.inverse)
}

impl TargetSpec {
    pub fn build(&self) -> Result<Target> {
        let wrap = |key: &str, e: Error| match e {
            Error::Config { .. } => e,
            other => Error::config(key, other.to_string()),
        };
        match self {
            TargetSpec::Gaussian {
                mean,
                variance,
                covariance,
            } => {
                let cov = covariance_of(mean.len(), *variance, covariance, &None, "target")?;
                GaussianMixture::gaussian(DVector::from_column_slice(mean), cov)
                    .map(Target::from)
                    .map_err(|e| wrap("target", e))
            }
            TargetSpec::GaussianMixture { components } => {
                if components.is_empty() {
                    return Err(Error::config("target.components", "at least one component required"));
                }
                let mut parts = Vec::new();
                for (i, c) in components.iter().enumerate() {
                    let key = format!("target.components[{i}]");
                    let cov = covariance_of(c.mean.len(), c.variance, &c.covariance, &c.precision, &key)?;
                    parts.push((c.weight, DVector::from_column_slice(&c.mean), cov));
                }
                GaussianMixture::new(parts)
                    .map(Target::from)
                    .map_err(|e| wrap("target.components", e))
            }
            TargetSpec::StudentT {
                location,
                scale,
                scale_matrix,
                dof,
            } => {
                let loc = DVector::from_column_slice(location);
                let t = match (scale, scale_matrix) {
                    (Some(s), None) => StudentT::isotropic(loc, *s, *dof),
                    (None, Some(m)) => StudentT::new(loc, matrix_from_rows(m, "target.scale_matrix")?, *dof),
                    _ => {
                        return Err(Error::config(
                            "target",
                            "give exactly one of `scale`, `scale_matrix`",
                        ))
                    }
                };
                t.map(Target::from).map_err(|e| wrap("target", e))
            }
            TargetSpec::SmoothedUniform { m, width } => SmoothedUniformMixture::new(*m, *width)
                .map(Target::from)
                .map_err(|e| wrap("target", e)),
            TargetSpec::CompactPlusNoise {
                atoms,
                center,
                radius,
                noise,
            } => CompactPlusNoise::new(
                atoms
                    .iter()
                    .map(|a| (a.weight, DVector::from_column_slice(&a.location)))
                    .collect(),
                DVector::from_column_slice(center),
                *radius,
                noise.clone(),
            )
            .map(Target::from)
            .map_err(|e| wrap("target", e)),
        }
    }
}
