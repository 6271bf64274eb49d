//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{Base, DiffusionPath, GeometricPath, SnisOptions};
use crate::sampler::SamplerConfig;
use crate::schedules::Schedule;
use crate::targets::{Target, TargetSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub target: TargetSpec,
    pub base: Base,
    pub schedule: Schedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    #[serde(default)]
    pub snis: SnisOptions,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<HeatmapConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub action: bool,
    pub action_grid: usize,
    pub action_samples: usize,
    pub lipschitz: bool,
    pub lipschitz_times: usize,
    pub hessian_points: usize,
    pub w2: bool,
    /// Reference quantiles come from this many exact target draws per sample.
    pub reference_oversample: usize,
    pub kl: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    pub moments: bool,
    /// Allowed relative error of the final second moment.
    pub moment_tolerance: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            action: true,
            action_grid: 200,
            action_samples: 20_000,
            lipschitz: true,
            lipschitz_times: 20,
            hessian_points: 200,
            w2: true,
            reference_oversample: 10,
            kl: true,
            bandwidth: None,
            moments: true,
            moment_tolerance: 0.15,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatmapConfig {
    pub lambdas: Vec<f64>,
    pub x_min: f64,
    pub x_max: f64,
    pub x_points: usize,
    pub prominence: f64,
    pub geometric: bool,
}

impl Default for HeatmapConfig {
    fn default() -> Self {
        Self {
            lambdas: (1..=9).map(|k| k as f64 / 10.0).collect(),
            x_min: -5.0,
            x_max: 15.0,
            x_points: 401,
            prominence: crate::diagnostics::DEFAULT_PROMINENCE,
            geometric: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// Deserialize TOML text, naming the offending key on failure.
pub fn parse_toml<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<file>", e.message()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let message = e.inner().message().to_string();
        Error::config(if key == "." { "<root>".into() } else { key }, message)
    })
}

/// Read a file and deserialize it as TOML.
pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_toml(&std::fs::read_to_string(path)?)
}

/// Deserialize the `key` table of a TOML file, or the whole file when it has
/// no such table.
pub fn read_section<T: DeserializeOwned>(path: &Path, key: &str) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| Error::config("<file>", e.message()))?;
    match table.get(key) {
        Some(v) => serde_path_to_error::deserialize(v.clone()).map_err(|e| {
            let sub = e.path().to_string();
            let full = if sub == "." { key.to_string() } else { format!("{key}.{sub}") };
            Error::config(full, e.inner().message())
        }),
        None => parse_toml(&text),
    }
}

/// A validated experiment: the built target and paths.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub path: DiffusionPath,
}

impl Experiment {
    pub fn target(&self) -> &Target {
        self.path.target()
    }

    pub fn geometric(&self) -> Result<GeometricPath> {
        GeometricPath::new(self.config.base, self.target().clone(), self.config.schedule)
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        parse_toml(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_toml(path)
    }

    /// Check every section and build the path.
    pub fn validate(&self) -> Result<Experiment> {
        let target = self.target.build()?;
        self.base
            .validate()
            .map_err(|e| Error::config("base", e.to_string()))?;
        self.schedule
            .validate()
            .map_err(|e| Error::config("schedule", e.to_string()))?;
        if let Some(s) = &self.sampler {
            s.validate().map_err(|e| Error::config("sampler", e.to_string()))?;
            s.perturbation
                .validate(target.dim())
                .map_err(|e| Error::config("sampler.perturbation", e.to_string()))?;
        }
        let snis = &self.snis;
        if snis.particles == 0 || snis.max_particles < snis.particles || !(snis.ess_floor >= 0.0) {
            return Err(Error::config(
                "snis",
                "need 0 < particles <= max_particles and a non-negative ess_floor",
            ));
        }
        let dg = &self.diagnostics;
        if dg.action && dg.action_grid < 100 {
            return Err(Error::config("diagnostics.action_grid", "must be at least 100"));
        }
        if dg.lipschitz && dg.lipschitz_times < 2 {
            return Err(Error::config("diagnostics.lipschitz_times", "must be at least 2"));
        }
        if dg.reference_oversample == 0 {
            return Err(Error::config("diagnostics.reference_oversample", "must be positive"));
        }
        if !(dg.moment_tolerance > 0.0) {
            return Err(Error::config("diagnostics.moment_tolerance", "must be positive"));
        }
        if let Some(h) = dg.bandwidth {
            if !(h > 0.0) {
                return Err(Error::config("diagnostics.bandwidth", "must be positive"));
            }
        }
        if let Some(h) = &self.heatmap {
            if target.dim() != 1 {
                return Err(Error::config("heatmap", "heatmaps need a one-dimensional target"));
            }
            if h.x_points < 200 {
                return Err(Error::config("heatmap.x_points", "must be at least 200"));
            }
            if !(h.x_min < h.x_max) {
                return Err(Error::config("heatmap.x_min", "must be below x_max"));
            }
            if h.lambdas.is_empty() || h.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
                return Err(Error::config("heatmap.lambdas", "values must lie in [0, 1]"));
            }
            if !(h.prominence >= 0.0) {
                return Err(Error::config("heatmap.prominence", "must be non-negative"));
            }
        }
        let path = DiffusionPath::new(self.base, target, self.schedule)?.with_snis(self.snis);
        Ok(Experiment {
            config: self.clone(),
            path,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "demo"

[target]
kind = "gaussian"
mean = [3.0]
variance = 4.0

[base]
kind = "gaussian"
sigma = 1.0

[schedule]
family = "cosine"
phi = 1.0
horizon = 1.0

[sampler]
kappa = 0.1
steps = 100
chains = 10
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.sampler.as_ref().unwrap().steps, 100);
        assert!(cfg.diagnostics.action);
        let exp = cfg.validate().unwrap();
        assert_eq!(exp.path.dim(), 1);
    }

    #[test]
    fn errors_name_the_key() {
        let missing = MINIMAL.replace("[target]\nkind = \"gaussian\"\nmean = [3.0]\nvariance = 4.0\n", "");
        match ExperimentConfig::from_toml(&missing) {
            Err(Error::Config { message, .. }) => assert!(message.contains("target"), "{message}"),
            other => panic!("{other:?}"),
        }
        let typo = MINIMAL.replace("kappa = 0.1", "kapa = 0.1");
        match ExperimentConfig::from_toml(&typo) {
            Err(Error::Config { key, .. }) => assert!(key.starts_with("sampler"), "{key}"),
            other => panic!("{other:?}"),
        }
        let bad = ExperimentConfig::from_toml(&MINIMAL.replace("kappa = 0.1", "kappa = 1.5")).unwrap();
        match bad.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "sampler"),
            other => panic!("{other:?}"),
        }
        let neg = ExperimentConfig::from_toml(&MINIMAL.replace("variance = 4.0", "variance = -4.0")).unwrap();
        match neg.validate() {
            Err(Error::Config { key, .. }) => assert!(key.starts_with("target"), "{key}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }
}
