//! Experiment runner: sampling, bound checks, heatmaps, sweeps and the files
//! they produce. Everything is computed in memory and only written once the
//! whole experiment has succeeded.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig, HeatmapConfig};
use crate::diagnostics::{self, MetricReport};
use crate::error::{Error, Result};
use crate::paths;
use crate::sampler::{self, Perturbation, SamplerConfig, Trajectory};
use crate::targets::Target;

pub const SCHEMA_VERSION: u32 = 1;

/// Salt separating the reference draws from the sampler's chain streams.
const REFERENCE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Relative slack for floating-point rounding when a bound is attained exactly.
pub const ROUNDING: f64 = 1e-9;

/// One bound next to its empirical estimate.
#[derive(Clone, Debug, Serialize)]
pub struct BoundCheck {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(with = "crate::serde_util")]
    pub bound: f64,
    #[serde(with = "crate::serde_util")]
    pub estimate: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundCheck {
    fn new(name: &str, t: Option<f64>, bound: f64, estimate: f64) -> Self {
        Self {
            name: name.into(),
            t,
            bound,
            estimate,
            pass: estimate <= bound + ROUNDING * bound.abs(),
            note: None,
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ModeRow {
    pub path: String,
    pub t: f64,
    pub lambda: f64,
    pub mode_count: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub elapsed_seconds: f64,
    pub chains: usize,
    pub flagged_chains: usize,
    pub implied_eps2: f64,
    pub metrics: Vec<MetricReport>,
    pub checks: Vec<BoundCheck>,
    pub modes: Vec<ModeRow>,
    pub all_pass: bool,
    pub files: Vec<String>,
}

/// Output of a completed experiment, before anything is written.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub report: RunReport,
    pub trajectory: Option<Trajectory>,
    pub heatmap: Option<Heatmap>,
}

#[derive(Clone, Debug, Default)]
pub struct Heatmap {
    pub rows: Vec<HeatmapRow>,
    pub modes: Vec<ModeRow>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HeatmapRow {
    pub path: &'static str,
    pub t: f64,
    pub lambda: f64,
    pub x: f64,
    pub density: f64,
}

/// Format with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Density of the diffusion and (optionally) geometric path on an x-grid at
/// each configured λ, with mode counts.
pub fn heatmap(exp: &Experiment, cfg: &HeatmapConfig) -> Result<Heatmap> {
    let path = &exp.path;
    let schedule = path.schedule();
    let xs: Vec<f64> = (0..cfg.x_points)
        .map(|i| cfg.x_min + (cfg.x_max - cfg.x_min) * i as f64 / (cfg.x_points - 1) as f64)
        .collect();
    let geometric = if cfg.geometric { Some(exp.geometric()?) } else { None };
    let mut out = Heatmap::default();
    for &lambda in &cfg.lambdas {
        let t = schedule.time_of(lambda)?;
        let m = path.at_lambda(lambda)?;
        let dens = xs
            .iter()
            .map(|&x| {
                m.log_density(&nalgebra::DVector::from_element(1, x))
                    .map(f64::exp)
            })
            .collect::<Result<Vec<_>>>()?;
        push_slice(&mut out, "diffusion", t, lambda, &xs, dens, cfg.prominence)?;
        if let Some(g) = &geometric {
            let dens = g.density_on_grid(lambda, &xs)?;
            push_slice(&mut out, "geometric", t, lambda, &xs, dens, cfg.prominence)?;
        }
    }
    Ok(out)
}

fn push_slice(
    out: &mut Heatmap,
    name: &'static str,
    t: f64,
    lambda: f64,
    xs: &[f64],
    dens: Vec<f64>,
    prominence: f64,
) -> Result<()> {
    let mode_count = diagnostics::mode_count(&dens, prominence)?;
    out.modes.push(ModeRow {
        path: name.into(),
        t,
        lambda,
        mode_count,
    });
    for (&x, density) in xs.iter().zip(dens) {
        out.rows.push(HeatmapRow {
            path: name,
            t,
            lambda,
            x,
            density,
        });
    }
    Ok(())
}

/// Sorted reference values approximating the target quantiles at the
/// centres of `n` equal-mass bins, from `n·oversample` exact draws.
pub fn reference_quantiles(target: &Target, n: usize, oversample: usize, seed: u64) -> Vec<f64> {
    let k = oversample.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ REFERENCE_SALT);
    let mut draws: Vec<f64> = (0..n * k).map(|_| target.sample_one(&mut rng)[0]).collect();
    draws.sort_unstable_by(f64::total_cmp);
    (0..n).map(|i| draws[i * k + k / 2]).collect()
}

fn first_coords(samples: &[Vec<f64>]) -> Vec<f64> {
    samples.iter().map(|x| x[0]).collect()
}

/// Metrics of final samples against the exact target.
pub fn sample_metrics(
    exp: &Experiment,
    samples: &[Vec<f64>],
    seed: u64,
) -> Result<(Vec<MetricReport>, Vec<BoundCheck>)> {
    let dg = &exp.config.diagnostics;
    let target = exp.target();
    let d = target.dim();
    let mut metrics = Vec::new();
    let mut checks = Vec::new();
    if samples.is_empty() {
        return Ok((metrics, checks));
    }
    if dg.w2 && d == 1 {
        let reference = reference_quantiles(target, samples.len(), dg.reference_oversample, seed);
        let mut m = diagnostics::w2_report(&first_coords(samples), &reference)?;
        m.method = "quantile_coupling_vs_reference".into();
        metrics.push(m);
    }
    if dg.kl && d <= 2 && samples.len() >= 1000 {
        let kl = diagnostics::kl_estimate(target, samples, dg.bandwidth)?;
        metrics.push(MetricReport {
            metric: "kl".into(),
            value: kl.value,
            std_error: 0.0,
            samples: vec![kl.samples, kl.grid_points],
            method: "kde".into(),
        });
    }
    if dg.moments {
        let m2 = diagnostics::moment_estimate(samples, 2)?;
        let exact = target.second_moment();
        if exact.is_finite() {
            checks.push(
                BoundCheck::new(
                    "second_moment_error",
                    None,
                    dg.moment_tolerance * exact,
                    (m2.value - exact).abs(),
                )
                .with_note(format!("exact second moment {}", fmt_f64(exact))),
            );
        }
        metrics.push(m2);
    }
    Ok((metrics, checks))
}

/// Action and Lipschitz bound checks along the path.
pub fn bound_checks(exp: &Experiment, seed: u64) -> Result<Vec<BoundCheck>> {
    let dg = &exp.config.diagnostics;
    let path = &exp.path;
    let mut checks = Vec::new();
    if dg.action {
        let gaussian = path.target().as_gaussian().is_some() && !path.base().is_heavy();
        if path.dim() == 1 || gaussian {
            match paths::action_bound(path) {
                Ok(bound) => {
                    let est = paths::action_estimate(path, dg.action_grid, dg.action_samples, seed)?;
                    let mut c = BoundCheck::new("action", None, bound.value, est.value)
                        .with_note(format!("condition {}", bound.condition.name()));
                    if est.coarse_grid {
                        c = c.with_note(format!(
                            "condition {}; grid spacing times L_max exceeds 1",
                            bound.condition.name()
                        ));
                    }
                    checks.push(c);
                }
                Err(Error::InfiniteScheduleConstant(c)) => {
                    log::info!("no action bound: schedule constant infinite for {c}");
                }
                Err(e) => return Err(e),
            }
        }
    }
    if dg.lipschitz && path.dim() <= 2 {
        let big_t = path.schedule().horizon;
        let n = dg.lipschitz_times;
        for k in 0..n {
            let t = big_t * k as f64 / (n - 1) as f64;
            let bound = match paths::lipschitz_bound(path, t) {
                Ok(b) => b.value,
                Err(Error::MissingConstant(m)) => {
                    log::info!("no Lipschitz bound at t = {t}: {m}");
                    continue;
                }
                Err(e) => return Err(e),
            };
            let sup = diagnostics::hessian_sup_estimate(path, t, dg.hessian_points, seed ^ k as u64)?;
            checks.push(BoundCheck::new("lipschitz", Some(t), bound, sup.value));
        }
    }
    Ok(checks)
}

/// Run a validated experiment entirely in memory.
pub fn execute(exp: &Experiment, seed_override: Option<u64>) -> Result<ExperimentOutput> {
    let start = Instant::now();
    let cfg = &exp.config;
    let sampler_cfg = cfg.sampler.clone().map(|mut s| {
        if let Some(seed) = seed_override {
            s.seed = seed;
        }
        s
    });
    let seed = sampler_cfg.as_ref().map(|s| s.seed).or(seed_override).unwrap_or(0);
    let mut metrics = Vec::new();
    let mut checks = Vec::new();
    let trajectory = match &sampler_cfg {
        Some(s) => {
            let tr = sampler::dalmc_run(&exp.path, s)?;
            let (m, c) = sample_metrics(exp, &tr.final_samples, seed)?;
            metrics.extend(m);
            checks.extend(c);
            Some(tr)
        }
        None => None,
    };
    checks.extend(bound_checks(exp, seed)?);
    let heat = match &cfg.heatmap {
        Some(h) => Some(heatmap(exp, h)?),
        None => None,
    };
    let mut config = cfg.clone();
    config.sampler = sampler_cfg;
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        seed,
        config,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        chains: trajectory.as_ref().map_or(0, |t| t.chains()),
        flagged_chains: trajectory.as_ref().map_or(0, |t| t.flagged.len()),
        implied_eps2: trajectory.as_ref().map_or(0.0, |t| t.implied_eps2),
        all_pass: checks.iter().all(|c| c.pass),
        metrics,
        checks,
        modes: heat.as_ref().map(|h| h.modes.clone()).unwrap_or_default(),
        files: Vec::new(),
    };
    Ok(ExperimentOutput {
        report,
        trajectory,
        heatmap: heat,
    })
}

pub fn write_samples<W: Write>(w: W, tr: &Trajectory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["chain".to_string()];
    header.extend((1..=tr.dim).map(|k| format!("x{k}")));
    out.write_record(&header)?;
    for (id, x) in tr.chain_ids.iter().zip(&tr.final_samples) {
        let mut rec = vec![id.to_string()];
        rec.extend(x.iter().map(|v| fmt_f64(*v)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_heatmap<W: Write>(w: W, h: &Heatmap) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path", "t", "lambda", "x", "density"])?;
    for r in &h.rows {
        out.write_record([
            r.path.to_string(),
            fmt_f64(r.t),
            fmt_f64(r.lambda),
            fmt_f64(r.x),
            fmt_f64(r.density),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_modes<W: Write>(w: W, modes: &[ModeRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path", "t", "lambda", "mode_count"])?;
    for m in modes {
        out.write_record([m.path.clone(), fmt_f64(m.t), fmt_f64(m.lambda), m.mode_count.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

/// Write `bytes` to `dir/name` through a temporary file.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Write the artifacts of a finished experiment into `dir`.
pub fn write_outputs(dir: &Path, output: &mut ExperimentOutput) -> Result<Vec<PathBuf>> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    if let Some(tr) = &output.trajectory {
        files.push(("samples.csv".into(), to_bytes(|b| write_samples(b, tr))?));
    }
    if let Some(h) = &output.heatmap {
        files.push(("heatmap.csv".into(), to_bytes(|b| write_heatmap(b, h))?));
        files.push(("modes.csv".into(), to_bytes(|b| write_modes(b, &h.modes))?));
    }
    output.report.files = files.iter().map(|f| f.0.clone()).collect();
    output.report.files.push("report.json".into());
    let report = serde_json::to_vec_pretty(&output.report)?;
    files.push(("report.json".into(), report));
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, bytes) in files {
        write_atomic(dir, &name, &bytes)?;
        written.push(dir.join(name));
    }
    Ok(written)
}

/// Load, validate, run and write an experiment. Nothing is written when
/// validation or the run fails.
pub fn run_experiment(
    config_path: &Path,
    out_dir: Option<&Path>,
    seed: Option<u64>,
) -> Result<(RunReport, Vec<PathBuf>)> {
    let cfg = ExperimentConfig::load(config_path)?;
    let exp = cfg.validate()?;
    let dir = resolve_out_dir(&exp.config, config_path, out_dir);
    let mut output = execute(&exp, seed)?;
    let files = write_outputs(&dir, &mut output)?;
    Ok((output.report, files))
}

/// `--out`, else `output.dir`, else `out/<name>` next to the working directory.
pub fn resolve_out_dir(cfg: &ExperimentConfig, config_path: &Path, out_dir: Option<&Path>) -> PathBuf {
    if let Some(d) = out_dir {
        return d.to_path_buf();
    }
    if let Some(d) = &cfg.output.dir {
        return d.clone();
    }
    let stem = if cfg.name.is_empty() {
        config_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "experiment".into())
    } else {
        cfg.name.clone()
    };
    PathBuf::from("out").join(stem)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Number of steps M.
    Steps,
    /// Magnitude of an additive score bias along the first coordinate.
    EpsScore,
    Kappa,
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "m" | "steps" => Ok(SweepAxis::Steps),
            "eps_score" | "bias" => Ok(SweepAxis::EpsScore),
            "kappa" => Ok(SweepAxis::Kappa),
            other => Err(Error::invalid(format!(
                "unknown sweep axis `{other}`; expected M, eps_score or kappa"
            ))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub replicates: usize,
    /// Mean over replicates.
    pub w2: Option<f64>,
    pub w2_std_error: Option<f64>,
    pub kl: Option<f64>,
    pub flagged: usize,
}

fn apply_axis(base: &SamplerConfig, axis: SweepAxis, value: f64, d: usize) -> Result<SamplerConfig> {
    let mut s = base.clone();
    match axis {
        SweepAxis::Steps => {
            if !(value >= 1.0) || value.fract() != 0.0 {
                return Err(Error::invalid(format!("step counts must be positive integers, got {value}")));
            }
            s.steps = value as usize;
        }
        SweepAxis::EpsScore => {
            let mut b = vec![0.0; d];
            b[0] = value;
            s.perturbation = if value == 0.0 {
                Perturbation::None
            } else {
                Perturbation::Bias { bias: b }
            };
        }
        SweepAxis::Kappa => s.kappa = value,
    }
    s.validate()?;
    Ok(s)
}

/// Rerun the sampler for each axis value with the same seeds
/// `seed, seed+1, …, seed+replicates-1`, averaging the metrics.
pub fn sweep(
    exp: &Experiment,
    axis: SweepAxis,
    values: &[f64],
    replicates: usize,
    seed: Option<u64>,
) -> Result<Vec<SweepRow>> {
    let base = exp
        .config
        .sampler
        .as_ref()
        .ok_or_else(|| Error::config("sampler", "a sweep needs a [sampler] section"))?;
    if values.is_empty() {
        return Err(Error::invalid("a sweep needs at least one value"));
    }
    if values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::invalid("sweep values must be strictly increasing"));
    }
    if replicates == 0 {
        return Err(Error::invalid("replicates must be positive"));
    }
    let d = exp.path.dim();
    let seed0 = seed.unwrap_or(base.seed);
    let mut rows = Vec::with_capacity(values.len());
    for &v in values {
        let cfg = apply_axis(base, axis, v, d)?;
        let mut w2s = Vec::new();
        let mut kls = Vec::new();
        let mut flagged = 0;
        for r in 0..replicates {
            let mut c = cfg.clone();
            c.seed = seed0.wrapping_add(r as u64);
            let tr = sampler::dalmc_run(&exp.path, &c)?;
            flagged += tr.flagged.len();
            let (metrics, _) = sample_metrics(exp, &tr.final_samples, c.seed)?;
            for m in metrics {
                match m.metric.as_str() {
                    "w2" => w2s.push(m.value),
                    "kl" => kls.push(m.value),
                    _ => {}
                }
            }
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let se = |v: &[f64]| {
            (v.len() > 1).then(|| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
                (var / v.len() as f64).sqrt()
            })
        };
        rows.push(SweepRow {
            axis,
            value: v,
            replicates,
            w2: mean(&w2s),
            w2_std_error: se(&w2s),
            kl: mean(&kls),
            flagged,
        });
    }
    Ok(rows)
}

pub fn write_sweep<W: Write>(w: W, rows: &[SweepRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["axis", "value", "replicates", "w2", "w2_std_error", "kl", "flagged"])?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in rows {
        let axis = match r.axis {
            SweepAxis::Steps => "steps",
            SweepAxis::EpsScore => "eps_score",
            SweepAxis::Kappa => "kappa",
        };
        out.write_record([
            axis.to_string(),
            fmt_f64(r.value),
            r.replicates.to_string(),
            opt(r.w2),
            opt(r.w2_std_error),
            opt(r.kl),
            r.flagged.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Load a config, sweep it and write `sweep.csv`.
pub fn run_sweep(
    config_path: &Path,
    axis: SweepAxis,
    values: &[f64],
    replicates: usize,
    out_dir: Option<&Path>,
    seed: Option<u64>,
) -> Result<(Vec<SweepRow>, PathBuf)> {
    let exp = ExperimentConfig::load(config_path)?.validate()?;
    let rows = sweep(&exp, axis, values, replicates, seed)?;
    let dir = resolve_out_dir(&exp.config, config_path, out_dir);
    let bytes = to_bytes(|b| write_sweep(b, &rows))?;
    std::fs::create_dir_all(&dir)?;
    write_atomic(&dir, "sweep.csv", &bytes)?;
    Ok((rows, dir.join("sweep.csv")))
}

/// Read samples written by [`write_samples`] (or any CSV whose columns
/// after an optional `chain` column are coordinates).
pub fn read_samples(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let skip = usize::from(headers.get(0) == Some("chain"));
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .skip(skip)
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("bad sample value `{v}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(row);
    }
    Ok(out)
}

/// Full metric battery for samples against a target.
pub fn compare(target: &Target, samples: &[Vec<f64>], bandwidth: Option<f64>, seed: u64) -> Result<Vec<MetricReport>> {
    let d = target.dim();
    if samples.iter().any(|s| s.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: samples.iter().find(|s| s.len() != d).map_or(0, |s| s.len()),
        });
    }
    let mut out = Vec::new();
    if d == 1 && !samples.is_empty() {
        let reference = reference_quantiles(target, samples.len(), 10, seed);
        let mut m = diagnostics::w2_report(&first_coords(samples), &reference)?;
        m.method = "quantile_coupling_vs_reference".into();
        out.push(m);
    }
    if d <= 2 && samples.len() >= 1000 {
        let kl = diagnostics::kl_estimate(target, samples, bandwidth)?;
        out.push(MetricReport {
            metric: "kl".into(),
            value: kl.value,
            std_error: 0.0,
            samples: vec![kl.samples, kl.grid_points],
            method: "kde".into(),
        });
    }
    for p in [2, 4] {
        out.push(diagnostics::moment_estimate(samples, p)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SANITY: &str = r#"
name = "sanity"

[target]
kind = "gaussian"
mean = [0.0]
variance = 1.0

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
chains = 2000
seed = 3

[diagnostics]
hessian_points = 50
lipschitz_times = 5
"#;

    #[test]
    fn fmt_has_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!("1.0000000000000001e-1".parse::<f64>().unwrap(), 0.1);
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn sanity_experiment_passes_and_is_deterministic() {
        let exp = ExperimentConfig::from_toml(SANITY).unwrap().validate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let mut a = execute(&exp, None).unwrap();
        assert!(a.report.all_pass, "{:#?}", a.report.checks);
        assert!(a.report.checks.iter().any(|c| c.name == "action"));
        assert_eq!(a.report.checks.iter().filter(|c| c.name == "lipschitz").count(), 5);
        write_outputs(dir.path(), &mut a).unwrap();
        let first = std::fs::read(dir.path().join("samples.csv")).unwrap();
        let mut b = execute(&exp, None).unwrap();
        write_outputs(dir.path(), &mut b).unwrap();
        assert_eq!(first, std::fs::read(dir.path().join("samples.csv")).unwrap());
        let back = read_samples(&dir.path().join("samples.csv")).unwrap();
        assert_eq!(back, a.trajectory.unwrap().final_samples);
        let json: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
        assert_eq!(json["schema_version"], 1);
        for c in json["checks"].as_array().unwrap() {
            assert!(c.get("bound").is_some() && c.get("estimate").is_some() && c.get("pass").is_some());
        }
    }

    #[test]
    fn reference_quantiles_are_sorted_and_centred() {
        let t: Target = crate::targets::GaussianMixture::standard(1).into();
        let q = reference_quantiles(&t, 1000, 20, 1);
        assert!(q.windows(2).all(|w| w[0] <= w[1]));
        assert!(q[499].abs() < 0.05);
    }

    #[test]
    fn sweep_rejects_unsorted_values() {
        let exp = ExperimentConfig::from_toml(SANITY).unwrap().validate().unwrap();
        assert!(sweep(&exp, SweepAxis::Steps, &[500.0, 250.0], 1, None).is_err());
        let rows = sweep(&exp, SweepAxis::EpsScore, &[0.0, 1.0], 1, None).unwrap();
        assert!(rows[1].w2.unwrap() > rows[0].w2.unwrap());
        assert_eq!("M".parse::<SweepAxis>().unwrap(), SweepAxis::Steps);
    }
}
