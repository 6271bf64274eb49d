//! Independent estimators used to check the bounds: 1D Wasserstein-2, KL by
//! kernel density estimation, mode counting, Hessian suprema and moments.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::spectral_norm_sym;
use crate::paths::{DiffusionPath, ScoreMethod};
use crate::special::{log_sum_exp, LN_2PI};
use crate::targets::Target;

/// Default relative height below which maxima are ignored.
pub const DEFAULT_PROMINENCE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    /// Standard error, or the tolerance of a deterministic estimate.
    pub std_error: f64,
    pub samples: Vec<usize>,
    pub method: String,
}

/// Quantile-coupling W2 between equal-size one-dimensional samples.
pub fn w2_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("W2 needs non-empty samples"));
    }
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "W2 needs equal sample sizes, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let s: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((s / a.len() as f64).sqrt())
}

pub fn w2_report(a: &[f64], b: &[f64]) -> Result<MetricReport> {
    Ok(MetricReport {
        metric: "w2".into(),
        value: w2_1d(a, b)?,
        std_error: 0.0,
        samples: vec![a.len(), b.len()],
        method: "quantile_coupling".into(),
    })
}

/// Gaussian product-kernel density estimate.
#[derive(Clone, Debug)]
pub struct Kde {
    points: Vec<Vec<f64>>,
    bandwidth: Vec<f64>,
    log_norm: f64,
}

fn std_dev(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    let m = xs.clone().sum::<f64>() / n;
    (xs.map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let pos = p * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Silverman's rule per coordinate: 0.9·min(sd, IQR/1.34)·n^{-1/5} for d = 1,
/// and sd·(4/((d+2)n))^{1/(d+4)} otherwise.
pub fn silverman_bandwidth(samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid("bandwidth needs at least two samples"));
    }
    let d = samples[0].len();
    let nf = n as f64;
    (0..d)
        .map(|k| {
            let col = samples.iter().map(move |x| x[k]);
            let sd = std_dev(col.clone());
            if !(sd > 0.0) || !sd.is_finite() {
                return Err(Error::invalid(format!("samples are degenerate along coordinate {k}")));
            }
            if d == 1 {
                let mut v: Vec<f64> = col.collect();
                v.sort_unstable_by(f64::total_cmp);
                let iqr = quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25);
                let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
                Ok(0.9 * spread * nf.powf(-0.2))
            } else {
                let df = d as f64;
                Ok(sd * (4.0 / ((df + 2.0) * nf)).powf(1.0 / (df + 4.0)))
            }
        })
        .collect()
}

impl Kde {
    pub fn new(samples: &[Vec<f64>], bandwidth: Option<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("density estimate needs samples"));
        }
        let d = samples[0].len();
        if samples.iter().any(|s| s.len() != d || s.iter().any(|v| !v.is_finite())) {
            return Err(Error::invalid("samples must be finite and share one dimension"));
        }
        let bandwidth = match bandwidth {
            Some(h) if h > 0.0 && h.is_finite() => vec![h; d],
            Some(h) => return Err(Error::invalid(format!("bandwidth must be positive, got {h}"))),
            None => silverman_bandwidth(samples)?,
        };
        let log_norm = -(samples.len() as f64).ln()
            - bandwidth.iter().map(|h| 0.5 * LN_2PI + h.ln()).sum::<f64>();
        Ok(Self {
            points: samples.to_vec(),
            bandwidth,
            log_norm,
        })
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .points
            .iter()
            .map(|p| {
                -0.5 * p
                    .iter()
                    .zip(x)
                    .zip(&self.bandwidth)
                    .map(|((p, x), h)| ((x - p) / h).powi(2))
                    .sum::<f64>()
            })
            .collect();
        log_sum_exp(&terms) + self.log_norm
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KlEstimate {
    pub value: f64,
    pub bandwidth: Vec<f64>,
    pub grid_points: usize,
    pub samples: usize,
}

/// KL(π ‖ q̂) with q̂ a Gaussian KDE of `samples`, integrated over π on a grid
/// spanning six target standard deviations around the target mean (d ≤ 2).
pub fn kl_estimate(target: &Target, samples: &[Vec<f64>], bandwidth: Option<f64>) -> Result<KlEstimate> {
    let d = target.dim();
    if d > 2 {
        return Err(Error::Unsupported(format!("KL estimates need d <= 2, got d = {d}")));
    }
    if samples.len() < 1000 {
        return Err(Error::invalid(format!(
            "KL estimates need at least 1000 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|s| s.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: samples.iter().find(|s| s.len() != d).unwrap().len(),
        });
    }
    let kde = Kde::new(samples, bandwidth)?;
    let mean = target.mean();
    let sd = target_sd(target);
    let n_axis = if d == 1 { 2001 } else { 161 };
    let axes: Vec<Vec<f64>> = (0..d)
        .map(|k| {
            let (lo, hi) = (mean[k] - 6.0 * sd[k], mean[k] + 6.0 * sd[k]);
            (0..n_axis)
                .map(|i| lo + (hi - lo) * i as f64 / (n_axis - 1) as f64)
                .collect()
        })
        .collect();
    let simpson_w = |i: usize| {
        if i == 0 || i == n_axis - 1 {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let cell: f64 = axes.iter().map(|a| (a[1] - a[0]) / 3.0).product();
    let nodes: Vec<(Vec<f64>, f64)> = if d == 1 {
        axes[0].iter().enumerate().map(|(i, &x)| (vec![x], simpson_w(i))).collect()
    } else {
        let mut v = Vec::with_capacity(n_axis * n_axis);
        for (i, &x) in axes[0].iter().enumerate() {
            for (j, &y) in axes[1].iter().enumerate() {
                v.push((vec![x, y], simpson_w(i) * simpson_w(j)));
            }
        }
        v
    };
    let parts: Vec<(f64, f64)> = nodes
        .par_iter()
        .map(|(x, w)| {
            let lp = target.log_density(x).unwrap_or(f64::NEG_INFINITY);
            if lp == f64::NEG_INFINITY {
                return (0.0, 0.0);
            }
            let p = lp.exp();
            (w * p * (lp - kde.log_density(x)), w * p)
        })
        .collect();
    let (kl, mass) = parts
        .iter()
        .fold((0.0, 0.0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
    // renormalize over the truncated window
    let value = kl * cell / (mass * cell);
    Ok(KlEstimate {
        value,
        bandwidth: kde.bandwidth.clone(),
        grid_points: nodes.len(),
        samples: samples.len(),
    })
}

fn target_sd(target: &Target) -> Vec<f64> {
    let d = target.dim();
    let exact = match target {
        Target::GaussianMixture(g) => Some(g.covariance()),
        Target::StudentT(t) if t.dof() > 2.0 => Some(t.covariance()),
        _ => None,
    };
    match exact {
        Some(c) => (0..d).map(|k| c[(k, k)].sqrt()).collect(),
        None => {
            let s = target.sample(20_000, 0x5d);
            (0..d)
                .map(|k| std_dev(s.iter().map(move |x| x[k])))
                .collect()
        }
    }
}

/// Number of local maxima on a one-dimensional grid whose height exceeds
/// `prominence` times the global maximum. A run of equal values counts once
/// when both neighbours are lower; the ends of the grid count as lower.
pub fn mode_count(values: &[f64], prominence: f64) -> Result<usize> {
    if values.len() < 200 {
        return Err(Error::invalid(format!(
            "mode counting needs at least 200 grid points, got {}",
            values.len()
        )));
    }
    if !(prominence >= 0.0) {
        return Err(Error::invalid("prominence must be non-negative"));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = prominence * max;
    let n = values.len();
    let mut count = 0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[j + 1] == values[i] {
            j += 1;
        }
        let left_lower = i == 0 || values[i - 1] < values[i];
        let right_lower = j == n - 1 || values[j + 1] < values[i];
        if left_lower && right_lower && values[i] > floor && !(i == 0 && j == n - 1) {
            count += 1;
        }
        i = j + 1;
    }
    Ok(count)
}

#[derive(Clone, Debug, Serialize)]
pub struct HessianSup {
    pub value: f64,
    /// Point where the supremum was attained.
    pub argmax: Vec<f64>,
    pub points: usize,
}

/// Largest spectral norm of ∇²log μ_t over `n_points` draws from μ_t and a
/// ring of probes at 1..5 times the bulk radius.
pub fn hessian_sup_estimate(path: &DiffusionPath, t: f64, n_points: usize, seed: u64) -> Result<HessianSup> {
    let m = path.at(t)?;
    let lambda = m.lambda();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<DVector<f64>> = (0..n_points)
        .map(|_| path.sample_marginal(lambda, &mut rng))
        .collect();
    let radius = (path.target().spread() * lambda.sqrt())
        .max(path.base().sigma() * 4.0 * (1.0 - lambda).sqrt());
    for dir in ring_directions(path.dim()) {
        for k in 1..=5 {
            pts.push(&dir * (radius * k as f64));
        }
    }
    let mut best = (0.0, vec![0.0; path.dim()]);
    for x in &pts {
        let h = m.evaluate(x, ScoreMethod::Auto, &mut rng)?.hessian;
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("marginal Hessian at {:?}", x.as_slice())));
        }
        let s = spectral_norm_sym(&h);
        if s > best.0 {
            best = (s, x.as_slice().to_vec());
        }
    }
    Ok(HessianSup {
        value: best.0,
        argmax: best.1,
        points: pts.len(),
    })
}

fn ring_directions(d: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::new();
    for k in 0..d {
        for s in [1.0, -1.0] {
            let mut v = DVector::zeros(d);
            v[k] = s;
            out.push(v);
        }
    }
    if d == 2 {
        for k in 0..16 {
            let a = (k as f64 + 0.5) * std::f64::consts::PI / 8.0;
            out.push(DVector::from_vec(vec![a.cos(), a.sin()]));
        }
    }
    out
}

/// Spectral norms of the target Hessian at `points`.
pub fn hessian_norms(target: &Target, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    points
        .iter()
        .map(|p| target.hessian_log_density(p).map(|h| spectral_norm_sym(&h)))
        .collect()
}

/// Least-squares fit y ≈ a + c·(x - shift)²; returns (c, a).
pub fn quadratic_growth(xs: &[f64], ys: &[f64], shift: f64) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("growth fit needs at least two paired values"));
    }
    let n = xs.len() as f64;
    let u: Vec<f64> = xs.iter().map(|x| (x - shift).powi(2)).collect();
    let mu = u.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = u.iter().zip(ys).map(|(u, y)| (u - mu) * (y - my)).sum();
    let sxx: f64 = u.iter().map(|u| (u - mu).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::invalid("growth fit needs distinct abscissae"));
    }
    let c = sxy / sxx;
    Ok((c, my - c * mu))
}

/// Empirical E‖X‖^p with its jackknife standard error.
pub fn moment_estimate(samples: &[Vec<f64>], p: u32) -> Result<MetricReport> {
    if ![2, 4, 6, 8].contains(&p) {
        return Err(Error::invalid(format!("moment order must be 2, 4, 6 or 8, got {p}")));
    }
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid("moments need at least two samples"));
    }
    let vals: Vec<f64> = samples
        .iter()
        .map(|x| x.iter().map(|v| v * v).sum::<f64>().powi(p as i32 / 2))
        .collect();
    let nf = n as f64;
    let total: f64 = vals.iter().sum();
    let mean = total / nf;
    // leave-one-out means; for the sample mean this reduces to sd/√n
    let var_j = vals
        .iter()
        .map(|v| ((total - v) / (nf - 1.0) - mean).powi(2))
        .sum::<f64>()
        * (nf - 1.0)
        / nf;
    Ok(MetricReport {
        metric: format!("moment_{p}"),
        value: mean,
        std_error: var_j.sqrt(),
        samples: vec![n],
        method: "jackknife".into(),
    })
}
