//! Static analysis of target smoothness: Lipschitz score, strong convexity
//! outside a ball, score bounds and Hessian decay.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::{GaussianMixture, HessianDecay, Noise, Target};
use crate::error::{Error, Result};
use crate::linalg::{eigenvalues_sym, spectral_norm_sym};

const ANALYSIS_SEED: u64 = 0x5EED_5A0F;
const CLOUD_SIZE: usize = 10_000;
const CONE_SAMPLES: usize = 1_000;
const EMPIRICAL_MARGIN: f64 = 1.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    Analytic,
    Empirical,
    Unbounded,
}

/// Outcome of the zero-cone analysis for one pair of components with
/// different covariances.
#[derive(Clone, Debug, Serialize)]
pub struct PairDiagnostic {
    /// Zero-based component indices.
    pub pair: [usize; 2],
    pub difference_eigenvalues: Vec<f64>,
    /// "definite", "indefinite" or "singular".
    pub classification: String,
    pub passed: bool,
    /// A unit vector on the zero cone for which no rescue condition holds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<f64>>,
    pub candidates_checked: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SmoothnessReport {
    pub lipschitz_ok: bool,
    #[serde(rename = "L_pi", with = "crate::serde_util")]
    pub l_pi: f64,
    pub l_pi_method: BoundMethod,
    pub strongly_convex_outside_ball: bool,
    #[serde(rename = "M_pi", with = "crate::serde_util")]
    pub m_pi: f64,
    #[serde(with = "crate::serde_util")]
    pub r: f64,
    pub failed_pairs: Vec<PairDiagnostic>,
    #[serde(rename = "C_pi", with = "crate::serde_util::option")]
    pub c_pi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hessian_decay: Option<HessianDecay>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<PairDiagnostic>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// (2/M)·exp(16·L·r²), the log-Sobolev constant bound for a potential that
/// is L-smooth and M-strongly convex outside a ball of radius r.
pub fn lsi_constant_bound(m_pi: f64, l_pi: f64, r: f64) -> Result<f64> {
    if !(m_pi > 0.0) {
        return Err(Error::invalid(format!("M_pi must be positive, got {m_pi}")));
    }
    if !(l_pi >= 0.0) || !(r >= 0.0) {
        return Err(Error::invalid("L_pi and r must be nonnegative"));
    }
    Ok(((2.0 / m_pi).ln() + 16.0 * l_pi * r * r).exp())
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KPiEstimate {
    /// √(E‖∇log π‖⁸)
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Monte Carlo estimate of √(E‖∇V‖⁸) with a delta-method standard error.
pub fn estimate_k_pi(target: &Target, n: usize, seed: u64) -> Result<KPiEstimate> {
    if n < 1000 {
        return Err(Error::invalid(format!("need at least 1000 samples, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<f64> = (0..n)
        .map(|_| {
            let x = target.sample_one(&mut rng);
            target.score_v(&x).norm_squared().powi(4)
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se_mean = (var / n as f64).sqrt();
    let value = mean.sqrt();
    Ok(KPiEstimate {
        value,
        std_error: se_mean / (2.0 * value.max(f64::MIN_POSITIVE)),
        n,
    })
}

/// Unit directions covering the sphere.
pub(crate) fn directions(d: usize) -> Vec<DVector<f64>> {
    match d {
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..720)
            .map(|k| {
                let a = k as f64 * std::f64::consts::PI / 360.0;
                DVector::from_vec(vec![a.cos(), a.sin()])
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(ANALYSIS_SEED ^ d as u64);
            (0..2000)
                .map(|_| {
                    let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let n = v.norm();
                    v / n
                })
                .collect()
        }
    }
}

/// Largest Hessian spectral norm over `points`.
pub fn hessian_sup(target: &Target, points: &[DVector<f64>]) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for p in points {
        let h = target.hessian_v(p);
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("Hessian at {:?}", p.as_slice())));
        }
        sup = sup.max(spectral_norm_sym(&h));
    }
    Ok(sup)
}

/// Target samples plus rings at 1..5 times the bulk radius.
fn probe_cloud(target: &Target) -> Vec<DVector<f64>> {
    let mut pts = target.sample(CLOUD_SIZE, ANALYSIS_SEED);
    let r0 = target.spread();
    for dir in directions(target.dim()) {
        for k in 1..=5 {
            pts.push(&dir * (r0 * k as f64));
        }
    }
    pts
}

/// Smallest radius r (scaled by 1.1) such that -∇²log π ≽ M·I on every probed
/// point beyond r, or `None` if convexity fails at the edge of the scan.
pub fn convexity_radius(target: &Target, m_pi: f64) -> Option<f64> {
    let r_max = 4.0 * target.spread();
    let step = (target.length_scale() / 4.0).min(r_max / 400.0).max(r_max / 20_000.0);
    let n = (r_max / step).ceil() as usize;
    let mut last_bad: Option<f64> = None;
    for dir in directions(target.dim()) {
        for k in (0..=n).rev() {
            let rho = k as f64 * step;
            let h = target.hessian_v(&(&dir * rho));
            let min_eig = eigenvalues_sym(&(-h)).min();
            if min_eig < m_pi {
                if k == n {
                    return None;
                }
                last_bad = Some(last_bad.map_or(rho, |b: f64| b.max(rho)));
                break;
            }
        }
    }
    Some(last_bad.map_or(0.0, |b| (b + step) * 1.1))
}

fn check_pair(
    mix: &GaussianMixture,
    i: usize,
    j: usize,
    rng: &mut ChaCha8Rng,
) -> PairDiagnostic {
    let comps = mix.components();
    let pi = comps[i].precision();
    let pj = comps[j].precision();
    let diff = pi - pj;
    let norm = spectral_norm_sym(&diff);
    let eig = SymmetricEigen::new(crate::linalg::symmetrize(&diff));
    let thr = 1e-10 * norm;
    let values: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    let pos: Vec<usize> = (0..values.len()).filter(|&k| values[k] > thr).collect();
    let neg: Vec<usize> = (0..values.len()).filter(|&k| values[k] < -thr).collect();
    let zero: Vec<usize> = (0..values.len())
        .filter(|&k| values[k].abs() <= thr)
        .collect();

    let classification = if zero.is_empty() && (pos.is_empty() || neg.is_empty()) {
        "definite"
    } else if zero.is_empty() {
        "indefinite"
    } else {
        "singular"
    };
    if classification == "definite" {
        return PairDiagnostic {
            pair: [i, j],
            difference_eigenvalues: values,
            classification: classification.into(),
            passed: true,
            witness: None,
            candidates_checked: 0,
        };
    }

    let v = pi * &comps[i].mean - pj * &comps[j].mean;
    let v_scale = (pi * &comps[i].mean)
        .norm()
        .max((pj * &comps[j].mean).norm())
        .max(f64::MIN_POSITIVE);

    let mut candidates = zero_cone_candidates(&diff, thr, rng);
    // cone restricted to the orthogonal complement of v, where (ii) cannot help
    let d = diff.nrows();
    if d > 1 && v.norm() > 1e-12 * v_scale {
        let basis = orthogonal_complement(&v);
        let restricted = basis.transpose() * &diff * &basis;
        let rnorm = spectral_norm_sym(&restricted);
        if rnorm <= thr {
            for c in 0..basis.ncols() {
                candidates.push(basis.column(c).into_owned());
            }
            for _ in 0..CONE_SAMPLES {
                let c = DVector::from_fn(basis.ncols(), |_, _| rng.sample::<f64, _>(StandardNormal));
                candidates.push(&basis * c);
            }
        } else {
            for u in zero_cone_candidates(&restricted, 1e-10 * rnorm, rng) {
                candidates.push(&basis * u);
            }
        }
    }

    let mut checked = 0;
    for u in candidates {
        let n = u.norm();
        if !(n > 0.0) {
            continue;
        }
        let u = u / n;
        if (u.dot(&(&diff * &u))).abs() > 1e-8 * norm {
            continue;
        }
        checked += 1;
        let cond_i = (&diff * &u).norm() <= 1e-8 * norm;
        let cond_ii = u.dot(&v).abs() > 1e-8 * v_scale;
        let cond_iii = comps.iter().any(|ck| {
            let pk = ck.precision();
            let a = u.dot(&((pi - pk) * &u));
            let b = u.dot(&((pj - pk) * &u));
            a > thr || b > thr
        });
        if !(cond_i || cond_ii || cond_iii) {
            return PairDiagnostic {
                pair: [i, j],
                difference_eigenvalues: values,
                classification: classification.into(),
                passed: false,
                witness: Some(u.iter().cloned().collect()),
                candidates_checked: checked,
            };
        }
    }
    PairDiagnostic {
        pair: [i, j],
        difference_eigenvalues: values,
        classification: classification.into(),
        passed: true,
        witness: None,
        candidates_checked: checked,
    }
}

/// Vectors u with uᵀ D u = 0: null vectors, balanced eigenpairs and random cone points.
fn zero_cone_candidates(diff: &DMatrix<f64>, thr: f64, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let eig = SymmetricEigen::new(crate::linalg::symmetrize(diff));
    let vals = &eig.eigenvalues;
    let vecs = &eig.eigenvectors;
    let d = vals.len();
    let pos: Vec<usize> = (0..d).filter(|&k| vals[k] > thr).collect();
    let neg: Vec<usize> = (0..d).filter(|&k| vals[k] < -thr).collect();
    let zero: Vec<usize> = (0..d).filter(|&k| vals[k].abs() <= thr).collect();
    let mut out = Vec::new();
    for &z in &zero {
        out.push(vecs.column(z).into_owned());
    }
    for &a in &pos {
        for &b in &neg {
            let ea = vecs.column(a);
            let eb = vecs.column(b);
            let ca = (-vals[b]).sqrt();
            let cb = vals[a].sqrt();
            out.push(ea * ca + eb * cb);
            out.push(ea * ca - eb * cb);
        }
    }
    for _ in 0..CONE_SAMPLES {
        let mut c = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let sp: f64 = pos.iter().map(|&k| vals[k] * c[k] * c[k]).sum();
        let sn: f64 = neg.iter().map(|&k| -vals[k] * c[k] * c[k]).sum();
        if pos.is_empty() || neg.is_empty() {
            for &k in pos.iter().chain(&neg) {
                c[k] = 0.0;
            }
        } else {
            let s = (sn / sp).sqrt();
            for &k in &pos {
                c[k] *= s;
            }
        }
        out.push(vecs * c);
    }
    out
}

/// Orthonormal basis (as columns) of the complement of `v`.
fn orthogonal_complement(v: &DVector<f64>) -> DMatrix<f64> {
    let d = v.len();
    let vn = v / v.norm();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for k in 0..d {
        let mut e = DVector::zeros(d);
        e[k] = 1.0;
        let mut w = &e - &vn * vn.dot(&e);
        for c in &cols {
            w -= c * c.dot(&w);
        }
        let n = w.norm();
        if n > 1e-8 && cols.len() < d - 1 {
            cols.push(w / n);
        }
    }
    DMatrix::from_columns(&cols)
}

/// Pairwise zero-cone analysis of a Gaussian mixture plus the derived constants.
pub fn check_mixture_smoothness(mix: &GaussianMixture) -> Result<SmoothnessReport> {
    let comps = mix.components();
    let mut rng = ChaCha8Rng::seed_from_u64(ANALYSIS_SEED);
    let mut pairs = Vec::new();
    for i in 0..comps.len() {
        for j in (i + 1)..comps.len() {
            let a = &comps[i].cov.matrix;
            let b = &comps[j].cov.matrix;
            if (a - b).amax() <= 1e-12 * a.amax().max(b.amax()) {
                continue;
            }
            pairs.push(check_pair(mix, i, j, &mut rng));
        }
    }
    let failed: Vec<PairDiagnostic> = pairs.iter().filter(|p| !p.passed).cloned().collect();
    let lipschitz_ok = failed.is_empty();
    let target = Target::GaussianMixture(mix.clone());
    let min_curv = comps
        .iter()
        .map(|c| 1.0 / c.cov.eig_max)
        .fold(f64::INFINITY, f64::min);
    let max_curv = comps
        .iter()
        .map(|c| 1.0 / c.cov.eig_min)
        .fold(0.0, f64::max);
    let mut notes = Vec::new();

    let (l_pi, method) = if !lipschitz_ok {
        (f64::INFINITY, BoundMethod::Unbounded)
    } else if mix.has_equal_covariances() {
        // -∇²log π = P - Cov_q(P(x - μ_i)); the covariance is bounded by diam²/4.
        let p = comps[0].precision();
        let mut diam: f64 = 0.0;
        for a in comps {
            for b in comps {
                diam = diam.max((p * (&a.mean - &b.mean)).norm());
            }
        }
        let lam_min = 1.0 / comps[0].cov.eig_max;
        let lam_max = 1.0 / comps[0].cov.eig_min;
        (lam_max.max(diam * diam / 4.0 - lam_min), BoundMethod::Analytic)
    } else {
        let sup = hessian_sup(&target, &probe_cloud(&target))?;
        notes.push("L_pi is an empirical supremum over a sample cloud and outer rings".into());
        ((sup * EMPIRICAL_MARGIN).max(max_curv), BoundMethod::Empirical)
    };

    let (strongly_convex, m_pi, r) = if lipschitz_ok {
        let m = 0.5 * min_curv;
        match convexity_radius(&target, m) {
            Some(r) => (true, m, r),
            None => (false, 0.0, f64::INFINITY),
        }
    } else {
        (false, 0.0, f64::INFINITY)
    };

    Ok(SmoothnessReport {
        lipschitz_ok,
        l_pi,
        l_pi_method: method,
        strongly_convex_outside_ball: strongly_convex,
        m_pi,
        r,
        failed_pairs: failed,
        c_pi: None,
        hessian_decay: None,
        pairs,
        notes,
    })
}

pub(crate) fn report(target: &Target) -> Result<SmoothnessReport> {
    match target {
        Target::GaussianMixture(g) => check_mixture_smoothness(g),
        Target::StudentT(t) => {
            let d = t.dim() as f64;
            let a = t.dof();
            Ok(SmoothnessReport {
                lipschitz_ok: true,
                l_pi: t.lipschitz_constant(),
                l_pi_method: BoundMethod::Analytic,
                strongly_convex_outside_ball: false,
                m_pi: 0.0,
                r: 0.0,
                failed_pairs: Vec::new(),
                c_pi: Some((a + d).powi(2) / (2.0 * a * t.scale().eig_min)),
                hessian_decay: Some(t.hessian_decay()),
                pairs: Vec::new(),
                notes: vec!["Hessian decays as |x|^-2; decay envelope holds on all of R^d".into()],
            })
        }
        Target::SmoothedUniform(s) => {
            let lo = s.support.0.min(s.gaussian_mean) - 12.0 * s.length_scale().max(1.0) * 4.0;
            let hi = s.support.1.max(s.gaussian_mean) + 12.0 * s.length_scale().max(1.0) * 4.0;
            let step = s.length_scale() / 100.0;
            let n = ((hi - lo) / step).ceil() as usize;
            let mut sup: f64 = 0.0;
            for k in 0..=n {
                sup = sup.max(s.hessian(lo + k as f64 * step).abs());
            }
            let l_pi = sup * 1.05;
            let m_pi = 0.5 / s.gaussian_var.max(s.smoothing_var);
            let (convex, m, r) = match convexity_radius(target, m_pi) {
                Some(r) => (true, m_pi, r),
                None => (false, 0.0, f64::INFINITY),
            };
            Ok(SmoothnessReport {
                lipschitz_ok: true,
                l_pi,
                l_pi_method: BoundMethod::Empirical,
                strongly_convex_outside_ball: convex,
                m_pi: m,
                r,
                failed_pairs: Vec::new(),
                c_pi: None,
                hessian_decay: None,
                pairs: Vec::new(),
                notes: vec!["L_pi is a dense-grid supremum with a 5% margin".into()],
            })
        }
        Target::CompactPlusNoise(c) => match c.noise() {
            Noise::Gaussian { .. } => check_mixture_smoothness(c.as_gaussian_mixture().unwrap()),
            Noise::StudentT { .. } => {
                let (l, cp) = c.heavy_constants().unwrap();
                Ok(SmoothnessReport {
                    lipschitz_ok: true,
                    l_pi: l,
                    l_pi_method: BoundMethod::Analytic,
                    strongly_convex_outside_ball: false,
                    m_pi: 0.0,
                    r: 0.0,
                    failed_pairs: Vec::new(),
                    c_pi: Some(cp),
                    hessian_decay: None,
                    pairs: Vec::new(),
                    notes: Vec::new(),
                })
            }
        },
    }
}
