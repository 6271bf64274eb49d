//! Adaptive Gauss–Kronrod (7/15) quadrature for vector-valued integrands on
//! finite or infinite intervals.
//!
//! Each component is controlled against `rel_tol · ∫|f_k|`, so components
//! whose integral cancels to zero (a score at a symmetry point, say) do not
//! force endless refinement.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Clone, Debug)]
pub struct Options {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
    /// Points where the integrand changes character; the initial partition splits there.
    pub breakpoints: Vec<f64>,
    /// Typical length scale of the integrand, used for the initial partition and tail maps.
    pub scale: f64,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_intervals: 4000,
            breakpoints: Vec::new(),
            scale: 1.0,
        }
    }
}

impl Options {
    pub fn with_breakpoints(mut self, points: impl IntoIterator<Item = f64>) -> Self {
        self.breakpoints.extend(points);
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_rel_tol(mut self, tol: f64) -> Self {
        self.rel_tol = tol;
        self
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Estimate<const K: usize> {
    pub value: [f64; K],
    pub error: [f64; K],
    /// Estimate of ∫|f_k|, the scale used for the relative tolerance.
    pub abs_value: [f64; K],
    pub evaluations: usize,
}

#[derive(Clone, Copy, Debug)]
enum Map {
    Finite,
    /// z = anchor + s·u/(1-u), u ∈ [0, 1)
    Right { anchor: f64, s: f64 },
    /// z = anchor - s·u/(1-u), u ∈ [0, 1)
    Left { anchor: f64, s: f64 },
}

impl Map {
    #[inline]
    fn apply(self, u: f64) -> (f64, f64) {
        match self {
            Map::Finite => (u, 1.0),
            Map::Right { anchor, s } => {
                let w = 1.0 - u;
                (anchor + s * u / w, s / (w * w))
            }
            Map::Left { anchor, s } => {
                let w = 1.0 - u;
                (anchor - s * u / w, s / (w * w))
            }
        }
    }
}

struct Piece<const K: usize> {
    map: Map,
    u0: f64,
    u1: f64,
    value: [f64; K],
    error: [f64; K],
    abs_value: [f64; K],
    key: f64,
}

impl<const K: usize> PartialEq for Piece<K> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl<const K: usize> Eq for Piece<K> {}
impl<const K: usize> PartialOrd for Piece<K> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<const K: usize> Ord for Piece<K> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key)
    }
}

fn gk15<const K: usize, F>(f: &mut F, map: Map, u0: f64, u1: f64) -> ([f64; K], [f64; K], [f64; K])
where
    F: FnMut(f64) -> [f64; K],
{
    let c = 0.5 * (u0 + u1);
    let h = 0.5 * (u1 - u0);
    let mut kron = [0.0; K];
    let mut gauss = [0.0; K];
    let mut absk = [0.0; K];
    let mut eval = |u: f64| -> [f64; K] {
        let (z, jac) = map.apply(u);
        let mut v = f(z);
        for x in v.iter_mut() {
            *x *= jac;
            if !x.is_finite() {
                *x = 0.0;
            }
        }
        v
    };
    let center = eval(c);
    for k in 0..K {
        kron[k] = WGK[7] * center[k];
        gauss[k] = WG[3] * center[k];
        absk[k] = WGK[7] * center[k].abs();
    }
    for j in 0..7 {
        let dx = h * XGK[j];
        let lo = eval(c - dx);
        let hi = eval(c + dx);
        for k in 0..K {
            let s = lo[k] + hi[k];
            kron[k] += WGK[j] * s;
            absk[k] += WGK[j] * (lo[k].abs() + hi[k].abs());
            if j % 2 == 1 {
                gauss[k] += WG[j / 2] * s;
            }
        }
    }
    let mut err = [0.0; K];
    for k in 0..K {
        kron[k] *= h;
        absk[k] *= h.abs();
        err[k] = (kron[k] - gauss[k] * h).abs();
    }
    (kron, err, absk)
}

fn initial_pieces(a: f64, b: f64, opts: &Options) -> Vec<(Map, f64, f64)> {
    let scale = if opts.scale.is_finite() && opts.scale > 0.0 {
        opts.scale
    } else {
        1.0
    };
    let mut pts: Vec<f64> = opts
        .breakpoints
        .iter()
        .cloned()
        .filter(|p| p.is_finite() && *p > a && *p < b)
        .collect();
    if a.is_finite() {
        pts.push(a);
    }
    if b.is_finite() {
        pts.push(b);
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.is_empty() {
        pts.push(0.0);
    }

    let mut out = Vec::new();
    let tail_splits = [0.0, 0.5, 0.8, 0.95, 1.0];
    if a == f64::NEG_INFINITY {
        let map = Map::Left { anchor: pts[0], s: scale };
        for w in tail_splits.windows(2) {
            out.push((map, w[0], w[1]));
        }
    }
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        if len <= 0.0 {
            continue;
        }
        let n = ((len / scale).ceil() as usize).clamp(1, 64);
        let step = len / n as f64;
        for i in 0..n {
            let lo = w[0] + step * i as f64;
            let hi = if i + 1 == n { w[1] } else { lo + step };
            out.push((Map::Finite, lo, hi));
        }
    }
    if b == f64::INFINITY {
        let map = Map::Right {
            anchor: *pts.last().unwrap(),
            s: scale,
        };
        for w in tail_splits.windows(2) {
            out.push((map, w[0], w[1]));
        }
    }
    out
}

/// Integrate `f` over `[a, b]`; either bound may be infinite.
pub fn integrate<const K: usize, F>(mut f: F, a: f64, b: f64, opts: &Options) -> Result<Estimate<K>>
where
    F: FnMut(f64) -> [f64; K],
{
    if a.is_nan() || b.is_nan() {
        return Err(Error::invalid("quadrature bounds are NaN"));
    }
    if a >= b {
        return Ok(Estimate {
            value: [0.0; K],
            error: [0.0; K],
            abs_value: [0.0; K],
            evaluations: 0,
        });
    }

    let mut heap: BinaryHeap<Piece<K>> = BinaryHeap::new();
    let mut finished: Vec<Piece<K>> = Vec::new();
    let mut evaluations = 0usize;

    let raw: Vec<_> = initial_pieces(a, b, opts)
        .into_iter()
        .map(|(map, u0, u1)| {
            let (v, e, abs) = gk15(&mut f, map, u0, u1);
            (map, u0, u1, v, e, abs)
        })
        .collect();
    evaluations += 15 * raw.len();

    let mut key_scale = [0.0; K];
    for r in &raw {
        for (s, e) in key_scale.iter_mut().zip(&r.5) {
            *s += e;
        }
    }
    for s in key_scale.iter_mut() {
        *s = s.max(1e-300);
    }
    let key_of = |err: &[f64; K]| -> f64 {
        (0..K).map(|k| err[k] / key_scale[k]).fold(0.0, f64::max)
    };

    let mut total_err = [0.0; K];
    let mut total_abs = [0.0; K];
    for (map, u0, u1, v, e, abs) in raw {
        for k in 0..K {
            total_err[k] += e[k];
            total_abs[k] += abs[k];
        }
        heap.push(Piece {
            map,
            u0,
            u1,
            value: v,
            error: e,
            abs_value: abs,
            key: key_of(&e),
        });
    }

    let converged = |err: &[f64; K], abs: &[f64; K]| -> bool {
        (0..K).all(|k| err[k] <= opts.abs_tol.max(opts.rel_tol * abs[k]))
    };

    while !converged(&total_err, &total_abs) {
        let Some(piece) = heap.pop() else { break };
        let mid = 0.5 * (piece.u0 + piece.u1);
        if !(mid > piece.u0 && mid < piece.u1) || piece.key == 0.0 {
            finished.push(piece);
            continue;
        }
        if heap.len() + finished.len() + 1 >= opts.max_intervals {
            heap.push(piece);
            let achieved = (0..K)
                .map(|k| total_err[k] / total_abs[k].max(1e-300))
                .fold(0.0, f64::max);
            return Err(Error::Quadrature {
                achieved,
                requested: opts.rel_tol,
            });
        }
        for k in 0..K {
            total_err[k] -= piece.error[k];
            total_abs[k] -= piece.abs_value[k];
        }
        for (lo, hi) in [(piece.u0, mid), (mid, piece.u1)] {
            let (v, e, abs) = gk15(&mut f, piece.map, lo, hi);
            evaluations += 15;
            for k in 0..K {
                total_err[k] += e[k];
                total_abs[k] += abs[k];
            }
            heap.push(Piece {
                map: piece.map,
                u0: lo,
                u1: hi,
                value: v,
                error: e,
                abs_value: abs,
                key: key_of(&e),
            });
        }
    }

    let mut value = [0.0; K];
    let mut error = [0.0; K];
    let mut abs_value = [0.0; K];
    for p in heap.iter().chain(finished.iter()) {
        for k in 0..K {
            value[k] += p.value[k];
            error[k] += p.error[k];
            abs_value[k] += p.abs_value[k];
        }
    }
    Ok(Estimate {
        value,
        error,
        abs_value,
        evaluations,
    })
}

pub fn integrate_scalar<F>(mut f: F, a: f64, b: f64, opts: &Options) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    integrate(|x| [f(x)], a, b, opts).map(|e| e.value[0])
}

/// Nested two-dimensional integral over the whole plane.
pub fn integrate_plane<const K: usize, F>(
    f: F,
    outer: &Options,
    inner: &Options,
) -> Result<Estimate<K>>
where
    F: Fn(f64, f64) -> [f64; K],
{
    let mut failure: Option<Error> = None;
    let mut inner_evals = 0usize;
    let est = integrate(
        |z1| {
            if failure.is_some() {
                return [0.0; K];
            }
            match integrate(|z2| f(z1, z2), f64::NEG_INFINITY, f64::INFINITY, inner) {
                Ok(e) => {
                    inner_evals += e.evaluations;
                    e.value
                }
                Err(err) => {
                    failure = Some(err);
                    [0.0; K]
                }
            }
        },
        f64::NEG_INFINITY,
        f64::INFINITY,
        outer,
    )?;
    if let Some(err) = failure {
        return Err(err);
    }
    Ok(Estimate {
        evaluations: est.evaluations + inner_evals,
        ..est
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate_scalar(|x| x.powi(5) - 2.0 * x, 0.0, 2.0, &Options::default()).unwrap();
        assert_relative_eq!(v, 64.0 / 6.0 - 4.0, max_relative = 1e-13);
    }

    #[test]
    fn gaussian_over_real_line() {
        let v = integrate_scalar(
            |x| (-0.5 * x * x).exp(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            &Options::default(),
        )
        .unwrap();
        assert_relative_eq!(v, (2.0 * PI).sqrt(), max_relative = 1e-11);
    }

    #[test]
    fn cauchy_tails_converge() {
        let v = integrate_scalar(
            |x| 1.0 / (PI * (1.0 + x * x)),
            f64::NEG_INFINITY,
            f64::INFINITY,
            &Options::default(),
        )
        .unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn vector_components_with_cancellation() {
        // ∫ x φ(x) = 0, ∫ x² φ(x) = 1
        let e = integrate(
            |x| {
                let p = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
                [p, x * p, x * x * p]
            },
            f64::NEG_INFINITY,
            f64::INFINITY,
            &Options::default(),
        )
        .unwrap();
        assert_relative_eq!(e.value[0], 1.0, max_relative = 1e-11);
        assert!(e.value[1].abs() < 1e-11);
        assert_relative_eq!(e.value[2], 1.0, max_relative = 1e-10);
    }

    #[test]
    fn kink_at_breakpoint() {
        let opts = Options::default().with_breakpoints([0.3]);
        let v = integrate_scalar(|x| (x - 0.3).abs(), 0.0, 1.0, &opts).unwrap();
        assert_relative_eq!(v, 0.5 * (0.09 + 0.49), max_relative = 1e-13);
    }

    #[test]
    fn plane_integral_of_bivariate_normal() {
        let e = integrate_plane(
            |a, b| [(-0.5 * (a * a + b * b)).exp() / (2.0 * PI)],
            &Options::default().with_rel_tol(1e-9),
            &Options::default().with_rel_tol(1e-11),
        )
        .unwrap();
        assert_relative_eq!(e.value[0], 1.0, max_relative = 1e-8);
    }

    #[test]
    fn reports_non_convergence() {
        let opts = Options {
            max_intervals: 8,
            ..Options::default()
        };
        let r = integrate_scalar(|x| (1.0 / x).sin(), 1e-6, 1.0, &opts);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }
}
