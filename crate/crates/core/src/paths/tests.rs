use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::convolution::Convolution;
use super::*;
use crate::linalg::spectral_norm_sym;
use crate::schedules::{Condition, Schedule};
use crate::targets::{GaussianMixture, StudentT, Target};

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

fn gauss1(mean: f64, var: f64) -> Target {
    GaussianMixture::isotropic(DVector::from_element(1, mean), var)
        .unwrap()
        .into()
}

fn t1(dof: f64, scale: f64) -> Target {
    StudentT::isotropic(DVector::zeros(1), scale, dof).unwrap().into()
}

fn cosine() -> Schedule {
    Schedule::cosine(1.0, 1.0).unwrap()
}

fn heavy_path() -> DiffusionPath {
    DiffusionPath::new(Base::student_t(1.0, 4.0).unwrap(), t1(4.0, 1.0), cosine()).unwrap()
}

fn bimodal() -> Target {
    GaussianMixture::new(vec![
        (0.5, DVector::from_element(1, -0.5), DMatrix::identity(1, 1)),
        (0.5, DVector::from_element(1, 0.5), DMatrix::identity(1, 1)),
    ])
    .unwrap()
    .into()
}

/// Plain composite Simpson rule on [a, b].
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn endpoints_recover_base_and_target() {
    let target = gauss1(2.0, 0.5);
    let path = DiffusionPath::new(Base::gaussian(1.5).unwrap(), target.clone(), cosine()).unwrap();
    for &x in &[-2.0, 0.0, 1.3] {
        let base = normal_pdf(x, 0.0, 2.25);
        assert_relative_eq!(path.marginal_density(0.0, &[x]).unwrap(), base, max_relative = 1e-12);
        assert_relative_eq!(path.marginal_score(0.0, &[x]).unwrap()[0], -x / 2.25, max_relative = 1e-12);
        assert_relative_eq!(
            path.marginal_density(1.0, &[x]).unwrap(),
            target.density(&[x]).unwrap(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            path.marginal_score(1.0, &[x]).unwrap()[0],
            target.score(&[x]).unwrap()[0],
            max_relative = 1e-12
        );
    }
    let heavy = heavy_path();
    let x = DVector::from_element(1, 0.7);
    assert_relative_eq!(
        heavy.marginal_log_density(0.0, &[0.7]).unwrap(),
        heavy.base().log_density(&x),
        max_relative = 1e-12
    );
}

#[test]
fn gaussian_marginal_at_half() {
    let path = DiffusionPath::new(Base::gaussian(1.0).unwrap(), gauss1(3.0, 4.0), cosine()).unwrap();
    let m = path.at_lambda(0.5).unwrap();
    assert!(m.has_closed_form());
    let mean = 3.0 / 2f64.sqrt();
    // independent oracle: Simpson rule on the convolution integral
    let oracle = |x: f64| {
        simpson(
            |u| normal_pdf(u, 3.0, 4.0) * normal_pdf(x - 0.5f64.sqrt() * u, 0.0, 0.5),
            -20.0,
            26.0,
            20_000,
        )
    };
    for &x in &[-1.0, 0.5, 2.1, 5.0] {
        let closed = m.log_density(&DVector::from_element(1, x)).unwrap().exp();
        assert_relative_eq!(closed, normal_pdf(x, mean, 2.5), max_relative = 1e-12);
        assert_relative_eq!(closed, oracle(x), max_relative = 1e-9);
    }
    // the generic convolution evaluator agrees with the closed form
    let conv = Convolution {
        target: path.target(),
        kernel: path.base().kernel(1, 0.5),
        lambda: 0.5,
    };
    for &x in &[-1.0, 2.1, 5.0] {
        let xv = DVector::from_element(1, x);
        let e = conv.quadrature(&xv, 1e-10).unwrap();
        assert_relative_eq!(e.log_density.exp(), normal_pdf(x, mean, 2.5), max_relative = 1e-8);
        assert_relative_eq!(e.score[0], -(x - mean) / 2.5, max_relative = 1e-8, epsilon = 1e-10);
        assert_relative_eq!(e.hessian[(0, 0)], -1.0 / 2.5, max_relative = 1e-7);
    }
}

#[test]
fn gaussian_stability_identity() {
    let path = DiffusionPath::new(Base::gaussian(1.0).unwrap(), gauss1(0.0, 1.0), cosine()).unwrap();
    let mut worst: f64 = 0.0;
    for k in 0..=20 {
        let t = k as f64 / 20.0;
        for j in 0..=40 {
            let x = -4.0 + 0.2 * j as f64;
            let diff = path.marginal_density(t, &[x]).unwrap() - normal_pdf(x, 0.0, 1.0);
            worst = worst.max(diff.abs());
        }
    }
    assert!(worst < 1e-12, "sup difference {worst}");
}

#[test]
fn two_dimensional_quadrature_matches_closed_form() {
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let target: Target = GaussianMixture::new(vec![
        (0.3, DVector::from_row_slice(&[1.0, -1.0]), cov.clone()),
        (0.7, DVector::from_row_slice(&[-0.5, 0.5]), DMatrix::identity(2, 2)),
    ])
    .unwrap()
    .into();
    let path = DiffusionPath::new(Base::gaussian(1.0).unwrap(), target, cosine()).unwrap();
    let lambda = 0.4;
    let closed = path.at_lambda(lambda).unwrap();
    let conv = Convolution {
        target: path.target(),
        kernel: path.base().kernel(2, 1.0 - lambda),
        lambda,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = DVector::from_row_slice(&[0.4, -0.2]);
    let exact = closed.evaluate(&x, ScoreMethod::Auto, &mut rng).unwrap();
    let quad = conv.quadrature(&x, 1e-9).unwrap();
    assert_relative_eq!(quad.log_density, exact.log_density, max_relative = 1e-7);
    assert_relative_eq!(quad.score, exact.score, max_relative = 1e-6, epsilon = 1e-9);
    assert_relative_eq!(quad.hessian, exact.hessian, max_relative = 1e-5, epsilon = 1e-8);
}

#[test]
fn closed_form_score_matches_finite_differences() {
    let target: Target = GaussianMixture::new(vec![
        (0.4, DVector::from_row_slice(&[-1.0, 2.0]), DMatrix::identity(2, 2) * 0.5),
        (0.6, DVector::from_row_slice(&[1.5, 0.0]), DMatrix::identity(2, 2)),
    ])
    .unwrap()
    .into();
    let path = DiffusionPath::new(Base::gaussian(1.2).unwrap(), target, cosine()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let t: f64 = rng.random_range(0.0..1.0);
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let s = path.marginal_score(t, &x).unwrap();
        for i in 0..2 {
            let h = 1e-5;
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (path.marginal_log_density(t, &xp).unwrap()
                - path.marginal_log_density(t, &xm).unwrap())
                / (2.0 * h);
            assert!((s[i] - fd).abs() <= 1e-4 * fd.abs().max(1e-2), "t={t} x={x:?} {} vs {fd}", s[i]);
        }
    }
}

#[test]
fn heavy_score_matches_finite_differences() {
    let path = heavy_path();
    for &t in &[0.2, 0.5, 0.8] {
        for &x in &[-2.0, 0.3, 1.0, 4.0] {
            let h = 1e-4;
            let fd = (path.marginal_log_density(t, &[x + h]).unwrap()
                - path.marginal_log_density(t, &[x - h]).unwrap())
                / (2.0 * h);
            let s = path.marginal_score(t, &[x]).unwrap()[0];
            assert_relative_eq!(s, fd, max_relative = 1e-5, epsilon = 1e-8);
        }
    }
}

#[test]
fn heavy_marginal_is_normalized() {
    let path = heavy_path();
    let m = path.at_lambda(0.5).unwrap();
    let mass = simpson(
        |x| m.log_density(&DVector::from_element(1, x)).unwrap().exp(),
        -400.0,
        400.0,
        8000,
    );
    // tails beyond 400 carry about 3e-10 of the mass
    assert_relative_eq!(mass, 1.0, max_relative = 1e-6);
}

#[test]
fn snis_matches_quadrature_for_heavy_base() {
    let path = heavy_path();
    let m = path.at_lambda(0.5).unwrap();
    let x = DVector::from_element(1, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let quad = m.evaluate(&x, ScoreMethod::Quadrature, &mut rng).unwrap();
    let snis = m.evaluate(&x, ScoreMethod::Snis, &mut rng).unwrap();
    assert_relative_eq!(snis.score[0], quad.score[0], max_relative = 1e-3);
    assert_relative_eq!(snis.log_density, quad.log_density, max_relative = 1e-3);
}

#[test]
fn snis_reports_low_ess_without_fallback() {
    let target = gauss1(0.0, 1e-6);
    let path = DiffusionPath::new(Base::student_t(1.0, 4.0).unwrap(), target, cosine())
        .unwrap()
        .with_snis(SnisOptions {
            particles: 100,
            max_particles: 200,
            ess_floor: 50.0,
            quadrature_fallback: false,
        });
    let m = path.at_lambda(0.99).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let err = m
        .snis_evaluate(&DVector::from_element(1, 0.0), &mut rng)
        .unwrap_err();
    assert!(matches!(err, Error::LowEss { particles: 200, .. }), "{err}");
}

#[test]
fn lipschitz_endpoints() {
    let path = DiffusionPath::new(Base::gaussian(1.0).unwrap(), bimodal(), cosine()).unwrap();
    let b0 = lipschitz_bound(&path, 0.0).unwrap();
    assert_eq!(b0.value, 1.0);
    assert_eq!(b0.regime, Regime::Base);
    let b1 = lipschitz_bound(&path, 1.0).unwrap();
    assert_eq!(b1.value, path.smoothness().unwrap().l_pi);
    assert_eq!(b1.regime, Regime::Target);
    let heavy = heavy_path();
    assert_relative_eq!(lipschitz_bound(&heavy, 0.0).unwrap().value, 1.25);
}

#[test]
fn heavy_lipschitz_bound_at_half() {
    let path = heavy_path();
    let b = lipschitz_bound_at_lambda(&path, 0.5).unwrap();
    // noise branch 1.25/0.5 + 25/(8·0.5) and the target branch (1.25 + 25/8)/0.5 coincide here
    assert_relative_eq!(b.value, 8.75, max_relative = 1e-12);
    let wide = DiffusionPath::new(Base::student_t(1.0, 4.0).unwrap(), t1(4.0, 0.2), cosine()).unwrap();
    let b = lipschitz_bound_at_lambda(&wide, 0.5).unwrap();
    assert_relative_eq!(b.value, 8.75, max_relative = 1e-12);
    assert_eq!(b.regime, Regime::UpperNoise);
}

#[test]
fn strongly_log_concave_target_gives_exact_gaussian_constant() {
    // π = N(0, 1), ν = N(0, 1): μ_t = N(0, 1) and the bound is tight
    let path = DiffusionPath::new(Base::gaussian(1.0).unwrap(), gauss1(0.0, 1.0), cosine()).unwrap();
    for &lam in &[0.1, 0.5, 0.9] {
        let b = lipschitz_bound_at_lambda(&path, lam).unwrap();
        assert!(b.value >= 1.0 - 1e-12, "{lam}: {}", b.value);
        assert!(b.value.is_finite());
    }
}

#[test]
fn lipschitz_bound_dominates_marginal_hessians() {
    let path = DiffusionPath::new(Base::gaussian(1.0).unwrap(), bimodal(), cosine()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..20 {
        let t = k as f64 / 19.0;
        let bound = lipschitz_bound(&path, t).unwrap().value;
        let m = path.at(t).unwrap();
        let mut sup: f64 = 0.0;
        for _ in 0..1000 {
            let x = path.sample_marginal(m.lambda(), &mut rng);
            let h = m.evaluate(&x, ScoreMethod::Auto, &mut rng).unwrap().hessian;
            sup = sup.max(spectral_norm_sym(&h));
        }
        assert!(sup <= bound * (1.0 + 1e-9), "t={t}: {sup} > {bound}");
    }
}

fn separated_2d() -> Target {
    GaussianMixture::new(vec![
        (0.5, DVector::from_vec(vec![-2.0, 0.0]), DMatrix::identity(2, 2)),
        (0.5, DVector::from_vec(vec![2.0, 0.0]), DMatrix::identity(2, 2)),
    ])
    .unwrap()
    .into()
}

#[test]
fn mixture_spread_bound_is_exact_at_the_endpoints() {
    let path = DiffusionPath::new(Base::gaussian(1.0).unwrap(), separated_2d(), cosine()).unwrap();
    // -∇²log π at the origin is I - diag(4, 0), so L_π = 3.
    let near_one = lipschitz_bound_at_lambda(&path, 1.0 - 1e-12).unwrap();
    assert_eq!(near_one.regime, Regime::MixtureSpread);
    assert_relative_eq!(near_one.value, 3.0, max_relative = 1e-9);
    let near_zero = lipschitz_bound_at_lambda(&path, 1e-12).unwrap();
    assert_relative_eq!(near_zero.value, 1.0, max_relative = 1e-9);
}

#[test]
fn separated_mixture_bound_is_finite_and_dominates_hessians() {
    let path = DiffusionPath::new(Base::gaussian(1.0).unwrap(), separated_2d(), cosine()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for k in 0..20 {
        let t = k as f64 / 19.0;
        let bound = lipschitz_bound(&path, t).unwrap().value;
        assert!(bound.is_finite(), "t={t}");
        let m = path.at(t).unwrap();
        let mut sup: f64 = 0.0;
        for _ in 0..500 {
            let x = path.sample_marginal(m.lambda(), &mut rng);
            let h = m.evaluate(&x, ScoreMethod::Auto, &mut rng).unwrap().hessian;
            sup = sup.max(spectral_norm_sym(&h));
        }
        let origin = m.evaluate(&DVector::zeros(2), ScoreMethod::Auto, &mut rng).unwrap().hessian;
        sup = sup.max(spectral_norm_sym(&origin));
        assert!(sup <= bound * (1.0 + 1e-9), "t={t}: {sup} > {bound}");
    }
}

#[test]
fn lipschitz_profile_maximum() {
    let path = heavy_path();
    let p = LipschitzProfile::uniform(&path, 21).unwrap();
    let max = p.bounds.iter().map(|b| b.value).fold(0.0, f64::max);
    assert_eq!(p.l_max, max);
    assert!(p.bounds.iter().all(|b| b.value > 0.0 && b.value.is_finite()));
    assert_eq!(p.at(0.0), p.bounds[0].value);
}

#[test]
fn action_bound_examples() {
    let path = DiffusionPath::new(Base::gaussian(1.0).unwrap(), gauss1(0.0, 1.0), cosine()).unwrap();
    let b = action_bound(&path).unwrap();
    assert_eq!(b.condition, Condition::SqrtRatio);
    assert_relative_eq!(b.value, std::f64::consts::PI.powi(2) / 4.0, max_relative = 1e-9);

    let heavy = DiffusionPath::new(Base::student_t(1.0, 4.0).unwrap(), gauss1(0.0, 1.0), cosine()).unwrap();
    let b = action_bound(&heavy).unwrap();
    assert_relative_eq!(b.value, std::f64::consts::PI.powi(2) * 3.0 / 8.0, max_relative = 1e-9);
    assert_relative_eq!(b.value, 3.701, max_relative = 1e-3);
}

#[test]
fn action_bound_takes_the_smaller_candidate() {
    let path = DiffusionPath::new(
        Base::gaussian(1.0).unwrap(),
        gauss1(0.0, 1.0),
        Schedule::ou(1.0).unwrap(),
    )
    .unwrap();
    let b = action_bound(&path).unwrap();
    assert_eq!(b.condition, Condition::LogDerivative);
    assert_relative_eq!(b.value, 4.0, max_relative = 1e-9);
    let heavy = DiffusionPath::new(
        Base::student_t(1.0, 4.0).unwrap(),
        gauss1(0.0, 1.0),
        Schedule::ou(1.0).unwrap(),
    )
    .unwrap();
    assert!(matches!(action_bound(&heavy), Err(Error::InfiniteScheduleConstant(_))));
}

#[test]
fn gaussian_action_matches_analytic_integral() {
    let path = DiffusionPath::new(Base::gaussian(1.0).unwrap(), gauss1(3.0, 4.0), cosine()).unwrap();
    let est = action_estimate(&path, 400, 0, 0).unwrap();
    assert_eq!(est.method, ActionMethod::GaussianExact);
    let pi = std::f64::consts::PI;
    let speed2 = |t: f64| {
        let lam = (pi * t / 2.0).sin().powi(2);
        let dlam = pi / 2.0 * (pi * t).sin();
        let dm = 3.0 * pi / 2.0 * (pi * t / 2.0).cos();
        let s = (1.0 + 3.0 * lam).sqrt();
        let ds = 3.0 * dlam / (2.0 * s);
        dm * dm + ds * ds
    };
    let exact = simpson(speed2, 0.0, 1.0, 2000);
    assert_relative_eq!(est.value, exact, max_relative = 0.01);
    assert!(est.value <= action_bound(&path).unwrap().value);
}

#[test]
fn constant_path_has_zero_action() {
    let path = DiffusionPath::new(
        Base::gaussian(1.0).unwrap(),
        gauss1(0.0, 1.0),
        Schedule::constant(1.0).unwrap(),
    )
    .unwrap();
    assert_eq!(action_estimate(&path, 100, 0, 0).unwrap().value, 0.0);
    let heavy = DiffusionPath::new(
        Base::student_t(1.0, 4.0).unwrap(),
        t1(4.0, 1.0),
        Schedule::constant(1.0).unwrap(),
    )
    .unwrap();
    assert_eq!(action_estimate(&heavy, 100, 1000, 0).unwrap().value, 0.0);
}

#[test]
fn quantile_coupling_estimate_is_bounded() {
    let target = gauss1(3.0, 4.0);
    let path = DiffusionPath::new(Base::gaussian(1.0).unwrap(), target, cosine()).unwrap();
    let exact = action_estimate(&path, 200, 0, 0).unwrap().value;
    // same target through a Student's t base: no closed form, so samples are coupled
    let heavy = DiffusionPath::new(Base::student_t(1.0, 4.0).unwrap(), gauss1(3.0, 4.0), cosine()).unwrap();
    let est = action_estimate(&heavy, 200, 20_000, 1).unwrap();
    assert_eq!(est.method, ActionMethod::QuantileCoupling);
    assert!(est.value <= action_bound(&heavy).unwrap().value);
    assert!(est.value > 0.5 * exact);
}

#[test]
fn action_estimate_rejects_coarse_input() {
    let path = heavy_path();
    assert!(action_estimate(&path, 99, 100, 0).is_err());
}
