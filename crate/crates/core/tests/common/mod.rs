#![allow(dead_code)]

use mrp_core::LagMoments;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| gauss(rng))
}

pub fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, n, n);
    (&a + a.transpose()) * 0.5
}

pub fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, n, n);
    &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.2
}

/// Largest eigenvalue magnitude of a symmetric matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(0.0f64, |a, e| a.max(e.abs()))
}

/// Random `M0` and lag matrices whose whitened versions have spectral norm below
/// one, so `M0` dominates every lag.
pub fn random_moments(rng: &mut ChaCha8Rng, n: usize, p: usize) -> LagMoments<f64> {
    let m0 = random_pd(rng, n);
    let l = m0.clone().cholesky().unwrap().l();
    let mut mats = vec![m0];
    for _ in 0..p {
        let s = random_sym(rng, n);
        let scale = rng.random_range(0.2..0.9) / spectral_norm(&s);
        mats.push(&l * (s * scale) * l.transpose());
    }
    LagMoments::from_matrices(mats, 250).unwrap()
}

/// `1 / (1' M0^{-1} 1)`, computed by explicit inversion.
pub fn min_variance(m0: &DMatrix<f64>) -> f64 {
    let n = m0.nrows();
    let ones = DVector::from_element(n, 1.0);
    1.0 / ones.dot(&(m0.clone().try_inverse().unwrap() * &ones))
}

pub fn raw_objective(w: &DVector<f64>, m: &LagMoments<f64>) -> f64 {
    m.lags().iter().map(|mi| w.dot(&(mi * w)).powi(2)).sum()
}

/// The two feasible points of an `N = 2` instance in closed form:
/// `w = (a, 1 - a)` with `w' M0 w = nu` is a scalar quadratic in `a`.
pub fn two_point_feasible(m0: &DMatrix<f64>, nu: f64) -> Vec<DVector<f64>> {
    let (s11, s12, s22) = (m0[(0, 0)], m0[(0, 1)], m0[(1, 1)]);
    // a^2 s11 + 2 a (1-a) s12 + (1-a)^2 s22 = nu
    let qa = s11 - 2.0 * s12 + s22;
    let qb = 2.0 * s12 - 2.0 * s22;
    let qc = s22 - nu;
    let disc = qb * qb - 4.0 * qa * qc;
    assert!(disc >= 0.0, "infeasible two-point instance");
    let r = disc.sqrt();
    [(-qb + r) / (2.0 * qa), (-qb - r) / (2.0 * qa)]
        .iter()
        .map(|&a| DVector::from_vec(vec![a, 1.0 - a]))
        .collect()
}

/// Minimum-variance point on the budget hyperplane and its variance.
pub fn min_variance_point(m0: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let n = m0.nrows();
    let inv = m0.clone().try_inverse().unwrap();
    let ones = DVector::from_element(n, 1.0);
    let w_mv = &inv * &ones / ones.dot(&(&inv * &ones));
    let nu_min = w_mv.dot(&(m0 * &w_mv));
    (w_mv, nu_min)
}

/// Feasible point `w_mv + s d` for a direction `d` with `1' d = 0`, with `s`
/// chosen so that `w' M0 w = nu` exactly. The cross term vanishes because
/// `M0 w_mv` is parallel to `1`.
pub fn feasible_along(m0: &DMatrix<f64>, nu: f64, d: &DVector<f64>) -> DVector<f64> {
    let (w_mv, nu_min) = min_variance_point(m0);
    let s = ((nu - nu_min) / d.dot(&(m0 * d))).sqrt();
    w_mv + d * s
}

/// Random feasible point: a Gaussian direction projected onto `1' d = 0`.
pub fn random_feasible(rng: &mut ChaCha8Rng, m0: &DMatrix<f64>, nu: f64) -> DVector<f64> {
    let n = m0.nrows();
    let mut d = DVector::from_fn(n, |_, _| gauss(rng));
    let mean = d.sum() / n as f64;
    d.add_scalar_mut(-mean);
    feasible_along(m0, nu, &d)
}

/// Dense grid over the one-dimensional feasible ellipse of an `N = 3` instance,
/// parametrized by the angle of `d = cos t e1 + sin t e2` with `e1, e2`
/// spanning `1' d = 0`.
pub fn ellipse_grid_min(m: &LagMoments<f64>, nu: f64, points: usize) -> f64 {
    let e1 = DVector::from_vec(vec![1.0, -1.0, 0.0]);
    let e2 = DVector::from_vec(vec![1.0, 1.0, -2.0]);
    let mut best = f64::INFINITY;
    for k in 0..points {
        let t = 2.0 * std::f64::consts::PI * k as f64 / points as f64;
        let d = &e1 * t.cos() + &e2 * t.sin();
        best = best.min(raw_objective(&feasible_along(m.m0(), nu, &d), m));
    }
    best
}
