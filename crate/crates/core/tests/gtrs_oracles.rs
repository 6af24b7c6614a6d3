mod common;

use common::*;
use mrp_core::{min_gen_eig, phi, solve_gtrs, GtrsProblem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random problem with an indefinite `N` (mixed-sign spectrum) and a nonempty
/// constraint set.
fn random_problem(rng: &mut ChaCha8Rng, n: usize) -> GtrsProblem<f64> {
    let q = random_matrix(rng, n, n).qr().q();
    let mut spec: Vec<f64> = (0..n).map(|_| gauss(rng) * 2.0).collect();
    spec[0] = -spec[0].abs() - 0.1;
    spec[n - 1] = spec[n - 1].abs() + 0.1;
    let nmat = &q * DMatrix::from_diagonal(&DVector::from_vec(spec)) * q.transpose();
    let nmat = (&nmat + nmat.transpose()) * 0.5;
    let p = DVector::from_fn(n, |_, _| gauss(rng));
    let n0 = random_pd(rng, n);
    let p0 = DVector::from_fn(n, |_, _| gauss(rng) * 0.5);
    let nu = rng.random_range(0.5..3.0);
    // Pick b0 so the constraint floor b0 - p0' N0^{-1} p0 sits below nu.
    let gap = rng.random_range(0.1..3.0);
    let b0 = nu - gap + p0.dot(&n0.clone().cholesky().unwrap().solve(&p0));
    GtrsProblem::new(nmat, p, gauss(rng), n0, p0, b0, nu).unwrap()
}

/// Smallest generalized eigenvalue by bisection on the sign pattern of
/// `det(A - lambda B)`: the number of eigenvalues below `lambda` equals the
/// number of negative pivots of `A - lambda B` (Sylvester's law of inertia).
fn min_gen_eig_by_inertia(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let negatives_below = |lambda: f64| {
        let mut m = a - b * lambda;
        let n = m.nrows();
        let mut neg = 0;
        for k in 0..n {
            let piv = m[(k, k)];
            if piv < 0.0 {
                neg += 1;
            }
            for i in k + 1..n {
                let f = m[(i, k)] / piv;
                for j in k..n {
                    m[(i, j)] -= f * m[(k, j)];
                }
            }
        }
        neg
    };
    let (mut lo, mut hi) = (-1e3, 1e3);
    assert_eq!(negatives_below(lo), 0);
    assert!(negatives_below(hi) > 0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if negatives_below(mid) > 0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn smallest_pencil_eigenvalue_matches_inertia_count() {
    let mut r = rng(7);
    for _ in 0..20 {
        let a = random_sym(&mut r, 4);
        let b = random_pd(&mut r, 4);
        let got = min_gen_eig(&a, &b).unwrap();
        let want = min_gen_eig_by_inertia(&a, &b);
        assert!(
            (got - want).abs() <= 1e-9 * (1.0 + want.abs()),
            "{got} vs {want}"
        );
    }
}

#[test]
fn secular_function_decreases_on_the_interval() {
    let mut r = rng(11);
    for _ in 0..40 {
        let n = r.random_range(2..=6);
        let prob = random_problem(&mut r, n);
        let lo = -min_gen_eig(&prob.n, &prob.n0).unwrap();
        for _ in 0..50 {
            let a = lo + 1e-6 + r.random_range(0.0..20.0f64);
            let b = lo + 1e-6 + r.random_range(0.0..20.0f64);
            let (x1, x2) = if a < b { (a, b) } else { (b, a) };
            if x2 - x1 < 1e-9 {
                continue;
            }
            assert!(phi(x1, &prob).unwrap() > phi(x2, &prob).unwrap());
        }
    }
}

#[test]
fn dual_conditions_hold_on_random_instances() {
    let mut r = rng(12);
    for _ in 0..200 {
        let n = r.random_range(2..=6);
        let prob = random_problem(&mut r, n);
        let sol = solve_gtrs(&prob, 1e-10).unwrap();
        let stat = prob.stationarity(&sol.x, sol.xi);
        assert!(stat <= 1e-8 * (1.0 + prob.p.norm()), "stationarity {stat}");
        let con = (prob.constraint(&sol.x) - prob.nu).abs();
        assert!(con <= 1e-10 * prob.nu.max(1.0), "constraint {con}");
        let shifted = &prob.n + &prob.n0 * sol.xi;
        let min_eig = shifted.symmetric_eigen().eigenvalues.min();
        assert!(
            min_eig >= -1e-8 * spectral_norm(&prob.n),
            "dual PSD {min_eig}"
        );
    }
}

#[test]
fn planar_instances_match_a_dense_ellipse_grid() {
    let mut r = rng(13);
    let points = 1_000_000;
    for _ in 0..5 {
        let prob = random_problem(&mut r, 2);
        let sol = solve_gtrs(&prob, 1e-10).unwrap();
        // Constraint ellipse: center c = -N0^{-1} p0, (x-c)' N0 (x-c) = nu - floor.
        let chol = prob.n0.clone().cholesky().unwrap();
        let c = -chol.solve(&prob.p0);
        let rad = prob.nu - (prob.b0 + prob.p0.dot(&c));
        let l = chol.l();
        let lt_inv = l.transpose().try_inverse().unwrap();
        let mut best = f64::INFINITY;
        for k in 0..points {
            let t = 2.0 * std::f64::consts::PI * k as f64 / points as f64;
            let u = DVector::from_vec(vec![t.cos(), t.sin()]) * rad.sqrt();
            let x = &c + &lt_inv * u;
            best = best.min(prob.objective(&x));
        }
        assert!(
            sol.value <= best + 1e-6 * (1.0 + best.abs()),
            "{} vs {best}",
            sol.value
        );
    }
}
