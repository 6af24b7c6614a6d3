//! Generalized trust region subproblem:
//!
//! ```text
//! minimize    x' N x + 2 p' x + b
//! subject to  x' N0 x + 2 p0' x + b0 = nu
//! ```
//!
//! with `N` symmetric (possibly indefinite) and `N0` symmetric positive
//! definite. The global minimizer satisfies
//! `(N + xi N0) x = -(p + xi p0)` with `N + xi N0 >= 0`, and `xi` is the root
//! of the strictly decreasing secular function
//! `phi(xi) = x(xi)' N0 x(xi) + 2 p0' x(xi) + b0 - nu` on
//! `(-lambda_min(N, N0), inf)`, which is located by bracketing and bisection.

use nalgebra::{DMatrix, DVector};

use crate::error::{MrpError, Result};
use crate::linalg::{cholesky, congruence_inv, quad_form, sym_eig_extremes, sym_eigen_sorted};
use crate::scalar::Scalar;

pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_DOUBLINGS: usize = 200;
const MAX_BISECTIONS: usize = 1_000_000;
const SHIFT_REL: f64 = 1e-10;
/// Finer interior offsets tried when `phi` is already negative at the first offset.
const SHIFT_REFINEMENTS: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct GtrsProblem<T: Scalar> {
    pub n: DMatrix<T>,
    pub p: DVector<T>,
    pub b: T,
    pub n0: DMatrix<T>,
    pub p0: DVector<T>,
    pub b0: T,
    pub nu: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtrsSolution<T: Scalar> {
    pub x: DVector<T>,
    pub xi: T,
    pub value: T,
    pub phi_residual: T,
}

impl<T: Scalar> GtrsProblem<T> {
    /// Validates shapes, symmetry, positive definiteness of `N0` and nonemptiness of the
    /// constraint set.
    pub fn new(
        n: DMatrix<T>,
        p: DVector<T>,
        b: T,
        n0: DMatrix<T>,
        p0: DVector<T>,
        b0: T,
        nu: T,
    ) -> Result<Self> {
        let prob = Self {
            n,
            p,
            b,
            n0,
            p0,
            b0,
            nu,
        };
        prob.validate()?;
        Ok(prob)
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.dim();
        if self.n.shape() != (k, k) || self.n0.shape() != (k, k) || self.p0.len() != k {
            return Err(MrpError::Dimension(format!(
                "GTRS blocks disagree: N {:?}, N0 {:?}, p {}, p0 {}",
                self.n.shape(),
                self.n0.shape(),
                k,
                self.p0.len()
            )));
        }
        if !(self.nu > T::zero()) {
            return Err(MrpError::Invalid(format!(
                "nu = {} must be positive",
                self.nu
            )));
        }
        for (name, m) in [("N", &self.n), ("N0", &self.n0)] {
            let skew = (m - m.transpose()).norm();
            if skew > T::lit(1e-12) * m.norm().max(T::one()) {
                return Err(MrpError::Invalid(format!("{name} is not symmetric")));
            }
        }
        let floor = self.constraint_floor()?;
        if floor > self.nu {
            return Err(MrpError::Infeasible {
                nu: self.nu.as_f64(),
                nu_min: floor.as_f64(),
            });
        }
        Ok(())
    }

    /// `min_x x' N0 x + 2 p0' x + b0 = b0 - p0' N0^{-1} p0`.
    pub fn constraint_floor(&self) -> Result<T> {
        let chol = cholesky(&self.n0).ok_or_else(|| MrpError::NotPositiveDefinite("N0".into()))?;
        let y = chol.solve(&self.p0);
        Ok(self.b0 - self.p0.dot(&y))
    }

    pub fn objective(&self, x: &DVector<T>) -> T {
        quad_form(&self.n, x) + T::lit(2.0) * self.p.dot(x) + self.b
    }

    /// Constraint value `x' N0 x + 2 p0' x + b0` (to be compared with `nu`).
    pub fn constraint(&self, x: &DVector<T>) -> T {
        quad_form(&self.n0, x) + T::lit(2.0) * self.p0.dot(x) + self.b0
    }

    /// `x(xi) = -(N + xi N0)^{-1} (p + xi p0)`.
    pub fn primal(&self, xi: T) -> Result<DVector<T>> {
        let shifted = &self.n + &self.n0 * xi;
        let chol = cholesky(&shifted)
            .ok_or_else(|| MrpError::NotPositiveDefinite(format!("N + xi N0 at xi = {xi}")))?;
        let rhs = &self.p + &self.p0 * xi;
        Ok(-chol.solve(&rhs))
    }

    /// Stationarity residual `||(N + xi N0) x + p + xi p0||`.
    pub fn stationarity(&self, x: &DVector<T>, xi: T) -> T {
        ((&self.n + &self.n0 * xi) * x + &self.p + &self.p0 * xi).norm()
    }
}

/// Smallest `lambda` with `det(A - lambda B) = 0` for symmetric `A` and SPD `B`.
pub fn min_gen_eig<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<T> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(MrpError::Dimension(format!(
            "pencil shapes {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let chol = cholesky(b).ok_or_else(|| MrpError::NotPositiveDefinite("B".into()))?;
    let reduced = congruence_inv(&chol.l(), a);
    Ok(sym_eig_extremes(&reduced).0)
}

/// Secular function `phi(xi)`, defined where `N + xi N0` is positive definite.
pub fn phi<T: Scalar>(xi: T, prob: &GtrsProblem<T>) -> Result<T> {
    let x = prob.primal(xi)?;
    Ok(prob.constraint(&x) - prob.nu)
}

pub fn solve_gtrs<T: Scalar>(prob: &GtrsProblem<T>, tol: T) -> Result<GtrsSolution<T>> {
    prob.validate()?;
    let chol0 = cholesky(&prob.n0).ok_or_else(|| MrpError::NotPositiveDefinite("N0".into()))?;
    let l0 = chol0.l();
    let pencil = congruence_inv(&l0, &prob.n);
    let (eigs, vecs) = sym_eigen_sorted(&pencil);
    let sec = Secular::new(prob, &l0, &eigs, &vecs);
    let lambda_min = eigs[0];
    let spread = eigs.iter().fold(T::zero(), |acc, e| acc.max(e.abs()));
    let boundary = -lambda_min;
    let shift_unit = if spread > T::zero() { spread } else { T::one() };
    let target = tol * prob.nu.max(T::one());

    let finish = |xi: T, x: DVector<T>| -> GtrsSolution<T> {
        let resid = (prob.constraint(&x) - prob.nu).abs();
        GtrsSolution {
            value: prob.objective(&x),
            xi,
            x,
            phi_residual: resid,
        }
    };

    // Lower bracket: first interior point where the shifted matrix factors.
    let mut shift = T::lit(SHIFT_REL) * shift_unit;
    let mut lo = boundary + shift;
    let mut phi_lo = loop {
        match sec.eval(lo) {
            Ok(v) => break v,
            Err(_) if shift < shift_unit => {
                shift *= T::lit(10.0);
                lo = boundary + shift;
            }
            Err(e) => return Err(e),
        }
    };
    if phi_lo.abs() <= target {
        return Ok(finish(lo, sec.primal(lo)?));
    }

    if phi_lo < T::zero() {
        // The root, if any, sits closer to the boundary than the first offset.
        let mut hi = lo;
        let mut found = false;
        let mut fine = shift;
        for _ in 0..SHIFT_REFINEMENTS {
            fine *= T::lit(0.25);
            let cand = boundary + fine;
            if cand <= boundary || cand >= hi {
                break;
            }
            match sec.eval(cand) {
                Ok(v) if v.abs() <= target => return Ok(finish(cand, sec.primal(cand)?)),
                Ok(v) if v > T::zero() => {
                    lo = cand;
                    phi_lo = v;
                    found = true;
                    break;
                }
                Ok(_) => hi = cand,
                Err(_) => break,
            }
        }
        if !found {
            return hard_case(prob, &l0, &eigs, &vecs, spread, target).map(|(xi, x)| finish(xi, x));
        }
        debug_assert!(phi_lo > T::zero());
        let (xi, x) = bisect(&sec, lo, hi, target)?;
        return Ok(finish(xi, x));
    }

    // Upper bracket by doubling the distance from the lower one.
    let mut step = T::one().max(lo.abs());
    let mut hi = lo + step;
    let mut doublings = 0;
    loop {
        let v = sec.eval(hi)?;
        if v.abs() <= target {
            return Ok(finish(hi, sec.primal(hi)?));
        }
        if v < T::zero() {
            break;
        }
        lo = hi;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(MrpError::Numerical(format!(
                "no sign change of phi after {MAX_DOUBLINGS} doublings (xi = {hi})"
            )));
        }
        step *= T::lit(2.0);
        hi = lo + step;
    }
    let (xi, x) = bisect(&sec, lo, hi, target)?;
    Ok(finish(xi, x))
}

/// Bisection on `[lo, hi]` with `phi(lo) > 0 > phi(hi)`.
fn bisect<T: Scalar>(
    sec: &Secular<'_, T>,
    mut lo: T,
    mut hi: T,
    target: T,
) -> Result<(T, DVector<T>)> {
    let half = T::lit(0.5);
    let mut best: Option<(T, T)> = None;
    for _ in 0..MAX_BISECTIONS {
        let mid = lo + (hi - lo) * half;
        if mid <= lo || mid >= hi {
            break;
        }
        let v = sec.eval(mid)?;
        if best.is_none_or(|(_, b)| v.abs() < b) {
            best = Some((mid, v.abs()));
        }
        if v.abs() <= target {
            break;
        }
        if v > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut candidates = vec![(lo, sec.eval(lo)?.abs()), (hi, sec.eval(hi)?.abs())];
    candidates.extend(best);
    let (xi, _) = candidates
        .into_iter()
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        .expect("non-empty");
    Ok((xi, sec.primal(xi)?))
}

/// `phi` and the primal point in the eigenbasis of the whitened pencil. There
/// `N + xi N0` is diagonal, so each evaluation costs `O(n)` instead of a fresh
/// factorization.
struct Secular<'a, T: Scalar> {
    prob: &'a GtrsProblem<T>,
    l0: &'a DMatrix<T>,
    eigs: &'a DVector<T>,
    vecs: &'a DMatrix<T>,
    /// `p` and `p0` in eigen coordinates.
    a: DVector<T>,
    b: DVector<T>,
}

impl<'a, T: Scalar> Secular<'a, T> {
    fn new(
        prob: &'a GtrsProblem<T>,
        l0: &'a DMatrix<T>,
        eigs: &'a DVector<T>,
        vecs: &'a DMatrix<T>,
    ) -> Self {
        let whiten = |v: &DVector<T>| {
            let w = l0
                .solve_lower_triangular(v)
                .expect("Cholesky factor has nonzero diagonal");
            vecs.tr_mul(&w)
        };
        Self {
            a: whiten(&prob.p),
            b: whiten(&prob.p0),
            prob,
            l0,
            eigs,
            vecs,
        }
    }

    fn coords(&self, xi: T) -> Result<DVector<T>> {
        let mut z = DVector::zeros(self.eigs.len());
        for j in 0..z.len() {
            let d = self.eigs[j] + xi;
            if !(d > T::zero()) {
                return Err(MrpError::NotPositiveDefinite(format!(
                    "N + xi N0 at xi = {xi}"
                )));
            }
            z[j] = -(self.a[j] + self.b[j] * xi) / d;
        }
        Ok(z)
    }

    fn eval(&self, xi: T) -> Result<T> {
        let z = self.coords(xi)?;
        let two = T::lit(2.0);
        let c = z
            .iter()
            .zip(self.b.iter())
            .fold(T::zero(), |acc, (&zj, &bj)| acc + zj * (zj + two * bj));
        Ok(c + self.prob.b0 - self.prob.nu)
    }

    fn primal(&self, xi: T) -> Result<DVector<T>> {
        let y = self.vecs * self.coords(xi)?;
        Ok(self
            .l0
            .transpose()
            .solve_upper_triangular(&y)
            .expect("Cholesky factor has nonzero diagonal"))
    }
}

/// Boundary solution at `xi = -lambda_min`, valid only when the linear term has no
/// component along the null directions of `N + xi N0`.
fn hard_case<T: Scalar>(
    prob: &GtrsProblem<T>,
    l0: &DMatrix<T>,
    eigs: &DVector<T>,
    vecs: &DMatrix<T>,
    spread: T,
    target: T,
) -> Result<(T, DVector<T>)> {
    let lambda_min = eigs[0];
    let xi = -lambda_min;
    let solve_l = |v: &DVector<T>| {
        l0.solve_lower_triangular(v)
            .expect("Cholesky factor has nonzero diagonal")
    };
    let p_t = solve_l(&prob.p);
    let p0_t = solve_l(&prob.p0);
    let g = &p_t + &p0_t * xi;
    let gap = T::lit(1e-8) * spread.max(T::one());
    let k = eigs.len();

    let mut y = DVector::zeros(k);
    let mut null_component = T::zero();
    for j in 0..k {
        let v = vecs.column(j);
        let coef = v.dot(&g);
        let d = eigs[j] - lambda_min;
        if d <= gap {
            null_component += coef * coef;
        } else {
            y -= v * (coef / d);
        }
    }
    let null_component = null_component.sqrt();
    if null_component > T::lit(1e-8) * (T::one() + g.norm()) {
        return Err(MrpError::HardCase(format!(
            "phi < 0 at the interval edge and the linear term has a null-space component {null_component}"
        )));
    }

    // In whitened coordinates the constraint is ||y||^2 + 2 p0_t' y + b0 = nu.
    let v = vecs.column(0).into_owned();
    let base = y.norm_squared() + T::lit(2.0) * p0_t.dot(&y) + prob.b0 - prob.nu;
    let half_b = v.dot(&y) + p0_t.dot(&v);
    let disc = half_b * half_b - base;
    if disc < T::zero() {
        return Err(MrpError::HardCase(format!(
            "boundary construction infeasible (discriminant {disc})"
        )));
    }
    let t = -half_b + disc.sqrt();
    let y = y + v * t;
    let x = l0
        .transpose()
        .solve_upper_triangular(&y)
        .expect("Cholesky factor has nonzero diagonal");
    let resid = (prob.constraint(&x) - prob.nu).abs();
    if resid > target.max(T::lit(1e-9) * prob.nu.max(T::one())) {
        return Err(MrpError::HardCase(format!(
            "boundary construction misses the constraint by {resid}"
        )));
    }
    Ok((xi, x))
}
