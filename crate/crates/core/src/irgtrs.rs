//! Majorization-minimization outer loop for the mean-reverting portfolio problem
//!
//! ```text
//! minimize    sum_i (w' M_i w)^2
//! subject to  w' M0 w = nu,  1' w = 1
//! ```
//!
//! Each iteration replaces the quartic objective by a quadratic majorizer
//! `w' H w` (up to constants), removes the budget constraint through
//! `w = w0 + F x` and solves the resulting GTRS exactly.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{MrpError, Result};
use crate::gtrs::{solve_gtrs, GtrsProblem};
use crate::linalg::{cholesky, quad_form, sym_eigen_sorted, symmetrize};
use crate::moments::{lag_objective, psi_bound, whiten, LagMoments, PsiMode};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct MrpConfig<T: Scalar> {
    /// Lag order of the portmanteau objective.
    pub p: usize,
    /// Variance level enforced on the portfolio spread.
    pub nu: T,
    pub psi_mode: PsiMode,
    /// Stop when the relative objective decrease falls to this level.
    pub tol_obj: T,
    /// Stop when `||w_new - w|| / max(1, ||w||)` falls to this level.
    pub tol_w: T,
    /// Either stopping test above only counts once the projected-gradient
    /// residual (see [`kkt_residual`]) is at most this. With a loose `psi` the
    /// MM steps get short well before the iterate is stationary.
    pub tol_kkt: T,
    pub max_iter: usize,
    pub gtrs_tol: T,
    /// Squared-extrapolation acceleration of the MM map. Each iteration then
    /// applies the map three times and keeps the extrapolated point only if it
    /// does not increase the objective. `false` runs the plain iteration.
    pub accelerate: bool,
    /// Number of deterministic starting points; the best final objective wins.
    /// `None` runs all `2 (N - 1)^2` axis and diagonal starts.
    pub starts: Option<usize>,
}

impl<T: Scalar> MrpConfig<T> {
    pub fn new(p: usize, nu: T) -> Self {
        Self {
            p,
            nu,
            psi_mode: PsiMode::Spectral,
            tol_obj: T::lit(1e-9),
            tol_w: T::lit(1e-8),
            tol_kkt: T::lit(1e-6),
            max_iter: 1000,
            gtrs_tol: T::lit(crate::gtrs::DEFAULT_TOL),
            accelerate: true,
            starts: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(MrpError::Invalid(msg.to_owned()));
        if !(self.nu > T::zero()) {
            return bad("nu must be positive");
        }
        if self.p < 1 {
            return bad("lag order p must be at least 1");
        }
        if !(self.tol_obj > T::zero()
            && self.tol_w > T::zero()
            && self.tol_kkt > T::zero()
            && self.gtrs_tol > T::zero())
        {
            return bad("tolerances must be positive");
        }
        if self.max_iter < 1 {
            return bad("max_iter must be at least 1");
        }
        if self.starts == Some(0) {
            return bad("starts must be at least 1");
        }
        Ok(())
    }
}

/// Affine parametrization `w = w0 + F x` of the hyperplane `a' w = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineReduction<T: Scalar> {
    pub w0: DVector<T>,
    /// Orthonormal basis of the kernel of `a'`, shape `N x (N-1)`.
    pub f: DMatrix<T>,
}

impl<T: Scalar> AffineReduction<T> {
    pub fn lift(&self, x: &DVector<T>) -> DVector<T> {
        &self.w0 + &self.f * x
    }
}

#[derive(Debug, Clone)]
pub struct MrpResult<T: Scalar> {
    pub w: DVector<T>,
    /// Raw objective `sum_i (w' M_i w)^2` after each MM iteration.
    pub objective_trace: Vec<T>,
    /// Raw objective at the starting point.
    pub initial_objective: T,
    /// `iterates[0]` is the start, `iterates[k]` the point after iteration `k`.
    pub iterates: Vec<DVector<T>>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: T,
    pub psi: T,
    /// Index of the starting point that produced `w`.
    pub start_index: usize,
}

impl<T: Scalar> MrpResult<T> {
    pub fn objective(&self) -> T {
        *self
            .objective_trace
            .last()
            .unwrap_or(&self.initial_objective)
    }
}

/// `w0 = 1/N`, `F` an orthonormal basis of `{v : 1' v = 0}`.
pub fn affine_reduction<T: Scalar>(n: usize) -> Result<AffineReduction<T>> {
    if n < 2 {
        return Err(MrpError::Invalid(format!(
            "need at least 2 spreads, got {n}"
        )));
    }
    affine_reduction_for(&DVector::from_element(n, T::one()))
}

/// Reduction for a general budget vector `a`: `w0 = a / (a' a)` and `F` built by
/// Gram-Schmidt on the columns `2..N` of the projector `I - a a' / (a' a)`.
pub fn affine_reduction_for<T: Scalar>(a: &DVector<T>) -> Result<AffineReduction<T>> {
    let n = a.len();
    let aa = a.norm_squared();
    if n < 2 || !(aa > T::zero()) {
        return Err(MrpError::Invalid(
            "budget vector must be nonzero with N >= 2".into(),
        ));
    }
    let w0 = a / aa;
    let proj = DMatrix::identity(n, n) - (a * a.transpose()) / aa;

    // The column with the largest budget weight is the one dropped; for a = 1 that
    // is the first column.
    let drop = a.iamax();
    let mut basis: Vec<DVector<T>> = Vec::with_capacity(n - 1);
    for j in (0..n).filter(|&j| j != drop) {
        let mut v = proj.column(j).into_owned();
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v -= q * c;
            }
            let c = a.dot(&v) / aa;
            v -= a * c;
        }
        let norm = v.norm();
        if !(norm > T::lit(1e-8)) {
            return Err(MrpError::Numerical("kernel basis lost rank".into()));
        }
        basis.push(v / norm);
    }
    let f = DMatrix::from_columns(&basis);
    Ok(AffineReduction { w0, f })
}

struct Reduced<T: Scalar> {
    n0: DMatrix<T>,
    p0: DVector<T>,
    b0: T,
}

fn reduce_quadratic<T: Scalar>(q: &DMatrix<T>, red: &AffineReduction<T>) -> Reduced<T> {
    let ft = red.f.transpose();
    Reduced {
        n0: symmetrize(&(&ft * q * &red.f)),
        p0: &ft * (q * &red.w0),
        b0: quad_form(q, &red.w0),
    }
}

/// Smallest value of `w' M0 w` on the budget hyperplane parametrized by `red`.
pub fn min_variance_level<T: Scalar>(m0: &DMatrix<T>, red: &AffineReduction<T>) -> Result<T> {
    let r = reduce_quadratic(m0, red);
    let chol = cholesky(&r.n0).ok_or_else(|| MrpError::NotPositiveDefinite("F' M0 F".into()))?;
    Ok(r.b0 - r.p0.dot(&chol.solve(&r.p0)))
}

fn min_variance_point<T: Scalar>(
    m0: &DMatrix<T>,
    red: &AffineReduction<T>,
) -> Result<(DVector<T>, T)> {
    let r = reduce_quadratic(m0, red);
    let chol = cholesky(&r.n0).ok_or_else(|| MrpError::NotPositiveDefinite("F' M0 F".into()))?;
    let x_mv = -chol.solve(&r.p0);
    let nu_min = r.b0 + r.p0.dot(&x_mv);
    Ok((red.lift(&x_mv), nu_min))
}

/// Rescales `w - w_mv` so that `w' M0 w` hits the level exactly. The subproblem
/// meets the constraint only to its bracketing tolerance, and that slack would
/// otherwise show up as objective noise of relative size ~1e-10.
fn retract<T: Scalar>(w: &DVector<T>, w_mv: &DVector<T>, m0: &DMatrix<T>, excess: T) -> DVector<T> {
    let d = w - w_mv;
    let q = quad_form(m0, &d);
    if q <= T::zero() || excess <= T::zero() {
        return w.clone();
    }
    w_mv + d * (excess / q).sqrt()
}

/// Candidate feasible starting points, all on the variance ellipsoid.
///
/// Directions are taken in the coordinates where the ellipsoid is a sphere,
/// using the eigenvectors `v_j` of `F' M0 F` (ascending eigenvalues). The first
/// `2d` starts are the axis points `+v_0, -v_0, +v_1, ...`; start `0` is the
/// smallest-eigenvalue direction. Then come the diagonals `(±e_i ± e_j) / sqrt 2`
/// for `i < j`, `2 d^2` starts in total.
fn starting_points<T: Scalar>(
    m0: &DMatrix<T>,
    nu: T,
    red: &AffineReduction<T>,
    count: usize,
) -> Result<Vec<DVector<T>>> {
    let r = reduce_quadratic(m0, red);
    let chol = cholesky(&r.n0).ok_or_else(|| MrpError::NotPositiveDefinite("F' M0 F".into()))?;
    let x_mv = -chol.solve(&r.p0);
    let nu_min = r.b0 + r.p0.dot(&x_mv);
    if nu < nu_min {
        let tiny = T::lit(1e-12) * nu_min.abs().max(T::one());
        if nu_min - nu > tiny {
            return Err(MrpError::Infeasible {
                nu: nu.as_f64(),
                nu_min: nu_min.as_f64(),
            });
        }
    }
    let excess = (nu - nu_min).max(T::zero());
    let (eigs, vecs) = sym_eigen_sorted(&r.n0);
    let d = eigs.len();
    // Column j maps unit sphere coordinate e_j onto the ellipsoid offset.
    let mut axes = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut u = vecs.column(j).into_owned();
        // Fix the eigenvector sign: largest-magnitude entry positive.
        if u[u.iamax()] < T::zero() {
            u = -u;
        }
        axes.set_column(j, &(u * (excess / eigs[j]).sqrt()));
    }

    let mut coords: Vec<Vec<(usize, T)>> = Vec::new();
    for j in 0..d {
        coords.push(vec![(j, T::one())]);
        coords.push(vec![(j, -T::one())]);
    }
    let h = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    for i in 0..d {
        for j in i + 1..d {
            for (si, sj) in [(h, h), (-h, -h), (h, -h), (-h, h)] {
                coords.push(vec![(i, si), (j, sj)]);
            }
        }
    }
    coords.truncate(count);
    Ok(coords
        .into_iter()
        .map(|c| {
            let mut x = x_mv.clone();
            for (j, s) in c {
                x += axes.column(j) * s;
            }
            red.lift(&x)
        })
        .collect())
}

/// Feasible point `w = w_mv + t F u`: the minimum-variance portfolio moved along the
/// smallest-eigenvalue direction `u` of `F' M0 F` until `w' M0 w = nu`.
pub fn feasible_init<T: Scalar>(
    moments: &LagMoments<T>,
    nu: T,
    red: &AffineReduction<T>,
) -> Result<DVector<T>> {
    if red.w0.len() != moments.dim() {
        return Err(MrpError::Dimension(format!(
            "reduction for N = {} but moments have N = {}",
            red.w0.len(),
            moments.dim()
        )));
    }
    Ok(starting_points(moments.m0(), nu, red, 1)?.remove(0))
}

/// `H = sum_i (w_k' M_i w_k) M_i - psi M0 w_k w_k' M0`, symmetrized.
pub fn build_majorizer<T: Scalar>(
    w_k: &DVector<T>,
    moments: &LagMoments<T>,
    psi: T,
) -> Result<DMatrix<T>> {
    let n = moments.dim();
    if w_k.len() != n {
        return Err(MrpError::Dimension(format!(
            "iterate length {} vs {n} spreads",
            w_k.len()
        )));
    }
    let budget = w_k.sum() - T::one();
    if budget.abs() > T::lit(1e-6) {
        warn!("majorizer built at a point off the budget hyperplane (1'w - 1 = {budget})");
    }
    Ok(majorizer(w_k, moments.m0(), moments.lags(), psi))
}

fn majorizer<T: Scalar>(
    w_k: &DVector<T>,
    m0: &DMatrix<T>,
    lags: &[DMatrix<T>],
    psi: T,
) -> DMatrix<T> {
    let n = w_k.len();
    let mut h = DMatrix::zeros(n, n);
    for m in lags {
        h += m * quad_form(m, w_k);
    }
    let g = m0 * w_k;
    h -= (&g * g.transpose()) * psi;
    symmetrize(&h)
}

/// Restricts `w' H w` and `w' M0 w = nu` to the hyperplane `w = w0 + F x`.
pub fn reduce_to_gtrs<T: Scalar>(
    h: &DMatrix<T>,
    m0: &DMatrix<T>,
    nu: T,
    red: &AffineReduction<T>,
) -> Result<GtrsProblem<T>> {
    let n = red.w0.len();
    if h.shape() != (n, n) || m0.shape() != (n, n) || red.f.shape() != (n, n - 1) {
        return Err(MrpError::Dimension(format!(
            "H {:?}, M0 {:?}, F {:?} for N = {n}",
            h.shape(),
            m0.shape(),
            red.f.shape()
        )));
    }
    let obj = reduce_quadratic(h, red);
    let con = reduce_quadratic(m0, red);
    GtrsProblem::new(obj.n0, obj.p0, obj.b0, con.n0, con.p0, con.b0, nu)
}

/// Projected-gradient stationarity measure for the constrained problem.
///
/// The gradient `g = sum_i 4 (w' M_i w) M_i w` is projected off the constraint
/// normals `{1, M0 w}`; the residual norm is reported relative to `max(1, ||g||)`.
pub fn kkt_residual<T: Scalar>(w: &DVector<T>, moments: &LagMoments<T>, nu: T) -> T {
    let _ = nu;
    let n = w.len();
    let mut g = DVector::zeros(n);
    for m in moments.lags() {
        let mw = m * w;
        g += &mw * (T::lit(4.0) * w.dot(&mw));
    }
    let gnorm = g.norm();
    if gnorm.is_zero() {
        return T::zero();
    }
    let ones = DVector::from_element(n, T::one());
    let normal = moments.m0() * w;
    let basis = orthonormal_pair(&ones, &normal);
    let mut r = g.clone();
    for q in &basis {
        let c = q.dot(&r);
        r -= q * c;
    }
    r.norm() / gnorm.max(T::one())
}

fn orthonormal_pair<T: Scalar>(a: &DVector<T>, b: &DVector<T>) -> Vec<DVector<T>> {
    let mut out: Vec<DVector<T>> = Vec::with_capacity(2);
    for v in [a, b] {
        let scale = v.norm();
        let mut u = v.clone();
        for _ in 0..2 {
            for q in &out {
                let c = q.dot(&u);
                u -= q * c;
            }
        }
        let norm = u.norm();
        if norm > T::lit(1e-10) * scale.max(T::lit(f64::MIN_POSITIVE)) {
            out.push(u / norm);
        }
    }
    out
}

/// Runs the MM iteration of the design problem.
pub fn solve_mrp<T: Scalar>(moments: &LagMoments<T>, cfg: &MrpConfig<T>) -> Result<MrpResult<T>> {
    cfg.validate()?;
    let moments = truncate_lags(moments, cfg.p)?;
    let ones = DVector::from_element(moments.dim(), T::one());
    let red = affine_reduction_for(&ones)?;
    let starts = initial_points(&moments, &red, cfg)?;
    solve_with_budget(
        &moments,
        red,
        starts,
        &|w| kkt_residual(w, &moments, cfg.nu),
        cfg,
    )
}

/// The same iteration carried out in whitened coordinates `w_bar = L' w`, where the
/// variance constraint becomes `||w_bar||^2 = nu` and the budget `c' w_bar = 1`
/// with `c = L^{-1} 1`. Iterates are mapped back by `w = L^{-T} w_bar`.
pub fn solve_mrp_whitened<T: Scalar>(
    moments: &LagMoments<T>,
    cfg: &MrpConfig<T>,
) -> Result<MrpResult<T>> {
    cfg.validate()?;
    let moments = truncate_lags(moments, cfg.p)?;
    let wm = whiten(&moments)?;
    let n = moments.dim();
    let mut mats = vec![DMatrix::identity(n, n)];
    mats.extend(wm.mbars.iter().cloned());
    let white = LagMoments::from_matrices(mats, moments.t_est())?;
    // Same starting points as the original-coordinate run, mapped by L'.
    let ones = DVector::from_element(n, T::one());
    let starts = initial_points(&moments, &affine_reduction_for(&ones)?, cfg)?
        .iter()
        .map(|w| wm.whiten_weights(w))
        .collect();
    let kkt = |w_bar: &DVector<T>| kkt_residual(&wm.unwhiten(w_bar), &moments, cfg.nu);
    let mut res = solve_with_budget(&white, affine_reduction_for(&wm.c)?, starts, &kkt, cfg)?;
    res.w = wm.unwhiten(&res.w);
    for w in &mut res.iterates {
        *w = wm.unwhiten(w);
    }
    res.kkt_residual = kkt_residual(&res.w, &moments, cfg.nu);
    Ok(res)
}

fn truncate_lags<T: Scalar>(moments: &LagMoments<T>, p: usize) -> Result<LagMoments<T>> {
    if p > moments.max_lag() {
        return Err(MrpError::Invalid(format!(
            "lag order {p} exceeds the {} estimated lags",
            moments.max_lag()
        )));
    }
    if p == moments.max_lag() {
        return Ok(moments.clone());
    }
    LagMoments::from_matrices(moments.all()[..=p].to_vec(), moments.t_est())
}

fn initial_points<T: Scalar>(
    moments: &LagMoments<T>,
    red: &AffineReduction<T>,
    cfg: &MrpConfig<T>,
) -> Result<Vec<DVector<T>>> {
    // Level 1 on M0 / nu gives the same points with a nu-independent floor test.
    let m0 = moments.m0() * (T::one() / cfg.nu);
    let count = cfg.starts.unwrap_or(usize::MAX);
    starting_points(&m0, T::one(), red, count).map_err(|e| match e {
        MrpError::Infeasible { nu_min, .. } => MrpError::Infeasible {
            nu: cfg.nu.as_f64(),
            nu_min: nu_min * cfg.nu.as_f64(),
        },
        other => other,
    })
}

/// `kkt` measures stationarity of an iterate in the caller's original
/// coordinates, so both entry points stop under the same rule.
fn solve_with_budget<T: Scalar>(
    moments: &LagMoments<T>,
    red: AffineReduction<T>,
    starts: Vec<DVector<T>>,
    kkt: &dyn Fn(&DVector<T>) -> T,
    cfg: &MrpConfig<T>,
) -> Result<MrpResult<T>> {
    // Work at unit variance level: M_i / nu keeps the argmin and divides the
    // objective by nu^2.
    let inv_nu = T::one() / cfg.nu;
    let scaled: Vec<DMatrix<T>> = moments.all().iter().map(|m| m * inv_nu).collect();
    let scaled = LagMoments::from_matrices(scaled, moments.t_est())?;
    let nu2 = cfg.nu * cfg.nu;

    let wm = whiten(&scaled)?;
    let psi = match psi_bound(&wm, cfg.psi_mode) {
        Ok(psi) => psi,
        Err(MrpError::ZeroObjective) => {
            let w = starts.into_iter().next().expect("at least one start");
            return Ok(MrpResult {
                kkt_residual: kkt(&w),
                objective_trace: vec![T::zero()],
                initial_objective: T::zero(),
                iterates: vec![w.clone(), w.clone()],
                w,
                iterations: 1,
                converged: true,
                psi: T::zero(),
                start_index: 0,
            });
        }
        Err(e) => return Err(e),
    };

    let mut best: Option<MrpResult<T>> = None;
    for (idx, w_init) in starts.into_iter().enumerate() {
        let mut run = mm_loop(&scaled, &red, psi, w_init, kkt, cfg)?;
        run.start_index = idx;
        run.psi = psi * nu2;
        for v in run.objective_trace.iter_mut() {
            *v *= nu2;
        }
        run.initial_objective *= nu2;
        run.kkt_residual = kkt(&run.w);
        let better = match &best {
            None => true,
            Some(b) => run.objective() < b.objective(),
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one start"))
}

fn mm_loop<T: Scalar>(
    moments: &LagMoments<T>,
    red: &AffineReduction<T>,
    psi: T,
    w_init: DVector<T>,
    kkt: &dyn Fn(&DVector<T>) -> T,
    cfg: &MrpConfig<T>,
) -> Result<MrpResult<T>> {
    let nu = T::one();
    let mut w = w_init;
    let mut f = lag_objective(&w, moments);
    let initial_objective = f;
    let mut trace = Vec::new();
    let mut iterates = vec![w.clone()];
    let mut converged = false;
    let tiny = T::lit(f64::MIN_POSITIVE);
    let (w_mv, nu_min) = min_variance_point(moments.m0(), red)?;

    let mm_map = |w: &DVector<T>, iteration: usize| -> Result<DVector<T>> {
        let h = majorizer(w, moments.m0(), moments.lags(), psi);
        let prob = reduce_to_gtrs(&h, moments.m0(), nu, red)?;
        let sol = solve_gtrs(&prob, cfg.gtrs_tol).map_err(|e| MrpError::Subproblem {
            iteration,
            source: Box::new(e),
        })?;
        Ok(retract(&red.lift(&sol.x), &w_mv, moments.m0(), nu - nu_min))
    };

    for iteration in 1..=cfg.max_iter {
        let (w_new, f_new) = if cfg.accelerate {
            squarem_step(&w, iteration, &mm_map, moments, &w_mv, nu - nu_min)?
        } else {
            let w_new = mm_map(&w, iteration)?;
            let f_new = lag_objective(&w_new, moments);
            (w_new, f_new)
        };
        let step = (&w_new - &w).norm() / w.norm().max(T::one());
        let decrease = (f - f_new) / f.abs().max(tiny);

        trace.push(f_new);
        iterates.push(w_new.clone());
        w = w_new;
        f = f_new;

        if f.is_zero() {
            converged = true;
            break;
        }
        if (decrease <= cfg.tol_obj || step <= cfg.tol_w) && kkt(&w) <= cfg.tol_kkt {
            converged = true;
            break;
        }
    }

    Ok(MrpResult {
        w,
        iterations: trace.len(),
        objective_trace: trace,
        initial_objective,
        iterates,
        converged,
        kkt_residual: T::zero(),
        psi,
        start_index: 0,
    })
}

/// One MM step from a point at a given iteration index.
type MmMap<'a, T> = dyn Fn(&DVector<T>, usize) -> Result<DVector<T>> + 'a;

/// One squared-extrapolation step (SQUAREM, Varadhan and Roland) on the MM map.
///
/// From two plain steps `w1 = G(w)`, `w2 = G(w1)` the point
/// `w - 2 a r + a^2 v` with `r = w1 - w`, `v = w2 - 2 w1 + w` and
/// `a = -||r|| / ||v|| <= -1` is mapped back onto the variance ellipsoid and
/// through one more MM step. The result is kept only when it does not lose to
/// `w2`, so the objective still decreases monotonically.
fn squarem_step<T: Scalar>(
    w: &DVector<T>,
    iteration: usize,
    mm_map: &MmMap<'_, T>,
    moments: &LagMoments<T>,
    w_mv: &DVector<T>,
    excess: T,
) -> Result<(DVector<T>, T)> {
    let w1 = mm_map(w, iteration)?;
    let w2 = mm_map(&w1, iteration)?;
    let f2 = lag_objective(&w2, moments);
    let r = &w1 - w;
    let v = &w2 - &w1 - &r;
    let (rn, vn) = (r.norm(), v.norm());
    if !(vn > T::zero()) || !(rn > T::zero()) {
        return Ok((w2, f2));
    }
    let a = -(rn / vn).max(T::one());
    let jump = w - &r * (T::lit(2.0) * a) + &v * (a * a);
    // Both r and v sum to zero, so the budget holds; only the level needs fixing.
    let jump = retract(&jump, w_mv, moments.m0(), excess);
    let w3 = match mm_map(&jump, iteration) {
        Ok(w3) => w3,
        Err(_) => return Ok((w2, f2)),
    };
    let f3 = lag_objective(&w3, moments);
    if f3 <= f2 && w3.iter().all(|x| x.is_finite()) {
        Ok((w3, f3))
    } else {
        Ok((w2, f2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal(rng: &mut ChaCha8Rng) -> f64 {
        rng.sample(StandardNormal)
    }

    #[test]
    fn two_asset_reduction() {
        let red = affine_reduction::<f64>(2).unwrap();
        assert_eq!(red.w0.as_slice(), &[0.5, 0.5]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((red.f[(0, 0)].abs() - s).abs() < 1e-15);
        assert!((red.f[(0, 0)] + red.f[(1, 0)]).abs() < 1e-15);
    }

    #[test]
    fn reduction_is_semi_unitary_and_budget_preserving() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 2..10 {
            let red = affine_reduction::<f64>(n).unwrap();
            let id = red.f.transpose() * &red.f;
            assert!((id - DMatrix::identity(n - 1, n - 1)).amax() <= 1e-12);
            assert!((red.f.row_sum()).amax() <= 1e-12);
            assert!((red.w0.sum() - 1.0).abs() <= 1e-12);
            for _ in 0..100 {
                let x = DVector::from_fn(n - 1, |_, _| 10.0 * normal(&mut rng));
                assert!((red.lift(&x).sum() - 1.0).abs() <= 1e-12);
            }
        }
        assert!(affine_reduction::<f64>(1).is_err());
    }

    #[test]
    fn reduction_is_deterministic() {
        assert_eq!(
            affine_reduction::<f64>(6).unwrap(),
            affine_reduction::<f64>(6).unwrap()
        );
    }

    fn moments_with(m0: DMatrix<f64>, lags: Vec<DMatrix<f64>>) -> LagMoments<f64> {
        let mut mats = vec![m0];
        mats.extend(lags);
        LagMoments::from_matrices(mats, 100).unwrap()
    }

    #[test]
    fn init_on_identity_covariance() {
        let m = moments_with(DMatrix::identity(2, 2), vec![DMatrix::identity(2, 2)]);
        let red = affine_reduction(2).unwrap();
        assert!((min_variance_level(m.m0(), &red).unwrap() - 0.5).abs() < 1e-15);
        let w = feasible_init(&m, 1.0, &red).unwrap();
        let hit_axis = (w[0] - 1.0).abs() < 1e-12 && w[1].abs() < 1e-12
            || (w[1] - 1.0).abs() < 1e-12 && w[0].abs() < 1e-12;
        assert!(hit_axis, "{w}");
    }

    #[test]
    fn init_at_and_below_minimum_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::from_fn(4, 4, |_, _| normal(&mut rng));
        let m0 = &a * a.transpose() + DMatrix::identity(4, 4);
        let ones = DVector::from_element(4, 1.0);
        let nu_min = 1.0 / ones.dot(&(m0.clone().try_inverse().unwrap() * &ones));
        let m = moments_with(m0.clone(), vec![DMatrix::identity(4, 4)]);
        let red = affine_reduction(4).unwrap();
        let w = feasible_init(&m, nu_min, &red).unwrap();
        assert!((quad_form(&m0, &w) - nu_min).abs() <= 1e-8);
        assert!((w.sum() - 1.0).abs() <= 1e-12);
        match feasible_init(&m, nu_min / 2.0, &red) {
            Err(MrpError::Infeasible {
                nu_min: reported, ..
            }) => {
                assert!((reported - nu_min).abs() < 1e-10)
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn majorizer_by_substitution() {
        let m = moments_with(DMatrix::identity(2, 2), vec![DMatrix::identity(2, 2)]);
        let h = build_majorizer(&DVector::from_vec(vec![1.0, 0.0]), &m, 2.0).unwrap();
        assert!((h - DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0]))).amax() < 1e-15);
    }

    #[test]
    fn majorizer_without_psi() {
        let m1 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, -2.0]);
        let m = moments_with(DMatrix::identity(2, 2), vec![m1.clone()]);
        let w = DVector::from_vec(vec![0.3, 0.7]);
        let h = build_majorizer(&w, &m, 0.0).unwrap();
        assert!((h - &m1 * quad_form(&m1, &w)).amax() < 1e-15);
        assert!(build_majorizer(&DVector::from_vec(vec![1.0]), &m, 0.0).is_err());
    }

    #[test]
    fn reduced_problem_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 5;
        let a = DMatrix::from_fn(n, n, |_, _| normal(&mut rng));
        let m0 = &a * a.transpose() + DMatrix::identity(n, n);
        let h = DMatrix::from_fn(n, n, |_, _| normal(&mut rng));
        let h = (&h + h.transpose()) * 0.5;
        let red = affine_reduction(n).unwrap();
        let nu = 10.0 * min_variance_level(&m0, &red).unwrap();
        let prob = reduce_to_gtrs(&h, &m0, nu, &red).unwrap();
        for _ in 0..100 {
            let x = DVector::from_fn(n - 1, |_, _| normal(&mut rng));
            let w = red.lift(&x);
            assert!(
                (prob.objective(&x) - quad_form(&h, &w)).abs()
                    <= 1e-10 * (1.0 + quad_form(&h, &w).abs())
            );
            assert!(
                (prob.constraint(&x) - quad_form(&m0, &w)).abs()
                    <= 1e-10 * (1.0 + quad_form(&m0, &w))
            );
        }
    }

    #[test]
    fn reduced_constraint_for_identity() {
        let red = affine_reduction::<f64>(2).unwrap();
        let prob =
            reduce_to_gtrs(&DMatrix::zeros(2, 2), &DMatrix::identity(2, 2), 1.0, &red).unwrap();
        assert!((prob.n0[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((prob.b0 - 0.5).abs() < 1e-15);
        assert!(prob.p0[0].abs() < 1e-15);
    }

    #[test]
    fn white_noise_moments_stop_immediately() {
        let m = moments_with(
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, 3.0])),
            vec![DMatrix::zeros(3, 3), DMatrix::zeros(3, 3)],
        );
        let res = solve_mrp(&m, &MrpConfig::new(2, 2.0)).unwrap();
        assert_eq!(res.objective_trace, vec![0.0]);
        assert_eq!(res.iterations, 1);
        assert!(res.converged);
        assert!((res.w.sum() - 1.0).abs() < 1e-12);
        assert!((quad_form(m.m0(), &res.w) - 2.0).abs() < 1e-10);
        assert_eq!(kkt_residual(&res.w, &m, 2.0), 0.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = MrpConfig::new(1, 1.0);
        assert!(cfg.validate().is_ok());
        cfg.nu = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = MrpConfig::new(0, 1.0);
        assert!(cfg.validate().is_err());
        cfg.p = 1;
        cfg.max_iter = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn lag_order_beyond_estimate_is_rejected() {
        let m = moments_with(DMatrix::identity(2, 2), vec![DMatrix::identity(2, 2)]);
        assert!(solve_mrp(&m, &MrpConfig::new(2, 1.0)).is_err());
    }
}
