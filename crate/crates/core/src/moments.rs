//! Lag moments of a centered spread panel, their whitened form, and the
//! portmanteau statistic built from them.

use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{MrpError, Result};
use crate::linalg::{cholesky, congruence_inv, quad_form, sym_eig_extremes, symmetrize};
use crate::market::SpreadPanel;
use crate::scalar::Scalar;

/// Relative eigenvalue floor below which `M0` counts as singular.
pub const DEGENERACY_RATIO: f64 = 1e-12;

/// Symmetrized autocovariance matrices `M0..Mp` of a centered spread panel.
///
/// Normalization is `1/T` for every lag, so the whole family comes from one
/// consistent estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct LagMoments<T: Scalar> {
    mats: Vec<DMatrix<T>>,
    t_est: usize,
    mean: Option<DVector<T>>,
}

impl<T: Scalar> LagMoments<T> {
    /// Builds moments from explicit matrices `[M0, M1, .., Mp]`.
    ///
    /// Every matrix is symmetrized and `M0` must be positive definite.
    pub fn from_matrices(mats: Vec<DMatrix<T>>, t_est: usize) -> Result<Self> {
        if mats.len() < 2 {
            return Err(MrpError::Invalid(
                "need M0 and at least one lag matrix".into(),
            ));
        }
        let n = mats[0].nrows();
        if n == 0 {
            return Err(MrpError::Dimension("empty moment matrices".into()));
        }
        if let Some(i) = mats.iter().position(|m| m.shape() != (n, n)) {
            return Err(MrpError::Dimension(format!(
                "M{i} has shape {:?}, expected {n}x{n}",
                mats[i].shape()
            )));
        }
        let mats: Vec<_> = mats.iter().map(symmetrize).collect();
        check_positive_definite(&mats[0])?;
        Ok(Self {
            mats,
            t_est,
            mean: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.mats[0].nrows()
    }

    /// Largest lag `p`.
    pub fn max_lag(&self) -> usize {
        self.mats.len() - 1
    }

    pub fn t_est(&self) -> usize {
        self.t_est
    }

    pub fn m0(&self) -> &DMatrix<T> {
        &self.mats[0]
    }

    /// `M_i` for `i` in `0..=p`.
    pub fn lag(&self, i: usize) -> &DMatrix<T> {
        &self.mats[i]
    }

    /// `M1..Mp`.
    pub fn lags(&self) -> &[DMatrix<T>] {
        &self.mats[1..]
    }

    pub fn all(&self) -> &[DMatrix<T>] {
        &self.mats
    }

    /// Sample mean used for centering, when estimated from data.
    pub fn mean(&self) -> Option<&DVector<T>> {
        self.mean.as_ref()
    }

    /// Same moments expressed for `w = S v`, i.e. `S' M_i S`.
    pub fn transformed(&self, s: &DMatrix<T>) -> Result<Self> {
        let mats = self.mats.iter().map(|m| s.transpose() * m * s).collect();
        Self::from_matrices(mats, self.t_est)
    }
}

fn check_positive_definite<T: Scalar>(m0: &DMatrix<T>) -> Result<()> {
    let (lo, hi) = sym_eig_extremes(m0);
    if !(hi > T::zero()) || lo <= T::lit(DEGENERACY_RATIO) * hi {
        return Err(MrpError::Degenerate(format!(
            "M0 eigenvalues span [{lo}, {hi}]"
        )));
    }
    Ok(())
}

/// Centers the spreads by their sample mean and estimates `M0..Mp`.
pub fn estimate_moments<T: Scalar>(spreads: &SpreadPanel<T>, p: usize) -> Result<LagMoments<T>> {
    estimate_from_series(spreads.values(), p)
}

/// Same as [`estimate_moments`] on a bare `T x N` matrix.
pub fn estimate_from_series<T: Scalar>(values: &DMatrix<T>, p: usize) -> Result<LagMoments<T>> {
    let (t, n) = values.shape();
    if p < 1 {
        return Err(MrpError::Invalid("lag order p must be at least 1".into()));
    }
    if t <= p + 1 {
        return Err(MrpError::InsufficientLength {
            len: t,
            needed: p + 2,
        });
    }
    let scale = T::one() / T::from_usize(t).unwrap();
    let mean = values.row_mean().transpose();
    let mut centered = values.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }

    let mut mats = Vec::with_capacity(p + 1);
    for lag in 0..=p {
        let head = centered.rows(0, t - lag);
        let tail = centered.rows(lag, t - lag);
        let raw = head.transpose() * tail * scale;
        mats.push(symmetrize(&raw));
    }
    debug_assert_eq!(mats[0].nrows(), n);
    check_positive_definite(&mats[0])?;
    Ok(LagMoments {
        mats,
        t_est: t,
        mean: Some(mean),
    })
}

/// `sum_i (w' M_i w)^2` over lags `1..=p`: the quantity the design minimizes.
pub fn lag_objective<T: Scalar>(w: &DVector<T>, moments: &LagMoments<T>) -> T {
    moments
        .lags()
        .iter()
        .map(|m| {
            let q = quad_form(m, w);
            q * q
        })
        .fold(T::zero(), |a, b| a + b)
}

/// Portmanteau statistic `T * sum_i rho_i^2` of the portfolio `w`.
pub fn portmanteau<T: Scalar>(w: &DVector<T>, moments: &LagMoments<T>) -> Result<T> {
    if w.len() != moments.dim() {
        return Err(MrpError::Dimension(format!(
            "weight length {} vs {} spreads",
            w.len(),
            moments.dim()
        )));
    }
    let var = quad_form(moments.m0(), w);
    if !(var > T::zero()) {
        return Err(MrpError::Invalid(format!(
            "portfolio variance {var} is not positive"
        )));
    }
    let sum = moments
        .lags()
        .iter()
        .map(|m| {
            let rho = quad_form(m, w) / var;
            rho * rho
        })
        .fold(T::zero(), |a, b| a + b);
    Ok(T::from_usize(moments.t_est()).unwrap() * sum)
}

/// Lag moments in the coordinates `w_bar = L' w` where `M0 = L L'`.
#[derive(Debug, Clone)]
pub struct WhitenedMoments<T: Scalar> {
    /// Lower-triangular Cholesky factor of `M0`.
    pub l: DMatrix<T>,
    /// `L^{-1} M_i L^{-T}` for `i = 1..=p`.
    pub mbars: Vec<DMatrix<T>>,
    /// `L^{-1} 1`, the budget vector in whitened coordinates.
    pub c: DVector<T>,
    /// `G_ij = tr(Mbar_i Mbar_j)`, the Gram matrix of the vectorized `Mbar_i`.
    pub gram: DMatrix<T>,
}

impl<T: Scalar> WhitenedMoments<T> {
    /// Maps whitened weights back to the original coordinates, `w = L^{-T} w_bar`.
    pub fn unwhiten(&self, w_bar: &DVector<T>) -> DVector<T> {
        self.l
            .transpose()
            .solve_upper_triangular(w_bar)
            .expect("Cholesky factor has nonzero diagonal")
    }

    pub fn whiten_weights(&self, w: &DVector<T>) -> DVector<T> {
        self.l.transpose() * w
    }
}

pub fn whiten<T: Scalar>(moments: &LagMoments<T>) -> Result<WhitenedMoments<T>> {
    let chol = cholesky(moments.m0())
        .ok_or_else(|| MrpError::Degenerate("Cholesky factorization of M0 failed".into()))?;
    let l = chol.l();
    let mbars: Vec<_> = moments
        .lags()
        .iter()
        .map(|m| congruence_inv(&l, m))
        .collect();
    let n = moments.dim();
    let c = l
        .solve_lower_triangular(&DVector::from_element(n, T::one()))
        .expect("Cholesky factor has nonzero diagonal");
    let p = mbars.len();
    let mut gram = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let g = mbars[i].dot(&mbars[j]);
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    Ok(WhitenedMoments { l, mbars, c, gram })
}

/// Choice of the scalar `psi` with `psi * I >= Mbar`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PsiMode {
    /// Exact largest eigenvalue of `Mbar`, through the `p x p` Gram matrix.
    #[default]
    Spectral,
    /// Frobenius norm of `Mbar`; looser but trivially cheap.
    Frobenius,
}

impl FromStr for PsiMode {
    type Err = MrpError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spectral" => Ok(Self::Spectral),
            "frobenius" => Ok(Self::Frobenius),
            other => Err(MrpError::Invalid(format!("unknown psi mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for PsiMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Spectral => "spectral",
            Self::Frobenius => "frobenius",
        })
    }
}

/// Majorization constant for `Mbar = sum_i vec(Mbar_i) vec(Mbar_i)'`.
///
/// `Mbar = V V'` shares its nonzero spectrum with `G = V' V`, so the
/// `N^2 x N^2` matrix is never formed.
pub fn psi_bound<T: Scalar>(wm: &WhitenedMoments<T>, mode: PsiMode) -> Result<T> {
    if wm.gram.iter().all(|g| g.is_zero()) {
        return Err(MrpError::ZeroObjective);
    }
    let psi = match mode {
        PsiMode::Spectral => sym_eig_extremes(&wm.gram).1,
        PsiMode::Frobenius => wm.gram.norm(),
    };
    if !(psi > T::zero()) {
        return Err(MrpError::ZeroObjective);
    }
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::SpreadPanel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn panel(values: DMatrix<f64>) -> SpreadPanel<f64> {
        let n = values.ncols();
        SpreadPanel::from_parts(values, DMatrix::identity(n, n)).unwrap()
    }

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&a + a.transpose()) * 0.5
    }

    fn random_pd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.5
    }

    #[test]
    fn scalar_series_by_hand() {
        let m = estimate_moments(
            &panel(DMatrix::from_column_slice(3, 1, &[1.0, -1.0, 0.0])),
            1,
        )
        .unwrap();
        assert!((m.m0()[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.lag(1)[(0, 0)] + 1.0 / 3.0).abs() < 1e-15);
        let por = portmanteau(&DVector::from_element(1, 1.0), &m).unwrap();
        assert!((por - 0.75).abs() < 1e-14);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let err = estimate_moments(&panel(DMatrix::from_element(10, 1, 5.0)), 1).unwrap_err();
        assert!(matches!(err, MrpError::Degenerate(_)));
    }

    #[test]
    fn too_few_samples() {
        let err = estimate_moments(&panel(DMatrix::from_element(3, 1, 1.0)), 2).unwrap_err();
        assert!(matches!(err, MrpError::InsufficientLength { .. }));
    }

    #[test]
    fn estimator_matches_direct_double_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (t, n, p) = (40, 3, 3);
        let x = DMatrix::from_fn(t, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m = estimate_moments(&panel(x.clone()), p).unwrap();
        let mean: Vec<f64> = (0..n).map(|j| x.column(j).sum() / t as f64).collect();
        for lag in 0..=p {
            for a in 0..n {
                for b in 0..n {
                    let mut s_ab = 0.0;
                    let mut s_ba = 0.0;
                    for k in 0..t - lag {
                        s_ab += (x[(k, a)] - mean[a]) * (x[(k + lag, b)] - mean[b]);
                        s_ba += (x[(k, b)] - mean[b]) * (x[(k + lag, a)] - mean[a]);
                    }
                    let expect = 0.5 * (s_ab + s_ba) / t as f64;
                    assert!((m.lag(lag)[(a, b)] - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn white_noise_lags_are_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = DMatrix::from_fn(100_000, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m = estimate_moments(&panel(x), 3).unwrap();
        let base = m.m0().norm();
        for lag in m.lags() {
            assert!(lag.norm() / base <= 0.05);
        }
    }

    #[test]
    fn exact_white_noise_portmanteau_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m0 = random_pd(&mut rng, 4);
        let m = LagMoments::from_matrices(vec![m0, DMatrix::zeros(4, 4), DMatrix::zeros(4, 4)], 50)
            .unwrap();
        let w = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
        assert_eq!(portmanteau(&w, &m).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_whitening_by_hand() {
        let m0 = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0f64, 1.0]));
        let m = LagMoments::from_matrices(vec![m0, DMatrix::identity(2, 2)], 10).unwrap();
        let wm = whiten(&m).unwrap();
        assert!(
            (wm.l.clone() - DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]))).amax()
                < 1e-15
        );
        assert!((wm.c.clone() - DVector::from_vec(vec![0.5, 1.0])).amax() < 1e-15);
    }

    #[test]
    fn identity_whitening_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m1 = random_sym(&mut rng, 3);
        let m = LagMoments::from_matrices(vec![DMatrix::identity(3, 3), m1.clone()], 10).unwrap();
        let wm = whiten(&m).unwrap();
        assert!((&wm.mbars[0] - &m1).amax() < 1e-14);
        assert!((wm.c.clone() - DVector::from_element(3, 1.0)).amax() < 1e-15);
    }

    #[test]
    fn whitening_reconstructs_m0() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 2..7 {
            let m0 = random_pd(&mut rng, n);
            let m =
                LagMoments::from_matrices(vec![m0.clone(), random_sym(&mut rng, n)], 10).unwrap();
            let wm = whiten(&m).unwrap();
            let rel = (&wm.l * wm.l.transpose() - &m0).norm() / m0.norm();
            assert!(rel <= 1e-10);
            let id = congruence_inv(&wm.l, &m0);
            assert!((id - DMatrix::identity(n, n)).norm() <= 1e-10);
        }
    }

    #[test]
    fn psi_for_identity_lag() {
        let m = LagMoments::<f64>::from_matrices(
            vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
            5,
        )
        .unwrap();
        let wm = whiten(&m).unwrap();
        // ||vec(I_2)||^2 = 2; rank one, so both bounds coincide.
        assert!((wm.gram[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((psi_bound(&wm, PsiMode::Spectral).unwrap() - 2.0).abs() < 1e-12);
        assert!((psi_bound(&wm, PsiMode::Frobenius).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn psi_needs_nonzero_lags() {
        let m = LagMoments::<f64>::from_matrices(
            vec![DMatrix::identity(2, 2), DMatrix::zeros(2, 2)],
            5,
        )
        .unwrap();
        let wm = whiten(&m).unwrap();
        assert!(matches!(
            psi_bound(&wm, PsiMode::Spectral),
            Err(MrpError::ZeroObjective)
        ));
    }

    #[test]
    fn psi_mode_parsing() {
        assert_eq!("Spectral".parse::<PsiMode>().unwrap(), PsiMode::Spectral);
        assert_eq!("frobenius".parse::<PsiMode>().unwrap(), PsiMode::Frobenius);
        assert!("max".parse::<PsiMode>().is_err());
    }

    #[test]
    fn single_precision_path() {
        let x = DMatrix::<f32>::from_fn(50, 2, |i, j| ((i * 7 + j * 3) % 11) as f32 - 5.0);
        let p = SpreadPanel::from_parts(x, DMatrix::identity(2, 2)).unwrap();
        let m = estimate_moments(&p, 2).unwrap();
        let wm = whiten(&m).unwrap();
        let psi = psi_bound(&wm, PsiMode::Spectral).unwrap();
        assert!(psi > 0.0);
        let por = portmanteau(&DVector::from_vec(vec![1.0f32, -0.5]), &m).unwrap();
        assert!(por >= 0.0 && por.is_finite());
    }
}
