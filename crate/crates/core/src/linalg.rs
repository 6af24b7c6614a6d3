//! Small dense helpers over nalgebra used across the solver modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::scalar::Scalar;

pub(crate) fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

pub(crate) fn quad_form<T: Scalar>(m: &DMatrix<T>, x: &DVector<T>) -> T {
    x.dot(&(m * x))
}

pub(crate) fn cholesky<T: Scalar>(m: &DMatrix<T>) -> Option<Cholesky<T, Dyn>> {
    Cholesky::new(m.clone())
}

/// Eigenvalues of a symmetric matrix in ascending order, with matching eigenvector columns.
pub(crate) fn sym_eigen_sorted<T: Scalar>(m: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub(crate) fn sym_eig_extremes<T: Scalar>(m: &DMatrix<T>) -> (T, T) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let lo = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap(), T::min);
    let hi = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(T::min_value().unwrap(), T::max);
    (lo, hi)
}

/// `L^{-1} A L^{-T}` for a lower-triangular factor `L`.
pub(crate) fn congruence_inv<T: Scalar>(l: &DMatrix<T>, a: &DMatrix<T>) -> DMatrix<T> {
    let left = l
        .solve_lower_triangular(a)
        .expect("Cholesky factor has nonzero diagonal");
    let both = l
        .solve_lower_triangular(&left.transpose())
        .expect("Cholesky factor has nonzero diagonal");
    symmetrize(&both)
}
