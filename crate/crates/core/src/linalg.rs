use nalgebra::{DMatrix, SymmetricEigen};

use crate::field::Field;

/// Largest eigenvalue of a Hermitian matrix (zero for an empty matrix).
pub(crate) fn largest_eigenvalue<T: Field>(m: DMatrix<T>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let herm = (&m + m.adjoint()).map(|x| x * T::from_real(0.5));
    SymmetricEigen::new(herm)
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Scales column `j` of `m` by `w[j]` in place.
pub(crate) fn scale_columns<T: Field>(m: &mut DMatrix<T>, w: &[f64]) {
    debug_assert_eq!(m.ncols(), w.len());
    for (j, mut col) in m.column_iter_mut().enumerate() {
        let s = T::from_real(w[j]);
        col.iter_mut().for_each(|x| *x *= s);
    }
}

pub(crate) fn is_finite<T: Field>(m: &DMatrix<T>) -> bool {
    m.iter().all(|x| x.re().is_finite() && x.im().is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Complex64;

    #[test]
    fn largest_eigenvalue_of_hermitian() {
        let m = DMatrix::from_row_slice(2, 2, &[
            Complex64::new(2.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(2.0, 0.0),
        ]);
        assert!((largest_eigenvalue(m) - 3.0).abs() < 1e-12);
        assert_eq!(largest_eigenvalue(DMatrix::<f64>::zeros(0, 0)), 0.0);
    }

    #[test]
    fn columns_scale_independently() {
        let mut m = DMatrix::from_element(2, 3, 1.0);
        scale_columns(&mut m, &[1.0, -2.0, 0.5]);
        assert_eq!(m.row(1).iter().cloned().collect::<Vec<_>>(), vec![1.0, -2.0, 0.5]);
        assert!(is_finite(&m));
        m[(0, 0)] = f64::NAN;
        assert!(!is_finite(&m));
    }
}
