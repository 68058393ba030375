//! Finite-dimensional Hilbert spaces and the linear maps between them.
//!
//! A space is a coordinate vector space plus a symmetric positive-definite
//! Gram matrix. Different metrics on the same coordinates (L², H⁻¹, ...)
//! are different spaces.

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{invalid, Result, SwlpError};
use crate::field::{lift_matrix, Field, Scalars};
use crate::linalg::largest_eigenvalue;

#[derive(Debug)]
struct SpaceData {
    label: String,
    scalars: Scalars,
    gram: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    diagonal: Option<Vec<f64>>,
}

/// A Hilbert space `(ℝⁿ or ℂⁿ, ⟨x, y⟩ = xᵀ G ȳ)`. Cheap to clone.
#[derive(Debug, Clone)]
pub struct DiscreteSpace(Arc<SpaceData>);

impl DiscreteSpace {
    pub fn new(label: impl Into<String>, gram: DMatrix<f64>, scalars: Scalars) -> Result<Self> {
        let label = label.into();
        let n = gram.nrows();
        if n == 0 || gram.ncols() != n {
            return Err(SwlpError::DimensionMismatch {
                space: label,
                expected: n.max(1),
                found: gram.ncols(),
            });
        }
        let scale = gram.amax().max(f64::MIN_POSITIVE);
        let asym = (&gram - gram.transpose()).amax();
        if !gram.iter().all(|g| g.is_finite()) || asym > 1e-12 * scale {
            return Err(SwlpError::NotPositiveDefinite { space: label });
        }
        let chol = Cholesky::new(gram.clone())
            .ok_or_else(|| SwlpError::NotPositiveDefinite { space: label.clone() })?;
        let is_diag = (0..n).all(|i| (0..n).all(|j| i == j || gram[(i, j)] == 0.0));
        let diagonal = is_diag.then(|| gram.diagonal().iter().cloned().collect());
        Ok(Self(Arc::new(SpaceData { label, scalars, gram, chol, diagonal })))
    }

    pub fn euclidean(label: impl Into<String>, dim: usize, scalars: Scalars) -> Result<Self> {
        Self::new(label, DMatrix::identity(dim, dim), scalars)
    }

    /// Space with diagonal Gram `diag(weights)`.
    pub fn weighted(label: impl Into<String>, weights: &[f64], scalars: Scalars) -> Result<Self> {
        Self::new(label, DMatrix::from_diagonal(&DVector::from_column_slice(weights)), scalars)
    }

    pub fn dim(&self) -> usize {
        self.0.gram.nrows()
    }

    pub fn label(&self) -> &str {
        &self.0.label
    }

    pub fn scalars(&self) -> Scalars {
        self.0.scalars
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.0.gram
    }

    /// Lower Cholesky factor `L` with `G = L Lᵀ`.
    pub fn gram_factor(&self) -> DMatrix<f64> {
        self.0.chol.l()
    }

    pub fn gram_inverse(&self) -> DMatrix<f64> {
        self.0.chol.inverse()
    }

    /// Same coordinates and metric (label and dimension match, Gram equal).
    pub fn same_as(&self, other: &DiscreteSpace) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.label() == other.label()
                && self.dim() == other.dim()
                && self.scalars() == other.scalars()
                && self.gram() == other.gram())
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(SwlpError::DimensionMismatch {
                space: self.label().to_string(),
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }

    pub(crate) fn check_field<T: Field>(&self) -> Result<()> {
        if T::SCALARS != self.scalars() {
            return invalid(format!(
                "space {} is {:?} but the computation uses {:?} scalars",
                self.label(),
                self.scalars(),
                T::SCALARS
            ));
        }
        Ok(())
    }

    /// `G x` lifted to the working field.
    pub(crate) fn apply_gram<T: Field>(&self, x: &DMatrix<T>) -> DMatrix<T> {
        match &self.0.diagonal {
            Some(d) => {
                let mut out = x.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    let w = T::from_real(d[i]);
                    row.iter_mut().for_each(|v| *v *= w);
                }
                out
            }
            None => lift_matrix::<T>(&self.0.gram) * x,
        }
    }

    /// `G⁻¹ x` lifted to the working field.
    pub(crate) fn solve_gram<T: Field>(&self, x: &DMatrix<T>) -> DMatrix<T> {
        match &self.0.diagonal {
            Some(d) => {
                let mut out = x.clone();
                for (i, mut row) in out.row_iter_mut().enumerate() {
                    let w = T::from_real(1.0 / d[i]);
                    row.iter_mut().for_each(|v| *v *= w);
                }
                out
            }
            None => lift_matrix::<T>(&self.gram_inverse()) * x,
        }
    }

    pub fn inner<T: Field>(&self, x: &DVector<T>, y: &DVector<T>) -> Result<T> {
        self.check_len(x.len())?;
        self.check_len(y.len())?;
        let gy = match &self.0.diagonal {
            Some(d) => DVector::from_iterator(y.len(), y.iter().zip(d).map(|(v, w)| v.scale(*w))),
            None => lift_matrix::<T>(&self.0.gram) * y,
        };
        Ok(x.iter().zip(gy.iter()).fold(T::zero(), |acc, (a, b)| acc + *a * b.conjugate()))
    }

    pub fn norm_sq<T: Field>(&self, x: &DVector<T>) -> Result<f64> {
        Ok(self.inner(x, x)?.re().max(0.0))
    }

    pub fn norm<T: Field>(&self, x: &DVector<T>) -> Result<f64> {
        Ok(self.norm_sq(x)?.sqrt())
    }

    /// Squared norms of every column of a `dim × P` block.
    pub fn column_norms_sq<T: Field>(&self, x: &DMatrix<T>) -> Vec<f64> {
        debug_assert_eq!(x.nrows(), self.dim());
        let gx = self.apply_gram(x);
        x.column_iter()
            .zip(gx.column_iter())
            .map(|(a, b)| a.iter().zip(b.iter()).map(|(p, q)| (p.conjugate() * *q).re()).sum::<f64>().max(0.0))
            .collect()
    }

    /// Row vector `w` such that `⟨x, y⟩ = w · x` for every `x`.
    pub(crate) fn pairing_weights<T: Field>(&self, y: &DVector<T>) -> DVector<T> {
        let m = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
        self.apply_gram(&m).column(0).map(|v| v.conjugate())
    }
}

/// A linear map between two discrete spaces, stored as its coordinate matrix.
#[derive(Debug, Clone)]
pub struct LinearMap<T: Field> {
    domain: DiscreteSpace,
    codomain: DiscreteSpace,
    matrix: DMatrix<T>,
}

impl<T: Field> LinearMap<T> {
    pub fn new(domain: DiscreteSpace, codomain: DiscreteSpace, matrix: DMatrix<T>) -> Result<Self> {
        domain.check_field::<T>()?;
        codomain.check_field::<T>()?;
        codomain.check_len(matrix.nrows())?;
        domain.check_len(matrix.ncols())?;
        Ok(Self { domain, codomain, matrix })
    }

    pub fn zero(domain: DiscreteSpace, codomain: DiscreteSpace) -> Result<Self> {
        let m = DMatrix::zeros(codomain.dim(), domain.dim());
        Self::new(domain, codomain, m)
    }

    pub fn identity(space: DiscreteSpace) -> Result<Self> {
        let n = space.dim();
        Self::new(space.clone(), space, DMatrix::identity(n, n))
    }

    pub fn domain(&self) -> &DiscreteSpace {
        &self.domain
    }

    pub fn codomain(&self) -> &DiscreteSpace {
        &self.codomain
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn apply(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.domain.check_len(x.len())?;
        Ok(&self.matrix * x)
    }

    /// Gram-weighted adjoint `M* = G_dom⁻¹ Mᴴ G_cod`.
    pub fn adjoint(&self) -> LinearMap<T> {
        let mh_gc = self.codomain.apply_gram(&self.matrix).adjoint();
        let matrix = self.domain.solve_gram(&mh_gc);
        LinearMap { domain: self.codomain.clone(), codomain: self.domain.clone(), matrix }
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &LinearMap<T>) -> Result<LinearMap<T>> {
        if !inner.codomain.same_as(&self.domain) {
            return Err(SwlpError::IncompatibleSpaces {
                left: format!("{}[{}]", self.domain.label(), self.domain.dim()),
                right: format!("{}[{}]", inner.codomain.label(), inner.codomain.dim()),
            });
        }
        Ok(LinearMap {
            domain: inner.domain.clone(),
            codomain: self.codomain.clone(),
            matrix: &self.matrix * &inner.matrix,
        })
    }

    /// Operator norm from the domain metric to the codomain metric.
    pub fn operator_norm(&self) -> f64 {
        gram_operator_norm(&self.matrix, &self.domain, &self.codomain)
    }
}

/// `sup |M x|_cod / |x|_dom` for a raw coordinate matrix.
pub(crate) fn gram_operator_norm<T: Field>(m: &DMatrix<T>, dom: &DiscreteSpace, cod: &DiscreteSpace) -> f64 {
    // |Mx|²_cod = x̃ᴴ (L_d⁻¹ Mᴴ G_c M L_d⁻ᴴ) x̃ with x = L_d⁻ᴴ x̃.
    let ld_inv = lift_matrix::<T>(&dom.gram_factor().try_inverse().expect("cholesky factor is invertible"));
    let core = m.adjoint() * cod.apply_gram(m);
    let q = &ld_inv * core * ld_inv.adjoint();
    largest_eigenvalue(q).max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Complex64;
    use approx::assert_abs_diff_eq;

    fn real(dim: usize) -> DiscreteSpace {
        DiscreteSpace::euclidean("R", dim, Scalars::Real).unwrap()
    }

    #[test]
    fn inner_orthogonal_axes() {
        let s = real(2);
        let v = s.inner(&DVector::from_vec(vec![1.0, 0.0]), &DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn inner_weighted_diagonal() {
        let s = DiscreteSpace::weighted("W", &[1.0, 0.25], Scalars::Real).unwrap();
        let x = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(s.inner(&x, &x).unwrap(), 0.25);
    }

    #[test]
    fn inner_is_conjugate_linear_in_second_slot() {
        let s = DiscreteSpace::euclidean("C", 1, Scalars::Complex).unwrap();
        let i = Complex64::new(0.0, 1.0);
        let x = DVector::from_vec(vec![Complex64::new(1.0, 0.0)]);
        let y = DVector::from_vec(vec![i]);
        assert_eq!(s.inner(&x, &y).unwrap(), -i);
        assert_eq!(s.inner(&y, &x).unwrap(), i);
    }

    #[test]
    fn inner_dimension_error_names_space() {
        let s = DiscreteSpace::euclidean("Utilde", 2, Scalars::Real).unwrap();
        let err = s.inner(&DVector::from_vec(vec![1.0]), &DVector::from_vec(vec![1.0])).unwrap_err();
        assert!(matches!(err, SwlpError::DimensionMismatch { ref space, .. } if space == "Utilde"));
    }

    #[test]
    fn rejects_indefinite_gram() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            DiscreteSpace::new("bad", g, Scalars::Real),
            Err(SwlpError::NotPositiveDefinite { .. })
        ));
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(DiscreteSpace::new("asym", g, Scalars::Real).is_err());
    }

    #[test]
    fn euclidean_adjoint_is_transpose() {
        let s = real(2);
        let m = LinearMap::new(s.clone(), s, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap();
        assert_eq!(m.adjoint().matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]));
    }

    #[test]
    fn weighted_adjoint_of_identity() {
        let dom = DiscreteSpace::weighted("D", &[2.0, 1.0], Scalars::Real).unwrap();
        let cod = real(2);
        let m: LinearMap<f64> = LinearMap::new(dom, cod, DMatrix::identity(2, 2)).unwrap();
        let a = m.adjoint();
        assert_abs_diff_eq!(a.matrix()[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(a.matrix()[(1, 1)], 1.0, epsilon = 1e-15);
        assert_eq!(a.matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn compose_checks_inner_space() {
        let a = real(2);
        let b = DiscreteSpace::euclidean("other", 2, Scalars::Real).unwrap();
        let f = LinearMap::<f64>::identity(a.clone()).unwrap();
        let g = LinearMap::<f64>::identity(b).unwrap();
        assert!(matches!(f.compose(&g), Err(SwlpError::IncompatibleSpaces { .. })));
        assert!(f.compose(&f).is_ok());
    }

    #[test]
    fn field_must_match_space() {
        let s = real(2);
        assert!(LinearMap::<Complex64>::identity(s).is_err());
    }

    #[test]
    fn operator_norm_respects_metrics() {
        // x ↦ x from weight 4 to weight 1: |x|_cod = |x|_dom / 2.
        let dom = DiscreteSpace::weighted("D", &[4.0], Scalars::Real).unwrap();
        let cod = real(1);
        let m = LinearMap::new(dom, cod, DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert_abs_diff_eq!(m.operator_norm(), 0.5, epsilon = 1e-14);
    }
}
