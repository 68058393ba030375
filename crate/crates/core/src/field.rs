//! Scalar fields the library computes over.
//!
//! Real spaces (the heat instance, scalar test systems) use `f64`; the
//! Schrödinger instance needs `Complex64`. Everything generic is written
//! against [`Field`], a thin extension of nalgebra's `ComplexField`.

use nalgebra::{ComplexField, DMatrix};

pub use nalgebra::Complex;

pub type Complex64 = Complex<f64>;

/// Whether a space carries real or complex coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scalars {
    Real,
    Complex,
}

pub trait Field: ComplexField<RealField = f64> + Copy + Send + Sync + 'static {
    const SCALARS: Scalars;

    /// Builds a scalar from real and imaginary parts. Real fields drop `im`.
    fn from_parts(re: f64, im: f64) -> Self;

    fn re(self) -> f64 {
        self.real()
    }

    fn im(self) -> f64 {
        self.imaginary()
    }
}

impl Field for f64 {
    const SCALARS: Scalars = Scalars::Real;

    fn from_parts(re: f64, _im: f64) -> Self {
        re
    }
}

impl Field for Complex64 {
    const SCALARS: Scalars = Scalars::Complex;

    fn from_parts(re: f64, im: f64) -> Self {
        Complex::new(re, im)
    }
}

pub(crate) fn lift_matrix<T: Field>(m: &DMatrix<f64>) -> DMatrix<T> {
    m.map(T::from_real)
}
